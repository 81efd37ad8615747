fn main() {
    std::process::exit(optadvisor::cli::run());
}
