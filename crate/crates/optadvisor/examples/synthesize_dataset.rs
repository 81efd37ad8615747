//! Generate a synthetic profile dataset with known ground-truth speedups.
//!
//! The generator emits a complete version lattice: every combination of six
//! optimizations for each program, input, and repeated run, plus a
//! dataset.json sidecar declaring the injected true speedup of every
//! optimization on every input.
//!
//! ```bash
//! cargo run -p optadvisor --example synthesize_dataset
//! ```

use optadvisor::evaluation::{generate, write_database, write_dataset, SynthConfig};

fn main() -> optadvisor::Result<()> {
    let config = SynthConfig::with_defaults(42, 0.02);
    let dataset = generate(&config)?;

    println!("generated {} records:", dataset.records.len());
    for program in &dataset.manifest.programs {
        let count = dataset
            .records
            .iter()
            .filter(|r| r.program == program.name)
            .count();
        println!(
            "  {}: {} inputs x 3 runs x {} versions = {count} records",
            program.name,
            program.inputs.len(),
            1 << program.optimizations.len(),
        );
    }

    println!("\ninjected ground truth (speedup per optimization, smallest input):");
    for program in &dataset.manifest.programs {
        let first = &program.inputs[0];
        let effects: Vec<String> = first
            .true_speedups
            .iter()
            .map(|(opt, s)| format!("{opt}={s:.3}"))
            .collect();
        println!(
            "  {}/{}: {}",
            program.name,
            first.input_id,
            effects.join("  ")
        );
    }

    let out = std::env::temp_dir().join("optadvisor-example-dataset");
    if out.exists() {
        std::fs::remove_dir_all(&out).ok();
    }
    write_dataset(&dataset, &out)?;
    write_database(&dataset, &out.join("db"))?;
    println!("\nwrote dataset and database under {}", out.display());
    println!(
        "try: optadvisor evaluate --dataset {} --experiment 1 --learner ibk --k 1 --report /tmp/e1",
        out.display()
    );
    Ok(())
}
