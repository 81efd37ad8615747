//! Command-line surface: database management, training, recommendation,
//! evaluation, and synthetic dataset generation.
//!
//! Exit codes: 0 on success, 1 on domain errors, 2 on usage errors. Every
//! domain error prints one `error[CODE]: message` line to stderr so scripts
//! can grep for the code.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::evaluation::{self, ExperimentSpec, SynthConfig};
use crate::learners::{LearnerKind, ModelBundle, ProseEntry};
use crate::optdb::{self, EntryManifest};
use crate::profile;
use crate::recommend::{self, ReportConfig};

#[derive(Parser, Debug)]
#[command(
    name = "optadvisor",
    version,
    about = "Profile-driven speedup predictions and optimization suggestions for GPU kernels"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LearnerArg {
    /// Instance-based k-nearest-neighbor regression.
    Ibk,
    /// M5-style model tree.
    M5p,
}

impl From<LearnerArg> for LearnerKind {
    fn from(value: LearnerArg) -> LearnerKind {
        match value {
            LearnerArg::Ibk => LearnerKind::Ibk,
            LearnerArg::M5p => LearnerKind::M5p,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Inspect or edit an optimization database.
    Db {
        #[command(subcommand)]
        action: DbAction,
    },
    /// Train one speedup model per database entry and write a model bundle.
    Train(TrainArgs),
    /// Predict speedups for a profiled kernel and print ranked suggestions.
    Recommend(RecommendArgs),
    /// Run one of the six standard train/test evaluation protocols.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic dataset with known ground-truth speedups.
    Synth(SynthArgs),
}

#[derive(Subcommand, Debug)]
enum DbAction {
    /// List entries: id, name, and sample count per line.
    List {
        #[arg(long, value_name = "DIR")]
        db: PathBuf,
    },
    /// Add a new entry (without samples; contribute profiles separately).
    Add {
        /// Entry id (directory name within the database).
        id: String,
        #[arg(long, value_name = "DIR")]
        db: PathBuf,
        /// Human-readable name; defaults to the uppercased id.
        #[arg(long)]
        name: Option<String>,
        #[arg(long, default_value = "")]
        description: String,
        #[arg(long, default_value = "")]
        example: String,
    },
    /// Remove an entry and its profiles.
    Remove {
        id: String,
        #[arg(long, value_name = "DIR")]
        db: PathBuf,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_name = "DIR")]
    db: PathBuf,
    #[arg(long, value_enum)]
    learner: LearnerArg,
    /// Neighbor count for ibk; ignored by m5p.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    k: u32,
    /// Output path of the model bundle.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RecommendArgs {
    /// Model bundle written by `train`.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Profile of the user's kernel in canonical CSV form.
    #[arg(long, value_name = "CSV")]
    profile: PathBuf,
    /// Kernel to analyze when the profile holds several.
    #[arg(long, value_name = "NAME")]
    kernel: Option<String>,
    /// Maximum number of recommendations to display.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    top: u32,
    /// Minimum predicted speedup worth recommending.
    #[arg(long, default_value_t = 1.05)]
    threshold: f64,
    /// Include the entry descriptions and examples in the output.
    #[arg(long)]
    explain: bool,
    /// Emit the machine-readable JSON report instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Dataset directory holding dataset.json and profiles/.
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,
    /// Protocol number.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=6))]
    experiment: u8,
    #[arg(long, value_enum)]
    learner: LearnerArg,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    k: u32,
    /// Prefix for the report files (PREFIX.ratios.csv, PREFIX.accuracy.json).
    #[arg(long, value_name = "PREFIX")]
    report: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    /// Output directory (dataset.json, profiles/, db/).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Relative measurement jitter between repeated runs.
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
}

/// Parses arguments and runs; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version to stdout (exit 0) and usage errors
            // to stderr (exit 2)
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error[{}]: {err}", err.code());
            1
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Db { action } => match action {
            DbAction::List { db } => cmd_db_list(&db),
            DbAction::Add {
                id,
                db,
                name,
                description,
                example,
            } => cmd_db_add(&db, &id, name, description, example),
            DbAction::Remove { id, db } => optdb::remove_entry(&db, &id),
        },
        Command::Train(args) => cmd_train(&args),
        Command::Recommend(args) => cmd_recommend(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Synth(args) => cmd_synth(&args),
    }
}

fn cmd_db_list(db: &Path) -> Result<()> {
    for listing in optdb::list_entries(db)? {
        println!("{}\t{}\t{}", listing.id, listing.name, listing.sample_count);
    }
    Ok(())
}

fn cmd_db_add(
    db: &Path,
    id: &str,
    name: Option<String>,
    description: String,
    example: String,
) -> Result<()> {
    let manifest = EntryManifest {
        id: id.to_string(),
        name: name.unwrap_or_else(|| id.to_uppercase()),
        description,
        example,
        samples: vec![],
    };
    optdb::add_entry(db, &manifest)?;
    println!("added entry '{id}'");
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let db = optdb::load_db(&args.db)?;
    let records = db.all_records();
    if records.is_empty() {
        return Err(Error::EmptyDataset(
            "database has no profiled samples; nothing to train".to_string(),
        ));
    }
    let schema = profile::build_schema(&records)?;
    let kind: LearnerKind = args.learner.into();
    let outcome = recommend::train_all(&db, &schema, kind, args.k as usize)?;
    if outcome.models.is_empty() {
        return Err(Error::EmptyDataset(
            "no entry has samples; nothing to train".to_string(),
        ));
    }
    for (id, model) in &outcome.models {
        let size = db.entry(id).map(|e| e.samples.len()).unwrap_or(0);
        println!(
            "trained {id}: {size} instance(s), learner {}",
            model.learner_kind
        );
    }
    for id in &outcome.skipped {
        println!("skipped {id}: no samples");
    }

    let mut bundle = ModelBundle::new(outcome.models)?;
    bundle.prose = db
        .entries()
        .iter()
        .map(|e| {
            (
                e.id.clone(),
                ProseEntry {
                    name: e.name.clone(),
                    description: e.description.clone(),
                    example: e.example.clone(),
                },
            )
        })
        .collect();
    bundle.save(&args.out)?;
    println!(
        "wrote {} model(s) to {}",
        bundle.models.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_recommend(args: &RecommendArgs) -> Result<()> {
    let bundle = ModelBundle::load(&args.model)?;
    let text = std::fs::read_to_string(&args.profile).map_err(|e| Error::io(&args.profile, e))?;
    let mut records = profile::parse_canonical_csv(&text)?;
    if let Some(kernel) = &args.kernel {
        records.retain(|r| &r.kernel == kernel);
    }
    let record = match records.len() {
        0 => {
            return Err(Error::InvalidParam(match &args.kernel {
                Some(kernel) => format!("profile has no record for kernel '{kernel}'"),
                None => "profile contains no records".to_string(),
            }))
        }
        1 => records.pop().unwrap(),
        n => {
            let kernels: Vec<&str> = records.iter().map(|r| r.kernel.as_str()).collect();
            return Err(Error::Ambiguous(format!(
                "profile holds {n} records (kernels: {}); select one with --kernel",
                kernels.join(", ")
            )));
        }
    };

    let user_profile = profile::normalize(&record, &bundle.schema)?;
    let predictions = recommend::predict_all(&bundle.models, &user_profile)?;
    let config = ReportConfig {
        threshold: args.threshold,
        max_count: args.top as usize,
        include_explanations: args.explain,
        include_examples: args.explain,
    };
    let mut recs = recommend::rank_and_filter(&predictions, &config)?;
    for rec in &mut recs {
        if let Some(prose) = bundle.prose.get(&rec.optimization_id) {
            rec.name = Some(prose.name.clone());
            if config.include_explanations && !prose.description.is_empty() {
                rec.description = Some(prose.description.clone());
            }
            if config.include_examples && !prose.example.is_empty() {
                rec.example = Some(prose.example.clone());
            }
        }
    }

    if args.json {
        let report = recommend::report_json(&recs, &config);
        let text = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::CorruptPayload(e.to_string()))?;
        println!("{text}");
    } else {
        print!("{}", recommend::render_text(&recs, &config));
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let data = evaluation::load_dataset(&args.dataset)?;
    let spec = ExperimentSpec::standard(args.experiment, &data.manifest)?;
    let kind: LearnerKind = args.learner.into();
    let outcome = evaluation::run_experiment(&data, &spec, kind, args.k as usize)?;

    if let Some(parent) = args.report.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    // plain suffix concatenation: a prefix like "rep.v2" must not lose ".v2"
    let report_path = |suffix: &str| PathBuf::from(format!("{}.{suffix}", args.report.display()));
    let ratios_path = report_path("ratios.csv");
    evaluation::export_ratios_csv(std::slice::from_ref(&outcome), &ratios_path)?;

    let summary = evaluation::accuracy_summary(&outcome)?;
    let accuracy_path = report_path("accuracy.json");
    let mut json =
        serde_json::to_string_pretty(&summary).map_err(|e| Error::CorruptPayload(e.to_string()))?;
    json.push('\n');
    std::fs::write(&accuracy_path, json).map_err(|e| Error::io(&accuracy_path, e))?;

    for (id, accuracy) in &summary.per_optimization {
        println!(
            "{id}: sign accuracy {:.1}% ({}/{})",
            accuracy.percent, accuracy.correct, accuracy.total
        );
    }
    println!("overall sign accuracy: {:.1}%", summary.overall_percent);
    println!(
        "wrote {} and {}",
        ratios_path.display(),
        accuracy_path.display()
    );
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let config = SynthConfig::with_defaults(args.seed, args.noise);
    let dataset = evaluation::generate(&config)?;
    evaluation::write_dataset(&dataset, &args.out)?;

    let db_dir = args.out.join("db");
    if db_dir.exists() {
        std::fs::remove_dir_all(&db_dir).map_err(|e| Error::io(&db_dir, e))?;
    }
    evaluation::write_database(&dataset, &db_dir)?;

    let entries = optdb::list_entries(&db_dir)?.len();
    println!(
        "wrote {} records across {} program(s) and a {entries}-entry database to {}",
        dataset.records.len(),
        dataset.manifest.programs.len(),
        args.out.display()
    );
    Ok(())
}
