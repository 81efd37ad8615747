//! The full three-tier flow: profile ingestion, per-optimization model
//! training, and ranked recommendations above a threshold.
//!
//! ```bash
//! cargo run -p optadvisor --example train_and_recommend
//! ```

use optadvisor::evaluation::{generate, write_database, EffectParams, ProgramConfig, SynthConfig};
use optadvisor::learners::LearnerKind;
use optadvisor::optdb::load_db;
use optadvisor::profile::{build_schema, normalize};
use optadvisor::recommend::{
    annotate, predict_all, rank_and_filter, render_text, train_all, ReportConfig,
};

fn main() -> optadvisor::Result<()> {
    // A single program whose six optimizations have hand-picked true effects:
    // one big win (2.0x), one modest win (1.2x), the rest neutral or harmful.
    let effect = |log_speedup: f64| EffectParams {
        log_speedup,
        input_slope: 0.0,
    };
    let config = SynthConfig {
        seed: 7,
        runs: 1,
        noise_level: 0.0,
        programs: vec![ProgramConfig {
            name: "nbody".to_string(),
            kernel: "force_kernel".to_string(),
            input_count: 2,
            optimizations: ["rsqrt", "unroll", "const", "peel", "shmem", "ftz"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            effects: Some(vec![
                effect(2.0f64.ln()),  // rsqrt: 2.0x
                effect(1.2f64.ln()),  // unroll: 1.2x
                effect(0.0),          // const: no effect
                effect(0.97f64.ln()), // peel: slight slowdown
                effect(0.85f64.ln()), // shmem: slowdown
                effect(1.01f64.ln()), // ftz: below any useful threshold
            ]),
        }],
    };
    let dataset = generate(&config)?;

    // Materialize it as an optimization database and load it back, exactly
    // as a user-maintained database would be.
    let db_dir = std::env::temp_dir().join("optadvisor-example-traindb");
    if db_dir.exists() {
        std::fs::remove_dir_all(&db_dir).ok();
    }
    let query_record = dataset.records[0].clone(); // baseline version, mask 0
    write_database(&dataset, &db_dir)?;
    let db = load_db(&db_dir)?;
    let schema = build_schema(&db.all_records())?;

    for kind in [LearnerKind::Ibk, LearnerKind::M5p] {
        let outcome = train_all(&db, &schema, kind, 10)?;
        println!("{kind}: trained {} model(s)", outcome.models.len());

        let user_profile = normalize(&query_record, &schema)?;
        let predictions = predict_all(&outcome.models, &user_profile)?;
        for (id, speedup) in &predictions {
            println!("  predicted {id}: {speedup:.3}");
        }

        let report_config = ReportConfig {
            include_explanations: true,
            ..ReportConfig::default()
        };
        let mut recs = rank_and_filter(&predictions, &report_config)?;
        annotate(&mut recs, &db, &report_config);
        print!("{}", render_text(&recs, &report_config));
        println!();
    }
    Ok(())
}
