//! Run the six standard train/test protocols with both learners and compare
//! their sign accuracies (how often prediction and measurement agree on
//! whether an optimization helps).
//!
//! Protocols 1-3 train and test on the same program and input with varying
//! overlap; protocol 4 crosses inputs; protocols 5-6 cross programs, where
//! only the shared optimizations can be scored.
//!
//! ```bash
//! cargo run -p optadvisor --example evaluate_protocols
//! ```

use optadvisor::evaluation::{
    accuracy_summary, generate, run_experiment, ExperimentSpec, SynthConfig,
};
use optadvisor::learners::LearnerKind;

fn main() -> optadvisor::Result<()> {
    let dataset = generate(&SynthConfig::with_defaults(42, 0.02))?;

    println!("experiment  ibk      m5p      (cases)");
    for id in 1..=6u8 {
        let spec = ExperimentSpec::standard(id, &dataset.manifest)?;
        let mut row = format!("{id}          ");
        let mut cases = 0;
        for kind in [LearnerKind::Ibk, LearnerKind::M5p] {
            let outcome = run_experiment(&dataset, &spec, kind, 10)?;
            let summary = accuracy_summary(&outcome)?;
            row.push_str(&format!("{:5.1}%   ", summary.overall_percent));
            cases = outcome.cases.len();
        }
        row.push_str(&format!("({cases})"));
        println!("{row}");
    }

    println!();
    println!("per-optimization detail, experiment 4 with ibk:");
    let spec = ExperimentSpec::standard(4, &dataset.manifest)?;
    let outcome = run_experiment(&dataset, &spec, LearnerKind::Ibk, 10)?;
    let summary = accuracy_summary(&outcome)?;
    for (id, accuracy) in &summary.per_optimization {
        println!(
            "  {id:8} {:5.1}%  ({}/{} cases)",
            accuracy.percent, accuracy.correct, accuracy.total
        );
    }
    Ok(())
}
