//! Compare the two learners case by case through actual-over-expected
//! speedup ratios (1.0 means a perfect prediction), the data behind the
//! strip-chart CSV that `evaluate` exports.
//!
//! ```bash
//! cargo run -p optadvisor --example compare_learners
//! ```

use optadvisor::evaluation::{generate, ratios_csv, run_experiment, ExperimentSpec, SynthConfig};
use optadvisor::learners::LearnerKind;

fn spread(ratios: &[f64]) -> (f64, f64, f64) {
    let mut sorted = ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted[sorted.len() / 2];
    (sorted[0], mid, sorted[sorted.len() - 1])
}

fn main() -> optadvisor::Result<()> {
    let dataset = generate(&SynthConfig::with_defaults(42, 0.02))?;
    let spec = ExperimentSpec::standard(4, &dataset.manifest)?;

    let mut outcomes = Vec::new();
    for kind in [LearnerKind::Ibk, LearnerKind::M5p] {
        let outcome = run_experiment(&dataset, &spec, kind, 10)?;
        println!("{kind}: AC/EX ratios per optimization (min / median / max)");
        for opt in outcome
            .cases
            .iter()
            .map(|c| c.optimization_id.clone())
            .collect::<std::collections::BTreeSet<_>>()
        {
            let ratios: Vec<f64> = outcome
                .cases
                .iter()
                .filter(|c| c.optimization_id == opt)
                .map(|c| c.ratio)
                .collect();
            let (min, median, max) = spread(&ratios);
            println!(
                "  {opt:8} {min:.3} / {median:.3} / {max:.3}  ({} cases)",
                ratios.len()
            );
        }
        println!();
        outcomes.push(outcome);
    }

    let csv = ratios_csv(&outcomes);
    let path = std::env::temp_dir().join("optadvisor-example-ratios.csv");
    std::fs::write(&path, &csv).expect("write ratio csv");
    println!(
        "wrote {} strip-chart rows to {}",
        csv.lines().count() - 1,
        path.display()
    );
    Ok(())
}
