//! Evaluation harness: train/test experiment protocols over a complete
//! version lattice, actual-over-expected speedup ratios, and sign accuracy.
//!
//! An experiment selects which (program, input, run) groups train the models
//! and which groups test them. For each optimization, training instances are
//! the before-vectors of the lattice's before/after pairs inside the training
//! groups; test cases are the before-vectors inside the testing groups, each
//! carrying the measured speedup of truly applying the optimization to that
//! exact version. Comparing a model's expected speedup (EX) to the measured
//! actual speedup (AC) per case yields AC/EX ratios and, aggregated, the
//! percentage of cases where prediction and measurement agree on which side
//! of 1.0 the speedup falls.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{Dataset, LearnerKind, TrainedModel};
use crate::optdb::{self, TrainingInstance};
use crate::profile::{self, FeatureVector, SampleRecord};

pub mod synth;

pub use synth::{
    generate, load_dataset, write_database, write_dataset, DatasetManifest, EffectParams,
    EvalDataset, ProgramConfig, ProgramInfo, SynthConfig,
};

/* ------------------------------- experiment specs ------------------------- */

/// Selects (program, input, run) groups. Empty input or run lists match all.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSelector {
    pub program: String,
    pub input_ids: Vec<String>,
    pub run_ids: Vec<u32>,
}

impl GroupSelector {
    fn matches(&self, record: &SampleRecord) -> bool {
        record.program == self.program
            && (self.input_ids.is_empty() || self.input_ids.contains(&record.input_id))
            && (self.run_ids.is_empty() || self.run_ids.contains(&record.run_id))
    }
}

/// One train/test protocol. The two flags mirror whether the testing data
/// contain the training data and whether both come from the same program
/// input.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub id: u8,
    pub train: GroupSelector,
    pub test: GroupSelector,
    pub testing_includes_training: bool,
    pub same_input: bool,
}

impl ExperimentSpec {
    /// The six standard protocols:
    ///
    /// 1. train one run of one input, test all runs of it (test ⊇ train)
    /// 2. train one run of one input, test the remaining runs
    /// 3. train two runs of one input, test the remaining run
    /// 4. train all runs of one input, test the program's other inputs
    /// 5. train on the primary program, test on the other program
    /// 6. train on the other program, test on the primary program
    ///
    /// The primary program is the one with the most inputs (name as
    /// tiebreak); experiments 1–4 stay within it.
    pub fn standard(id: u8, manifest: &DatasetManifest) -> Result<ExperimentSpec> {
        if !(1..=6).contains(&id) {
            return Err(Error::InvalidParam(format!(
                "experiment id {id} out of range 1..=6"
            )));
        }
        let mut programs: Vec<&ProgramInfo> = manifest.programs.iter().collect();
        if programs.is_empty() {
            return Err(Error::InvalidParam(
                "dataset declares no programs".to_string(),
            ));
        }
        programs.sort_by(|a, b| {
            b.inputs
                .len()
                .cmp(&a.inputs.len())
                .then(a.name.cmp(&b.name))
        });
        let primary = programs[0];
        let secondary = programs.get(1).copied();
        if id >= 5 && secondary.is_none() {
            return Err(Error::InvalidParam(format!(
                "experiment {id} trains and tests on different programs, but the dataset has one"
            )));
        }
        let runs = manifest.runs;
        if (2..=3).contains(&id) && runs < 3 {
            return Err(Error::InvalidParam(format!(
                "experiment {id} needs at least 3 runs, dataset has {runs}"
            )));
        }
        let first_input = |p: &ProgramInfo| vec![p.inputs[0].input_id.clone()];
        let other_inputs = |p: &ProgramInfo| {
            p.inputs
                .iter()
                .skip(1)
                .map(|i| i.input_id.clone())
                .collect()
        };
        let select =
            |program: &ProgramInfo, input_ids: Vec<String>, run_ids: Vec<u32>| GroupSelector {
                program: program.name.clone(),
                input_ids,
                run_ids,
            };

        let spec = match id {
            1 => ExperimentSpec {
                id,
                train: select(primary, first_input(primary), vec![0]),
                test: select(primary, first_input(primary), vec![]),
                testing_includes_training: true,
                same_input: true,
            },
            2 => ExperimentSpec {
                id,
                train: select(primary, first_input(primary), vec![0]),
                test: select(primary, first_input(primary), (1..runs).collect()),
                testing_includes_training: false,
                same_input: true,
            },
            3 => ExperimentSpec {
                id,
                train: select(primary, first_input(primary), vec![0, 1]),
                test: select(primary, first_input(primary), (2..runs).collect()),
                testing_includes_training: false,
                same_input: true,
            },
            4 => ExperimentSpec {
                id,
                train: select(primary, first_input(primary), vec![]),
                test: select(primary, other_inputs(primary), vec![0]),
                testing_includes_training: false,
                same_input: false,
            },
            5 => ExperimentSpec {
                id,
                train: select(primary, first_input(primary), vec![]),
                test: select(secondary.unwrap(), vec![], vec![0]),
                testing_includes_training: false,
                same_input: false,
            },
            _ => ExperimentSpec {
                id,
                train: select(secondary.unwrap(), first_input(secondary.unwrap()), vec![]),
                test: select(primary, vec![], vec![0]),
                testing_includes_training: false,
                same_input: false,
            },
        };
        Ok(spec)
    }

    /// Optimization ids this experiment can evaluate: those present in both
    /// the training and the testing program.
    pub fn applicable_optimizations(&self, manifest: &DatasetManifest) -> Result<Vec<String>> {
        let train = manifest
            .program(&self.train.program)
            .ok_or_else(|| Error::Lattice(format!("unknown program '{}'", self.train.program)))?;
        let test = manifest
            .program(&self.test.program)
            .ok_or_else(|| Error::Lattice(format!("unknown program '{}'", self.test.program)))?;
        let test_set: BTreeSet<&String> = test.optimizations.iter().collect();
        let mut shared: Vec<String> = train
            .optimizations
            .iter()
            .filter(|o| test_set.contains(o))
            .cloned()
            .collect();
        shared.sort();
        if shared.is_empty() {
            return Err(Error::Lattice(format!(
                "programs '{}' and '{}' share no optimizations",
                self.train.program, self.test.program
            )));
        }
        Ok(shared)
    }
}

/* --------------------------------- splitting ------------------------------ */

/// One evaluation case: a before-vector and the measured speedup of applying
/// the optimization to exactly that version.
#[derive(Debug, Clone)]
pub struct TestCase {
    pub features: FeatureVector,
    pub actual_speedup: f64,
    pub program: String,
    pub input_id: String,
    pub run_id: u32,
    pub version_mask: u64,
}

/// A per-optimization train/test split.
#[derive(Debug)]
pub struct Split {
    pub train: Dataset,
    pub test: Vec<TestCase>,
    /// Profiled vectors inside the training groups (before and after
    /// versions both count, as in the experiment tables).
    pub train_vector_count: usize,
    pub test_vector_count: usize,
}

fn group_keys(
    records: &[SampleRecord],
    selector: &GroupSelector,
) -> BTreeSet<(String, String, u32)> {
    records
        .iter()
        .filter(|r| selector.matches(r))
        .map(|r| (r.program.clone(), r.input_id.clone(), r.run_id))
        .collect()
}

/// Builds the train/test split of one experiment for one optimization.
pub fn make_split(
    data: &EvalDataset,
    spec: &ExperimentSpec,
    optimization_id: &str,
) -> Result<Split> {
    let train_bit = data
        .manifest
        .optimization_bit(&spec.train.program, optimization_id)
        .ok_or_else(|| {
            Error::Lattice(format!(
                "optimization '{optimization_id}' is not declared for program '{}'",
                spec.train.program
            ))
        })?;
    let test_bit = data
        .manifest
        .optimization_bit(&spec.test.program, optimization_id)
        .ok_or_else(|| {
            Error::Lattice(format!(
                "optimization '{optimization_id}' is not declared for program '{}'",
                spec.test.program
            ))
        })?;

    if !spec.testing_includes_training {
        let overlap: Vec<_> = group_keys(&data.records, &spec.train)
            .intersection(&group_keys(&data.records, &spec.test))
            .cloned()
            .collect();
        if !overlap.is_empty() {
            return Err(Error::InvalidParam(format!(
                "selectors must be disjoint when testing excludes training; {} group(s) overlap",
                overlap.len()
            )));
        }
    }

    let schema = profile::build_schema(&data.records)?;
    let train_records: Vec<SampleRecord> = data
        .records
        .iter()
        .filter(|r| spec.train.matches(r))
        .cloned()
        .collect();
    if train_records.is_empty() {
        return Err(Error::Lattice(
            "training selector matched no records".to_string(),
        ));
    }
    let test_records: Vec<SampleRecord> = data
        .records
        .iter()
        .filter(|r| spec.test.matches(r))
        .cloned()
        .collect();
    if test_records.is_empty() {
        return Err(Error::Lattice(
            "testing selector matched no records".to_string(),
        ));
    }

    let mut instances = Vec::new();
    for (before, after) in optdb::pair_by_bit(&train_records, train_bit)? {
        instances.push(TrainingInstance {
            features: profile::normalize(before, &schema)?,
            label: before.runtime_ms / after.runtime_ms,
        });
    }
    let train = Dataset::new(schema.clone(), instances)?;

    let mut test = Vec::new();
    for (before, after) in optdb::pair_by_bit(&test_records, test_bit)? {
        test.push(TestCase {
            features: profile::normalize(before, &schema)?,
            actual_speedup: before.runtime_ms / after.runtime_ms,
            program: before.program.clone(),
            input_id: before.input_id.clone(),
            run_id: before.run_id,
            version_mask: before.version_mask,
        });
    }

    Ok(Split {
        train,
        test,
        train_vector_count: train_records.len(),
        test_vector_count: test_records.len(),
    })
}

/* --------------------------------- outcomes ------------------------------- */

/// Actual speedup, expected speedup, and their ratio for one test case.
#[derive(Debug, Clone)]
pub struct EvalCase {
    pub optimization_id: String,
    pub program: String,
    pub input_id: String,
    pub run_id: u32,
    pub version_mask: u64,
    pub actual: f64,
    pub expected: f64,
    pub ratio: f64,
}

/// Every evaluated case of one experiment with one learner.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub experiment_id: u8,
    pub learner: String,
    pub cases: Vec<EvalCase>,
}

/// Runs an experiment with an arbitrary per-optimization predictor factory;
/// the factory sees the optimization id and its training split and returns
/// the function that predicts each test case. Lets oracle and constant
/// predictors stand in for real learners.
pub fn run_experiment_with<F>(
    data: &EvalDataset,
    spec: &ExperimentSpec,
    learner: &str,
    mut make_predictor: F,
) -> Result<EvalOutcome>
where
    F: FnMut(&str, &Dataset) -> Result<Box<dyn Fn(&TestCase) -> f64>>,
{
    let mut cases = Vec::new();
    for optimization_id in spec.applicable_optimizations(&data.manifest)? {
        let split = make_split(data, spec, &optimization_id)?;
        let predictor = make_predictor(&optimization_id, &split.train)?;
        for case in &split.test {
            let expected = predictor(case);
            if !(expected.is_finite() && expected != 0.0) {
                return Err(Error::InEntry {
                    id: optimization_id.clone(),
                    source: Box::new(Error::InvalidParam(format!(
                        "predictor produced unusable expected speedup {expected}"
                    ))),
                });
            }
            cases.push(EvalCase {
                optimization_id: optimization_id.clone(),
                program: case.program.clone(),
                input_id: case.input_id.clone(),
                run_id: case.run_id,
                version_mask: case.version_mask,
                actual: case.actual_speedup,
                expected,
                ratio: case.actual_speedup / expected,
            });
        }
    }
    Ok(EvalOutcome {
        experiment_id: spec.id,
        learner: learner.to_string(),
        cases,
    })
}

/// Trains one real model per optimization on the experiment's training split
/// and evaluates every test case.
pub fn run_experiment(
    data: &EvalDataset,
    spec: &ExperimentSpec,
    kind: LearnerKind,
    k: usize,
) -> Result<EvalOutcome> {
    run_experiment_with(data, spec, &kind.to_string(), |optimization_id, train| {
        let model = TrainedModel::train(kind, optimization_id, train, k)?;
        Ok(Box::new(move |case: &TestCase| {
            model.predict(&case.features).unwrap_or(f64::NAN)
        }))
    })
}

/* ---------------------------------- metrics ------------------------------- */

/// Share of cases where prediction and measurement agree on which side of
/// 1.0 the speedup falls. Exactly 1.0 counts as "no gain".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignAccuracy {
    pub percent: f64,
    pub correct: usize,
    pub total: usize,
}

pub fn sign_accuracy(cases: &[EvalCase]) -> Result<SignAccuracy> {
    if cases.is_empty() {
        return Err(Error::EmptyDataset(
            "sign accuracy over zero cases".to_string(),
        ));
    }
    let correct = cases
        .iter()
        .filter(|c| (c.expected > 1.0 && c.actual > 1.0) || (c.expected <= 1.0 && c.actual <= 1.0))
        .count();
    Ok(SignAccuracy {
        percent: 100.0 * correct as f64 / cases.len() as f64,
        correct,
        total: cases.len(),
    })
}

/// Per-optimization and overall sign accuracy of one outcome.
#[derive(Debug, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub experiment: u8,
    pub learner: String,
    pub per_optimization: std::collections::BTreeMap<String, SignAccuracy>,
    pub overall_percent: f64,
}

pub fn accuracy_summary(outcome: &EvalOutcome) -> Result<AccuracySummary> {
    let overall = sign_accuracy(&outcome.cases)?;
    let mut per_optimization = std::collections::BTreeMap::new();
    let ids: BTreeSet<&String> = outcome.cases.iter().map(|c| &c.optimization_id).collect();
    for id in ids {
        let subset: Vec<EvalCase> = outcome
            .cases
            .iter()
            .filter(|c| &c.optimization_id == id)
            .cloned()
            .collect();
        per_optimization.insert(id.clone(), sign_accuracy(&subset)?);
    }
    Ok(AccuracySummary {
        experiment: outcome.experiment_id,
        learner: outcome.learner.clone(),
        per_optimization,
        overall_percent: overall.percent,
    })
}

/* --------------------------------- ratio CSV ------------------------------ */

pub const RATIOS_HEADER: &str = "experiment,learner,optimization,program,input_id,run_id,ratio";

/// Formats a ratio with 17 significant digits so re-parsing reproduces the
/// float bit-exactly.
fn format_ratio(value: f64) -> String {
    format!("{value:.16e}")
}

/// Renders the strip-chart data underlying the AC/EX plots: one row per test
/// case, deterministically ordered.
pub fn ratios_csv(outcomes: &[EvalOutcome]) -> String {
    let mut rows: Vec<(u8, &str, &EvalCase)> = outcomes
        .iter()
        .flat_map(|o| {
            o.cases
                .iter()
                .map(move |c| (o.experiment_id, o.learner.as_str(), c))
        })
        .collect();
    // within one optimization the strip-chart order is increasing input
    // size, then run id
    rows.sort_by(|a, b| {
        (
            a.0,
            a.1,
            &a.2.optimization_id,
            &a.2.program,
            &a.2.input_id,
            a.2.run_id,
            a.2.version_mask,
        )
            .cmp(&(
                b.0,
                b.1,
                &b.2.optimization_id,
                &b.2.program,
                &b.2.input_id,
                b.2.run_id,
                b.2.version_mask,
            ))
    });
    let mut out = String::from(RATIOS_HEADER);
    out.push('\n');
    for (experiment, learner, case) in rows {
        out.push_str(&format!(
            "{experiment},{learner},{},{},{},{},{}\n",
            case.optimization_id,
            case.program,
            case.input_id,
            case.run_id,
            format_ratio(case.ratio)
        ));
    }
    out
}

/// Writes the ratio CSV to a file.
pub fn export_ratios_csv(outcomes: &[EvalOutcome], path: &Path) -> Result<()> {
    fs::write(path, ratios_csv(outcomes)).map_err(|e| Error::io(path, e))
}

/// Parses a ratio CSV back into `(experiment, learner, optimization, ratio)`
/// rows; used to verify that exported ratios survive the text round trip.
pub fn parse_ratios_csv(text: &str) -> Result<Vec<(u8, String, String, f64)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == RATIOS_HEADER => {}
        other => {
            return Err(Error::Format(format!(
                "expected ratio header '{RATIOS_HEADER}', found {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Parse {
                line: i as u64 + 2,
                message: format!("expected 7 fields, found {}", fields.len()),
            });
        }
        let parse_err = |what: &str| Error::Parse {
            line: i as u64 + 2,
            message: format!("invalid {what}"),
        };
        rows.push((
            fields[0].parse().map_err(|_| parse_err("experiment"))?,
            fields[1].to_string(),
            fields[2].to_string(),
            fields[6].parse().map_err(|_| parse_err("ratio"))?,
        ));
    }
    Ok(rows)
}
