//! Acceptance suite: one test per release criterion, each printing a
//! `[PASS]` line (run with `--nocapture` to see them).
//!
//! ```bash
//! cargo test -p optadvisor --test acceptance -- --nocapture
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use optadvisor::evaluation::{
    self, generate, parse_ratios_csv, ratios_csv, run_experiment, EffectParams, ExperimentSpec,
    ProgramConfig, SynthConfig,
};
use optadvisor::learners::{
    deserialize_model, knn_predict, knn_train, m5::population_sd, m5::sd_reduction,
    m5::verify_feature_confinement, m5_build, m5_predict, serialize_model, Dataset, LearnerKind,
    TrainedModel,
};
use optadvisor::optdb::TrainingInstance;
use optadvisor::profile::{parse_canonical_csv, write_canonical_csv, FeatureSchema, FeatureVector};
use optadvisor::recommend::{rank_and_filter, ReportConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_optadvisor"))
}

fn schema_of(d: usize) -> FeatureSchema {
    FeatureSchema::new((0..d).map(|i| format!("f{i}")).collect()).unwrap()
}

fn dataset_from(schema: &FeatureSchema, rows: Vec<Vec<f64>>, labels: Vec<f64>) -> Dataset {
    let instances = rows
        .into_iter()
        .zip(labels)
        .map(|(row, label)| TrainingInstance {
            features: FeatureVector::new(schema.clone(), row).unwrap(),
            label,
        })
        .collect();
    Dataset::new(schema.clone(), instances).unwrap()
}

/// Independent KNN oracle: identical min-max scaling contract, but a full
/// sort over all distances instead of the implementation's bounded heap.
fn knn_oracle(
    rows: &[Vec<f64>],
    labels: &[f64],
    mins: &[f64],
    maxs: &[f64],
    query: &[f64],
    k: usize,
) -> f64 {
    let scale = |v: f64, i: usize| {
        if maxs[i] > mins[i] {
            (v - mins[i]) / (maxs[i] - mins[i])
        } else {
            0.0
        }
    };
    let mut distances: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .map(|(idx, row)| {
            let mut sum = 0.0;
            for i in 0..row.len() {
                let delta = scale(row[i], i) - scale(query[i], i);
                sum += delta * delta;
            }
            (sum.sqrt(), idx)
        })
        .collect();
    distances.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let take = k.min(distances.len());
    distances[..take]
        .iter()
        .map(|(_, i)| labels[*i])
        .sum::<f64>()
        / take as f64
}

#[test]
fn criterion_1_knn_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut checked = 0usize;
    for _ in 0..100 {
        let n = rng.gen_range(1..=50);
        let d = rng.gen_range(1..=8);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect())
            .collect();
        let labels: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..3.0)).collect();
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        for row in &rows {
            for i in 0..d {
                mins[i] = mins[i].min(row[i]);
                maxs[i] = maxs[i].max(row[i]);
            }
        }
        let schema = schema_of(d);
        let data = dataset_from(&schema, rows.clone(), labels.clone());
        for k in [1usize, 3, 10] {
            let model = knn_train(&data, k).unwrap();
            for _ in 0..3 {
                let query: Vec<f64> = (0..d).map(|_| rng.gen_range(-12.0..12.0)).collect();
                let fast = knn_predict(
                    &model,
                    &FeatureVector::new(schema.clone(), query.clone()).unwrap(),
                )
                .unwrap();
                let slow = knn_oracle(&rows, &labels, &mins, &maxs, &query, k);
                assert!(
                    (fast - slow).abs() < 1e-9,
                    "n={n} d={d} k={k}: {fast} vs oracle {slow}"
                );
                checked += 1;
            }
        }
    }
    assert!(
        started.elapsed() < Duration::from_secs(5),
        "{:?}",
        started.elapsed()
    );
    println!("[PASS] criterion 1: knn matches the brute-force oracle on {checked} queries");
}

#[test]
fn criterion_2_m5_fidelity() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let schema = schema_of(2);

    // noiseless linear labels: held-out RMSE below 0.01
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
        .collect();
    let labels: Vec<f64> = rows.iter().map(|r| 1.0 + 0.5 * r[0] - 0.3 * r[1]).collect();
    let linear_model = m5_build(&dataset_from(&schema, rows, labels)).unwrap();
    verify_feature_confinement(&linear_model).unwrap();
    let mut squared = 0.0;
    let held_out = 200;
    for _ in 0..held_out {
        let f1 = rng.gen_range(0.0..1.0);
        let f2 = rng.gen_range(0.0..1.0);
        let truth = 1.0 + 0.5 * f1 - 0.3 * f2;
        let predicted = m5_predict(
            &linear_model,
            &FeatureVector::new(schema.clone(), vec![f1, f2]).unwrap(),
        )
        .unwrap();
        squared += (predicted - truth) * (predicted - truth);
    }
    let rmse = (squared / held_out as f64).sqrt();
    assert!(rmse < 0.01, "held-out rmse {rmse}");

    // constant labels: single leaf predicting the constant exactly
    let rows: Vec<Vec<f64>> = (0..64)
        .map(|i| vec![i as f64, (i * 7 % 11) as f64])
        .collect();
    let constant_model = m5_build(&dataset_from(&schema, rows, vec![2.5; 64])).unwrap();
    assert!(constant_model.root().is_leaf());
    verify_feature_confinement(&constant_model).unwrap();
    let probe = FeatureVector::new(schema.clone(), vec![1e6, -1e6]).unwrap();
    assert_eq!(m5_predict(&constant_model, &probe).unwrap(), 2.5);

    // coefficient confinement across a suite of noisy trees
    let mut trees = 2usize;
    for round in 0..25 {
        let d = rng.gen_range(1..=6);
        let schema = schema_of(d);
        let n = rng.gen_range(8..150);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let labels: Vec<f64> = rows
            .iter()
            .map(|r| r[0].signum() + 0.3 * r[d - 1] + rng.gen_range(-0.2..0.2))
            .collect();
        let tree = m5_build(&dataset_from(&schema, rows, labels)).unwrap();
        verify_feature_confinement(&tree)
            .unwrap_or_else(|e| panic!("confidence walk failed in round {round}: {e}"));
        trees += 1;
    }
    assert!(
        started.elapsed() < Duration::from_secs(5),
        "{:?}",
        started.elapsed()
    );
    println!(
        "[PASS] criterion 2: m5 rmse {rmse:.5} < 0.01, constant collapse exact, confinement held on {trees} trees"
    );
}

#[test]
fn criterion_3_sdr_non_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut checked = 0usize;
    for _ in 0..1000 {
        let n = rng.gen_range(2..60);
        // multiset flavor: draw from a small value pool so duplicates abound
        let pool: Vec<f64> = (0..rng.gen_range(1..6))
            .map(|_| rng.gen_range(-5.0..5.0))
            .collect();
        let labels: Vec<f64> = (0..n).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
        let cut = rng.gen_range(1..n);
        let sdr = sd_reduction(&labels, &labels[..cut], &labels[cut..]);
        assert!(sdr >= -1e-12, "sdr {sdr} for n={n} cut={cut}");
        checked += 1;
    }
    // spot-check the closed-form case
    assert_eq!(population_sd(&[1.0, 1.0, 5.0, 5.0]), 2.0);
    println!("[PASS] criterion 3: sdr >= -1e-12 on {checked} random label multisets");
}

fn single_lattice_config(seed: u64, noise_level: f64) -> SynthConfig {
    SynthConfig {
        seed,
        runs: 1,
        noise_level,
        programs: vec![ProgramConfig {
            name: "app".to_string(),
            kernel: "main_kernel".to_string(),
            input_count: 1,
            optimizations: ["o0", "o1", "o2", "o3", "o4", "o5"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            effects: None,
        }],
    }
}

#[test]
fn criterion_4_pipeline_count_fidelity() {
    // 6 optimizations, 1 input, 1 run: exactly 64 versions, 32 training
    // instances per optimization
    let data = generate(&single_lattice_config(404, 0.0)).unwrap();
    assert_eq!(data.records.len(), 64);
    let spec = ExperimentSpec {
        id: 1,
        train: evaluation::GroupSelector {
            program: "app".to_string(),
            input_ids: vec![],
            run_ids: vec![],
        },
        test: evaluation::GroupSelector {
            program: "app".to_string(),
            input_ids: vec![],
            run_ids: vec![],
        },
        testing_includes_training: true,
        same_input: true,
    };
    for opt in ["o0", "o1", "o2", "o3", "o4", "o5"] {
        let split = evaluation::make_split(&data, &spec, opt).unwrap();
        assert_eq!(split.train.len(), 32, "{opt}");
    }

    // standard experiment analogs reproduce the 64/128/192 training-vector
    // counts (and the matching test-vector counts for 1-3)
    let full = generate(&SynthConfig::with_defaults(405, 0.02)).unwrap();
    let expected = [
        (1u8, 64, 192),
        (2, 64, 128),
        (3, 128, 64),
        (4, 192, 0),
        (5, 192, 0),
        (6, 192, 0),
    ];
    for (id, train_vectors, test_vectors) in expected {
        let spec = ExperimentSpec::standard(id, &full.manifest).unwrap();
        let split = evaluation::make_split(&full, &spec, "ftz").unwrap();
        assert_eq!(split.train_vector_count, train_vectors, "experiment {id}");
        if test_vectors > 0 {
            assert_eq!(split.test_vector_count, test_vectors, "experiment {id}");
        }
    }
    println!("[PASS] criterion 4: 64-version lattice gives 32 instances/optimization; experiment counts 64/128/192 exact");
}

#[test]
fn criterion_5_exact_recall_experiment() {
    let started = Instant::now();
    let data = generate(&SynthConfig::with_defaults(505, 0.0)).unwrap();
    let spec = ExperimentSpec::standard(1, &data.manifest).unwrap();
    let outcome = run_experiment(&data, &spec, LearnerKind::Ibk, 1).unwrap();
    assert_eq!(outcome.cases.len(), 6 * 3 * 32);
    for case in &outcome.cases {
        assert!(
            (case.ratio - 1.0).abs() <= 1e-9,
            "case {case:?} ratio {}",
            case.ratio
        );
    }
    let accuracy = evaluation::sign_accuracy(&outcome.cases).unwrap();
    assert_eq!(accuracy.percent, 100.0);
    assert!(
        started.elapsed() < Duration::from_secs(10),
        "{:?}",
        started.elapsed()
    );
    println!(
        "[PASS] criterion 5: exact recall, sign accuracy 100.0% and all {} ratios at 1.0",
        outcome.cases.len()
    );
}

#[test]
fn criterion_6_noisy_generalization() {
    let started = Instant::now();
    let data = generate(&SynthConfig::with_defaults(606, 0.02)).unwrap();
    let spec = ExperimentSpec::standard(4, &data.manifest).unwrap();
    let outcome = run_experiment(&data, &spec, LearnerKind::Ibk, 10).unwrap();
    let accuracy = evaluation::sign_accuracy(&outcome.cases).unwrap();
    assert!(
        accuracy.percent >= 90.0,
        "sign accuracy {:.2}% below 90%",
        accuracy.percent
    );
    assert!(
        started.elapsed() < Duration::from_secs(30),
        "{:?}",
        started.elapsed()
    );
    println!(
        "[PASS] criterion 6: cross-input generalization at 2% noise, sign accuracy {:.1}% >= 90%",
        accuracy.percent
    );
}

#[test]
fn criterion_7_recommendation_correctness() {
    // A separable fixture: "winner" injects a 2.0x speedup everywhere, every
    // other optimization is neutral or harmful.
    let effect = |log_speedup: f64| EffectParams {
        log_speedup,
        input_slope: 0.0,
    };
    let config = SynthConfig {
        seed: 707,
        runs: 1,
        noise_level: 0.0,
        programs: vec![ProgramConfig {
            name: "app".to_string(),
            kernel: "main_kernel".to_string(),
            input_count: 2,
            optimizations: ["winner", "meh", "flat", "worse", "bad", "awful"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            effects: Some(vec![
                effect(2.0f64.ln()),
                effect(1.0f64.ln()),
                effect(0.0),
                effect(0.97f64.ln()),
                effect(0.9f64.ln()),
                effect(0.8f64.ln()),
            ]),
        }],
    };
    let dataset = generate(&config).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let db_dir = dir.path().join("db");
    evaluation::write_database(&dataset, &db_dir).unwrap();

    let query = dataset
        .records
        .iter()
        .find(|r| r.version_mask == 0 && r.input_id == "in00")
        .unwrap()
        .clone();
    let profile_path = dir.path().join("query.csv");
    std::fs::write(
        &profile_path,
        write_canonical_csv(std::slice::from_ref(&query)),
    )
    .unwrap();

    let bundle_path = dir.path().join("models.json");
    let train = bin()
        .args(["train", "--db"])
        .arg(&db_dir)
        .args(["--learner", "ibk", "--out"])
        .arg(&bundle_path)
        .output()
        .unwrap();
    assert!(
        train.status.success(),
        "{}",
        String::from_utf8_lossy(&train.stderr)
    );

    let recommend = bin()
        .args(["recommend", "--model"])
        .arg(&bundle_path)
        .args(["--profile"])
        .arg(&profile_path)
        .args(["--json"])
        .output()
        .unwrap();
    assert!(
        recommend.status.success(),
        "{}",
        String::from_utf8_lossy(&recommend.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&recommend.stdout).unwrap();
    let recs = report["recommendations"].as_array().unwrap();
    assert!(!recs.is_empty(), "no recommendations in {report}");
    assert_eq!(recs[0]["id"], "winner");
    assert_eq!(recs[0]["rank"], 1);
    assert!(recs[0]["predicted_speedup"].as_f64().unwrap() > 1.05);

    // ordering and threshold invariants over 100 random prediction maps
    let mut rng = ChaCha8Rng::seed_from_u64(708);
    for _ in 0..100 {
        let n = rng.gen_range(0..15);
        let map: BTreeMap<String, f64> = (0..n)
            .map(|i| (format!("opt{i:02}"), rng.gen_range(-0.5..3.0)))
            .collect();
        let low_cfg = ReportConfig {
            threshold: 0.7,
            max_count: 20,
            ..ReportConfig::default()
        };
        let high_cfg = ReportConfig {
            threshold: 1.4,
            max_count: 20,
            ..ReportConfig::default()
        };
        let low = rank_and_filter(&map, &low_cfg).unwrap();
        let high = rank_and_filter(&map, &high_cfg).unwrap();
        for pair in low.windows(2) {
            assert!(pair[0].predicted_speedup >= pair[1].predicted_speedup);
        }
        assert!(low.iter().all(|r| r.predicted_speedup >= low_cfg.threshold));
        assert!(low.len() <= low_cfg.max_count);
        assert_eq!(
            low.iter().map(|r| r.rank).collect::<Vec<_>>(),
            (1..=low.len()).collect::<Vec<_>>()
        );
        let low_ids: Vec<&str> = low.iter().map(|r| r.optimization_id.as_str()).collect();
        let high_ids: Vec<&str> = high.iter().map(|r| r.optimization_id.as_str()).collect();
        assert_eq!(high_ids, low_ids[..high_ids.len()].to_vec());
    }
    println!("[PASS] criterion 7: separable fixture ranks the injected winner first; invariants held on 100 maps");
}

#[test]
fn criterion_8_format_round_trips() {
    // canonical CSV: parse -> serialize -> parse identity on generator output
    let dataset = generate(&SynthConfig::with_defaults(808, 0.02)).unwrap();
    let once = parse_canonical_csv(&write_canonical_csv(&dataset.records)).unwrap();
    let twice = parse_canonical_csv(&write_canonical_csv(&once)).unwrap();
    assert_eq!(once, twice);
    assert_eq!(once, dataset.records);

    // model bundles: serialize -> deserialize prediction identity
    let mut rng = ChaCha8Rng::seed_from_u64(809);
    let schema = schema_of(5);
    let rows: Vec<Vec<f64>> = (0..80)
        .map(|_| (0..5).map(|_| rng.gen_range(0.0..2.0)).collect())
        .collect();
    let labels: Vec<f64> = rows
        .iter()
        .map(|r| 1.0 + 0.4 * r[0] - 0.2 * r[3] + rng.gen_range(-0.05..0.05))
        .collect();
    let data = dataset_from(&schema, rows, labels);
    for kind in [LearnerKind::Ibk, LearnerKind::M5p] {
        let model = TrainedModel::train(kind, "opt", &data, 10).unwrap();
        if let optadvisor::learners::ModelPayload::M5(tree) = &model.payload {
            verify_feature_confinement(tree).unwrap();
        }
        let restored = deserialize_model(&serialize_model(&model).unwrap()).unwrap();
        for _ in 0..100 {
            let query: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..3.0)).collect();
            let q = FeatureVector::new(schema.clone(), query).unwrap();
            let a = model.predict(&q).unwrap();
            let b = restored.predict(&q).unwrap();
            assert_eq!(a.to_bits(), b.to_bits(), "{kind}: {a} vs {b}");
        }
    }

    // ratio CSV: re-parse reproduces every ratio bit-exactly
    let spec = ExperimentSpec::standard(4, &dataset.manifest).unwrap();
    let outcome = run_experiment(&dataset, &spec, LearnerKind::Ibk, 10).unwrap();
    let text = ratios_csv(std::slice::from_ref(&outcome));
    let rows = parse_ratios_csv(&text).unwrap();
    assert_eq!(rows.len(), outcome.cases.len());
    for (row, case) in rows.iter().zip(&outcome.cases) {
        assert_eq!(row.3.to_bits(), case.ratio.to_bits());
    }
    println!(
        "[PASS] criterion 8: canonical CSV, model bundle, and ratio CSV round trips are exact"
    );
}

fn dir_snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, into: &mut BTreeMap<String, Vec<u8>>) {
        for item in std::fs::read_dir(dir).unwrap() {
            let path = item.unwrap().path();
            if path.is_dir() {
                walk(&path, root, into);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .to_string();
                into.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut map = BTreeMap::new();
    walk(root, root, &mut map);
    map
}

#[test]
fn criterion_9_command_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run_synth = |out: &Path| {
        let status = bin()
            .args(["synth", "--seed", "99", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_synth(&a);
    run_synth(&b);
    let snap_a = dir_snapshot(&a);
    assert!(!snap_a.is_empty());
    assert_eq!(
        snap_a,
        dir_snapshot(&b),
        "synth output differs between runs"
    );

    let train = |out: &Path| {
        let status = bin()
            .args(["train", "--db"])
            .arg(a.join("db"))
            .args(["--learner", "m5p", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    };
    let bundle_a = dir.path().join("bundle_a.json");
    let bundle_b = dir.path().join("bundle_b.json");
    train(&bundle_a);
    train(&bundle_b);
    assert_eq!(
        std::fs::read(&bundle_a).unwrap(),
        std::fs::read(&bundle_b).unwrap(),
        "model bundles differ between identical train runs"
    );
    // the trained trees also satisfy coefficient confinement
    let bundle = optadvisor::learners::ModelBundle::load(&bundle_a).unwrap();
    for model in bundle.models.values() {
        if let optadvisor::learners::ModelPayload::M5(tree) = &model.payload {
            verify_feature_confinement(tree).unwrap();
        }
    }

    let evaluate = |prefix: &Path| {
        let status = bin()
            .args(["evaluate", "--dataset"])
            .arg(&a)
            .args([
                "--experiment",
                "2",
                "--learner",
                "ibk",
                "--k",
                "10",
                "--report",
            ])
            .arg(prefix)
            .status()
            .unwrap();
        assert!(status.success());
    };
    let rep_a = dir.path().join("rep_a");
    let rep_b = dir.path().join("rep_b");
    evaluate(&rep_a);
    evaluate(&rep_b);
    for suffix in ["ratios.csv", "accuracy.json"] {
        let sibling = |p: &Path| PathBuf::from(format!("{}.{suffix}", p.display()));
        assert_eq!(
            std::fs::read(sibling(&rep_a)).unwrap(),
            std::fs::read(sibling(&rep_b)).unwrap(),
            "evaluate artifact {suffix} differs between runs"
        );
    }

    // recommend twice on the same inputs: identical stdout
    let query_csv = {
        let records = optadvisor::evaluation::load_dataset(&a).unwrap().records;
        let record = records
            .iter()
            .find(|r| {
                r.program == "bh" && r.input_id == "in00" && r.run_id == 0 && r.version_mask == 0
            })
            .unwrap()
            .clone();
        let path = dir.path().join("query.csv");
        std::fs::write(&path, write_canonical_csv(std::slice::from_ref(&record))).unwrap();
        path
    };
    let recommend = || {
        let output = bin()
            .args(["recommend", "--model"])
            .arg(&bundle_a)
            .args(["--profile"])
            .arg(&query_csv)
            .args(["--json"])
            .output()
            .unwrap();
        assert!(output.status.success());
        output.stdout
    };
    assert_eq!(
        recommend(),
        recommend(),
        "recommend output differs between runs"
    );

    println!("[PASS] criterion 9: synth, train, evaluate, and recommend are byte-identical across repeated runs");
}
