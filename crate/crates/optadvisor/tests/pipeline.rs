//! End-to-end library flow: synthetic profiles through the database, both
//! learners, serialization, and the ranked report.

use optadvisor::evaluation::{self, EffectParams, ProgramConfig, SynthConfig};
use optadvisor::learners::{LearnerKind, ModelBundle};
use optadvisor::optdb::load_db;
use optadvisor::profile::{build_schema, import_nvprof_csv, normalize, NvprofMeta};
use optadvisor::recommend::{
    annotate, predict_all, rank_and_filter, render_text, report_json, train_all, ReportConfig,
};

fn separable_config() -> SynthConfig {
    let effect = |s: f64| EffectParams {
        log_speedup: s.ln(),
        input_slope: 0.0,
    };
    SynthConfig {
        seed: 31,
        runs: 2,
        noise_level: 0.0,
        programs: vec![ProgramConfig {
            name: "stencil".to_string(),
            kernel: "sweep_kernel".to_string(),
            input_count: 2,
            optimizations: ["tile", "vector", "fuse", "pad"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            effects: Some(vec![effect(1.8), effect(1.1), effect(0.95), effect(0.85)]),
        }],
    }
}

#[test]
fn database_to_report_round_trip() {
    let dataset = evaluation::generate(&separable_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let db_dir = dir.path().join("db");
    evaluation::write_database(&dataset, &db_dir).unwrap();

    let db = load_db(&db_dir).unwrap();
    assert_eq!(db.len(), 4);
    let schema = build_schema(&db.all_records()).unwrap();

    let query = dataset
        .records
        .iter()
        .find(|r| r.version_mask == 0 && r.input_id == "in01" && r.run_id == 0)
        .unwrap();
    let user_profile = normalize(query, &schema).unwrap();

    for kind in [LearnerKind::Ibk, LearnerKind::M5p] {
        let outcome = train_all(&db, &schema, kind, 10).unwrap();
        assert_eq!(outcome.models.len(), 4);
        assert!(outcome.skipped.is_empty());

        // through bundle bytes and back
        let bundle = ModelBundle::new(outcome.models).unwrap();
        let restored = ModelBundle::from_bytes(&bundle.to_bytes().unwrap()).unwrap();
        let predictions = predict_all(&restored.models, &user_profile).unwrap();
        assert!(predictions["tile"] > 1.5, "{kind}: {predictions:?}");
        assert!(predictions["pad"] < 1.0, "{kind}: {predictions:?}");

        let config = ReportConfig::default();
        let mut recs = rank_and_filter(&predictions, &config).unwrap();
        annotate(&mut recs, &db, &config);
        assert_eq!(recs[0].optimization_id, "tile");
        assert_eq!(recs[0].rank, 1);

        let text = render_text(&recs, &config);
        assert!(text.contains("tile"), "{text}");
        let json = serde_json::to_value(report_json(&recs, &config)).unwrap();
        assert_eq!(json["recommendations"][0]["id"], "tile");
    }
}

/// The nvprof import path produces the same feature vector as the canonical
/// path for equivalent measurements.
#[test]
fn nvprof_import_matches_canonical_ingestion() {
    let dataset = evaluation::generate(&separable_config()).unwrap();
    let record = &dataset.records[0];
    let schema = build_schema(&dataset.records).unwrap();

    let mut nvprof = String::from("==77== NVPROF is profiling process 77\n");
    nvprof.push_str("Device,Kernel,Invocations,Event Name,Min,Max,Avg\n");
    for (counter, value) in &record.counters {
        nvprof.push_str(&format!(
            "Tesla,{},1,{},{value},{value},{value}\n",
            record.kernel, counter
        ));
    }
    nvprof.push_str(&format!(
        "Tesla,{},1,elapsed_cycles_sm,{c},{c},{c}\n",
        record.kernel,
        c = record.cycles
    ));

    let meta = NvprofMeta {
        program: record.program.clone(),
        input_id: record.input_id.clone(),
        run_id: record.run_id,
        version_mask: record.version_mask,
        runtime_ms: Some(record.runtime_ms),
    };
    let imported = import_nvprof_csv(&nvprof, &meta).unwrap();
    assert_eq!(imported.len(), 1);
    assert_eq!(imported[0], *record);

    let canonical = normalize(record, &schema).unwrap();
    let via_nvprof = normalize(&imported[0], &schema).unwrap();
    assert_eq!(canonical, via_nvprof);
}

/// Models, databases, and datasets are shareable across threads.
#[test]
fn shared_types_are_send_and_sync() {
    fn assert_send_sync<T: Send + Sync>() {}
    assert_send_sync::<optadvisor::SampleRecord>();
    assert_send_sync::<optadvisor::FeatureVector>();
    assert_send_sync::<optadvisor::Database>();
    assert_send_sync::<optadvisor::Dataset>();
    assert_send_sync::<optadvisor::TrainedModel>();
    assert_send_sync::<optadvisor::ModelBundle>();
    assert_send_sync::<optadvisor::evaluation::EvalDataset>();

    // concurrent prediction from one shared model
    let dataset = evaluation::generate(&separable_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let db_dir = dir.path().join("db");
    evaluation::write_database(&dataset, &db_dir).unwrap();
    let db = load_db(&db_dir).unwrap();
    let schema = build_schema(&db.all_records()).unwrap();
    let models = train_all(&db, &schema, LearnerKind::Ibk, 5).unwrap().models;
    let model = std::sync::Arc::new(models["tile"].clone());
    let query = std::sync::Arc::new(normalize(&dataset.records[0], &schema).unwrap());

    let expected = model.predict(&query).unwrap();
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let model = model.clone();
            let query = query.clone();
            std::thread::spawn(move || model.predict(&query).unwrap())
        })
        .collect();
    for handle in handles {
        assert_eq!(handle.join().unwrap(), expected);
    }
}
