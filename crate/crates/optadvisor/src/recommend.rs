//! Tiers 2 and 3 end to end: train one model per database entry, predict the
//! speedup of every optimization on a user profile, rank the predictions,
//! filter them against a threshold, and render the report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{Dataset, LearnerKind, TrainedModel};
use crate::optdb::{self, Database};
use crate::profile::{FeatureSchema, FeatureVector};

/// Floor applied to non-positive predictions before ranking. Speedups are
/// physically positive; a model tree extrapolating far outside its training
/// range can still produce zero or negative values, which are floored and
/// flagged rather than silently dropped.
pub const CLAMP_FLOOR: f64 = 0.01;

/// Report shape: how many recommendations to show, the minimum predicted
/// speedup worth reporting, and which prose to include.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportConfig {
    pub threshold: f64,
    pub max_count: usize,
    pub include_explanations: bool,
    pub include_examples: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            threshold: 1.05,
            max_count: 3,
            include_explanations: false,
            include_examples: false,
        }
    }
}

/// One ranked suggestion.
#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub optimization_id: String,
    pub predicted_speedup: f64,
    pub rank: usize,
    pub clamped: bool,
    pub name: Option<String>,
    pub description: Option<String>,
    pub example: Option<String>,
}

/// Result of training the whole database: one model per entry that has
/// samples, plus the ids of entries skipped for having none.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub models: BTreeMap<String, TrainedModel>,
    pub skipped: Vec<String>,
}

/// Trains one model per entry with samples. Entries without samples are
/// reported as skipped, not treated as fatal. Errors are tagged with the
/// entry that caused them.
pub fn train_all(
    db: &Database,
    schema: &FeatureSchema,
    kind: LearnerKind,
    k: usize,
) -> Result<TrainOutcome> {
    let mut models = BTreeMap::new();
    let mut skipped = Vec::new();
    for entry in db.entries() {
        if entry.samples.is_empty() {
            skipped.push(entry.id.clone());
            continue;
        }
        let tag = |e: Error| Error::InEntry {
            id: entry.id.clone(),
            source: Box::new(e),
        };
        let instances = optdb::build_training_set(entry, schema).map_err(tag)?;
        let dataset = Dataset::new(schema.clone(), instances).map_err(tag)?;
        let model = TrainedModel::train(kind, &entry.id, &dataset, k).map_err(tag)?;
        models.insert(entry.id.clone(), model);
    }
    Ok(TrainOutcome { models, skipped })
}

/// Predicts the speedup of every trained optimization on one user profile.
pub fn predict_all(
    models: &BTreeMap<String, TrainedModel>,
    user_profile: &FeatureVector,
) -> Result<BTreeMap<String, f64>> {
    let mut predictions = BTreeMap::new();
    for (id, model) in models {
        let value = model.predict(user_profile)?;
        if !value.is_finite() {
            return Err(Error::InEntry {
                id: id.clone(),
                source: Box::new(Error::InvalidParam(format!(
                    "model produced non-finite prediction {value}"
                ))),
            });
        }
        predictions.insert(id.clone(), value);
    }
    Ok(predictions)
}

/// Sorts predictions by speedup descending (ties by id ascending), floors
/// non-positive values, drops entries below the threshold, truncates to
/// `max_count`, and assigns contiguous ranks starting at 1.
pub fn rank_and_filter(
    predictions: &BTreeMap<String, f64>,
    config: &ReportConfig,
) -> Result<Vec<Recommendation>> {
    if config.max_count == 0 {
        return Err(Error::InvalidParam("max_count must be >= 1".to_string()));
    }
    if !(config.threshold.is_finite() && config.threshold >= 0.0) {
        return Err(Error::InvalidParam(
            "threshold must be finite and >= 0".to_string(),
        ));
    }

    let mut ranked: Vec<(String, f64, bool)> = predictions
        .iter()
        .map(|(id, &value)| {
            if value <= 0.0 {
                (id.clone(), CLAMP_FLOOR, true)
            } else {
                (id.clone(), value, false)
            }
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    Ok(ranked
        .into_iter()
        .filter(|(_, value, _)| *value >= config.threshold)
        .take(config.max_count)
        .enumerate()
        .map(|(i, (id, value, clamped))| Recommendation {
            optimization_id: id,
            predicted_speedup: value,
            rank: i + 1,
            clamped,
            name: None,
            description: None,
            example: None,
        })
        .collect())
}

/// Copies entry prose onto the recommendations, respecting the config flags.
pub fn annotate(recs: &mut [Recommendation], db: &Database, config: &ReportConfig) {
    for rec in recs {
        let Some(entry) = db.entry(&rec.optimization_id) else {
            continue;
        };
        rec.name = Some(entry.name.clone());
        if config.include_explanations && !entry.description.is_empty() {
            rec.description = Some(entry.description.clone());
        }
        if config.include_examples && !entry.example.is_empty() {
            rec.example = Some(entry.example.clone());
        }
    }
}

/* ------------------------------- rendering ------------------------------- */

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportEntry {
    pub rank: usize,
    pub id: String,
    pub name: String,
    pub predicted_speedup: f64,
    pub clamped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub example: Option<String>,
}

/// Machine-readable counterpart of the rendered text.
#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub threshold: f64,
    pub max_count: usize,
    pub recommendations: Vec<ReportEntry>,
}

/// Builds the JSON form of a report.
pub fn report_json(recs: &[Recommendation], config: &ReportConfig) -> Report {
    Report {
        threshold: config.threshold,
        max_count: config.max_count,
        recommendations: recs
            .iter()
            .map(|r| ReportEntry {
                rank: r.rank,
                id: r.optimization_id.clone(),
                name: r.name.clone().unwrap_or_else(|| r.optimization_id.clone()),
                predicted_speedup: r.predicted_speedup,
                clamped: r.clamped,
                description: r.description.clone(),
                example: r.example.clone(),
            })
            .collect(),
    }
}

fn percent_gain(speedup: f64) -> String {
    format!("{:+.0}%", (speedup - 1.0) * 100.0)
}

/// Renders the human-readable report.
pub fn render_text(recs: &[Recommendation], config: &ReportConfig) -> String {
    if recs.is_empty() {
        return format!(
            "no optimization predicted to exceed threshold (minimum speedup {:.2})\n",
            config.threshold
        );
    }
    let mut out = String::new();
    out.push_str(&format!(
        "top {} of {} recommendation(s) at threshold {:.2}:\n",
        recs.len().min(config.max_count),
        recs.len(),
        config.threshold
    ));
    for rec in recs {
        let name = rec.name.as_deref().unwrap_or(&rec.optimization_id);
        let flag = if rec.clamped { " [clamped]" } else { "" };
        out.push_str(&format!(
            "  {}. {} ({}) - predicted speedup {:.2} ({}){}\n",
            rec.rank,
            name,
            rec.optimization_id,
            rec.predicted_speedup,
            percent_gain(rec.predicted_speedup),
            flag,
        ));
        if let Some(description) = &rec.description {
            out.push_str(&format!("     {description}\n"));
        }
        if let Some(example) = &rec.example {
            out.push_str(&format!("     example: {example}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optdb::{OptimizationEntry, SamplePair};
    use crate::profile::SampleRecord;
    use std::collections::BTreeMap as Map;

    fn predictions(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(id, v)| (id.to_string(), *v)).collect()
    }

    fn config(threshold: f64, max_count: usize) -> ReportConfig {
        ReportConfig {
            threshold,
            max_count,
            ..ReportConfig::default()
        }
    }

    #[test]
    fn filters_and_sorts() {
        let recs = rank_and_filter(
            &predictions(&[("a", 1.5), ("b", 1.1), ("c", 0.9)]),
            &config(1.05, 10),
        )
        .unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!((recs[0].optimization_id.as_str(), recs[0].rank), ("a", 1));
        assert_eq!((recs[1].optimization_id.as_str(), recs[1].rank), ("b", 2));
    }

    #[test]
    fn everything_below_threshold_is_empty() {
        let recs =
            rank_and_filter(&predictions(&[("a", 1.0), ("b", 0.5)]), &config(1.05, 10)).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn ties_break_by_id_then_truncate() {
        let recs =
            rank_and_filter(&predictions(&[("b", 1.5), ("a", 1.5)]), &config(1.05, 1)).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].optimization_id, "a");
        assert_eq!(recs[0].rank, 1);
    }

    #[test]
    fn non_positive_predictions_are_floored_and_flagged() {
        let recs =
            rank_and_filter(&predictions(&[("a", -0.3), ("b", 0.0)]), &config(0.0, 10)).unwrap();
        assert_eq!(recs.len(), 2);
        for rec in &recs {
            assert_eq!(rec.predicted_speedup, CLAMP_FLOOR);
            assert!(rec.clamped);
        }
    }

    #[test]
    fn render_shows_percent_gain() {
        let mut recs = rank_and_filter(&predictions(&[("rsqrt", 1.30)]), &config(1.05, 3)).unwrap();
        recs[0].name = Some("RSQRT".to_string());
        let text = render_text(&recs, &config(1.05, 3));
        assert!(text.contains("rsqrt"));
        assert!(text.contains("+30%"));
    }

    #[test]
    fn render_empty_report_message() {
        let text = render_text(&[], &config(1.05, 3));
        assert!(text.contains("no optimization predicted to exceed threshold"));
    }

    #[test]
    fn example_text_respects_flag() {
        let entry = OptimizationEntry {
            id: "rsqrt".to_string(),
            name: "RSQRT".to_string(),
            description: "use the fast reciprocal square root".to_string(),
            example: "rsqrtf(x) instead of 1.0f / sqrtf(x)".to_string(),
            samples: vec![],
        };
        let db = Database::from_entries(vec![entry]).unwrap();
        let base = rank_and_filter(&predictions(&[("rsqrt", 1.3)]), &config(1.05, 3)).unwrap();

        let mut with_examples = base.clone();
        let mut cfg = config(1.05, 3);
        cfg.include_examples = true;
        annotate(&mut with_examples, &db, &cfg);
        assert!(render_text(&with_examples, &cfg).contains("rsqrtf(x)"));

        let mut without = base;
        let cfg = config(1.05, 3);
        annotate(&mut without, &db, &cfg);
        assert!(!render_text(&without, &cfg).contains("rsqrtf(x)"));
    }

    #[test]
    fn report_json_round_trips() {
        let mut recs =
            rank_and_filter(&predictions(&[("a", 1.4), ("b", 1.2)]), &config(1.05, 3)).unwrap();
        recs[0].description = Some("why".to_string());
        let report = report_json(&recs, &config(1.05, 3));
        let text = serde_json::to_string(&report).unwrap();
        let parsed: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.recommendations.len(), 2);
        assert_eq!(parsed.recommendations[0].id, "a");
        assert_eq!(parsed.recommendations[0].rank, 1);
    }

    #[test]
    fn threshold_monotonicity_and_ordering() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let n = rng.gen_range(0..12);
            let map: BTreeMap<String, f64> = (0..n)
                .map(|i| (format!("opt{i:02}"), rng.gen_range(-0.5..3.0)))
                .collect();
            let low = rank_and_filter(&map, &config(0.8, 20)).unwrap();
            let high = rank_and_filter(&map, &config(1.3, 20)).unwrap();

            // ordering soundness
            for pair in low.windows(2) {
                assert!(pair[0].predicted_speedup >= pair[1].predicted_speedup);
            }
            assert!(low.iter().all(|r| r.predicted_speedup >= 0.8));
            let ranks: Vec<usize> = low.iter().map(|r| r.rank).collect();
            assert_eq!(ranks, (1..=low.len()).collect::<Vec<_>>());

            // raising the threshold yields a prefix subsequence
            let low_ids: Vec<&str> = low.iter().map(|r| r.optimization_id.as_str()).collect();
            let high_ids: Vec<&str> = high.iter().map(|r| r.optimization_id.as_str()).collect();
            assert_eq!(high_ids, low_ids[..high_ids.len()].to_vec());
        }
    }

    #[test]
    fn monotone_transforms_preserve_order() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        for _ in 0..30 {
            let map: BTreeMap<String, f64> = (0..8)
                .map(|i| (format!("opt{i}"), rng.gen_range(0.1..3.0)))
                .collect();
            let transformed: BTreeMap<String, f64> = map
                .iter()
                .map(|(k, v)| (k.clone(), v.exp() + 1.0))
                .collect();
            let base = rank_and_filter(&map, &config(0.0, 20)).unwrap();
            let shifted = rank_and_filter(&transformed, &config(0.0, 20)).unwrap();
            let order = |recs: &[Recommendation]| {
                recs.iter()
                    .map(|r| r.optimization_id.clone())
                    .collect::<Vec<_>>()
            };
            assert_eq!(order(&base), order(&shifted));
        }
    }

    /* ------------------------ training-level tests ------------------------ */

    fn rec(mask: u64, runtime: f64, inst: f64) -> SampleRecord {
        let mut counters = Map::new();
        counters.insert("inst_executed".to_string(), inst);
        counters.insert("branch".to_string(), 40.0);
        SampleRecord {
            program: "nb".to_string(),
            input_id: "in00".to_string(),
            run_id: 0,
            version_mask: mask,
            kernel: "k".to_string(),
            counters,
            cycles: 1_000,
            runtime_ms: runtime,
        }
    }

    fn entry_with_effect(id: &str, bit: u32, speedup: f64) -> OptimizationEntry {
        // Two pairs at slightly different profiles, same true effect.
        let samples = (0..2u64)
            .map(|j| {
                let base_mask = j << ((bit + 1) % 6);
                SamplePair {
                    before: rec(base_mask, 2.0, 500.0 + 40.0 * j as f64),
                    after: rec(
                        base_mask | (1 << bit),
                        2.0 / speedup,
                        500.0 + 40.0 * j as f64,
                    ),
                    input_id: "in00".to_string(),
                }
            })
            .collect();
        OptimizationEntry {
            id: id.to_string(),
            name: id.to_uppercase(),
            description: String::new(),
            example: String::new(),
            samples,
        }
    }

    fn fixture_schema() -> FeatureSchema {
        FeatureSchema::new(vec!["branch".to_string(), "inst_executed".to_string()]).unwrap()
    }

    #[test]
    fn trains_one_model_per_sampled_entry() {
        let entries: Vec<OptimizationEntry> = (0..6)
            .map(|i| entry_with_effect(&format!("opt{i}"), i, 1.2))
            .collect();
        let db = Database::from_entries(entries).unwrap();
        let outcome = train_all(&db, &fixture_schema(), LearnerKind::Ibk, 10).unwrap();
        assert_eq!(outcome.models.len(), 6);
        assert!(outcome.skipped.is_empty());
    }

    #[test]
    fn sampleless_entries_are_skipped_not_fatal() {
        let mut entries: Vec<OptimizationEntry> = (0..5)
            .map(|i| entry_with_effect(&format!("opt{i}"), i, 1.2))
            .collect();
        entries.push(OptimizationEntry {
            id: "undocumented".to_string(),
            name: "UNDOC".to_string(),
            description: String::new(),
            example: String::new(),
            samples: vec![],
        });
        let db = Database::from_entries(entries).unwrap();
        let outcome = train_all(&db, &fixture_schema(), LearnerKind::Ibk, 10).unwrap();
        assert_eq!(outcome.models.len(), 5);
        assert_eq!(outcome.skipped, vec!["undocumented".to_string()]);
    }

    #[test]
    fn empty_db_trains_nothing() {
        let db = Database::from_entries(vec![]).unwrap();
        let outcome = train_all(&db, &fixture_schema(), LearnerKind::Ibk, 10).unwrap();
        assert!(outcome.models.is_empty());
        assert!(predict_all(&outcome.models, &query_at(500.0))
            .unwrap()
            .is_empty());
    }

    fn query_at(inst: f64) -> FeatureVector {
        FeatureVector::new(fixture_schema(), vec![0.04, inst / 1000.0]).unwrap()
    }

    #[test]
    fn knn_identity_recall_through_predict_all() {
        let entries = vec![entry_with_effect("ftz", 0, 1.6)];
        let db = Database::from_entries(entries).unwrap();
        let outcome = train_all(&db, &fixture_schema(), LearnerKind::Ibk, 1).unwrap();
        let predictions = predict_all(&outcome.models, &query_at(500.0)).unwrap();
        assert!((predictions["ftz"] - 1.6).abs() < 1e-12);
    }

    #[test]
    fn separable_fixture_orders_good_above_bad() {
        let entries = vec![
            entry_with_effect("good", 0, 2.0),
            entry_with_effect("bad", 1, 0.8),
        ];
        let db = Database::from_entries(entries).unwrap();
        for kind in [LearnerKind::Ibk, LearnerKind::M5p] {
            let outcome = train_all(&db, &fixture_schema(), kind, 10).unwrap();
            let predictions = predict_all(&outcome.models, &query_at(500.0)).unwrap();
            assert!(
                predictions["good"] > 1.0 && predictions["bad"] < 1.0,
                "{kind}: {predictions:?}"
            );
        }
    }
}
