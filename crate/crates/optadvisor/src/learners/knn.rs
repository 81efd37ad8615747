//! Instance-based k-nearest-neighbor regression.
//!
//! Training records all labelled instances verbatim. Prediction min-max
//! scales every feature by the ranges observed during training, finds the k
//! stored instances closest to the query in Euclidean distance, and returns
//! the arithmetic mean of their labels. Raw per-cycle rates span orders of
//! magnitude, so scaling keeps any single counter from dominating the
//! distance; query values are mapped by the same affine transform without
//! clamping.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optdb::TrainingInstance;
use crate::profile::{FeatureSchema, FeatureVector};

use super::Dataset;

/// Per-feature range observed over the training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub min: f64,
    pub max: f64,
}

impl FeatureScale {
    /// Maps a raw value into the unit range of the training data. A feature
    /// that was constant during training carries no distance information and
    /// maps everything to zero.
    fn apply(&self, value: f64) -> f64 {
        if self.max > self.min {
            (value - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }
}

/// The stored training set plus scaling parameters.
#[derive(Debug, Clone)]
pub struct KnnModel {
    schema: FeatureSchema,
    k: usize,
    rows: Vec<Vec<f64>>,
    labels: Vec<f64>,
    scaling: Vec<FeatureScale>,
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn scaling(&self) -> &[FeatureScale] {
        &self.scaling
    }

    pub(super) fn to_payload(&self) -> KnnPayload {
        KnnPayload {
            k: self.k,
            instances: self
                .rows
                .iter()
                .zip(&self.labels)
                .map(|(row, label)| StoredInstance {
                    features: row.clone(),
                    label: *label,
                })
                .collect(),
            scaling: self.scaling.clone(),
        }
    }

    pub(super) fn from_payload(schema: FeatureSchema, payload: KnnPayload) -> Result<KnnModel> {
        if payload.k == 0 {
            return Err(Error::CorruptPayload("k must be >= 1".to_string()));
        }
        if payload.scaling.len() != schema.len() {
            return Err(Error::CorruptPayload(
                "scaling length does not match schema".to_string(),
            ));
        }
        let degenerate = |s: &FeatureScale| s.min > s.max || s.min.is_nan() || s.max.is_nan();
        if payload.scaling.iter().any(degenerate) {
            return Err(Error::CorruptPayload(
                "scaling ranges must satisfy min <= max".to_string(),
            ));
        }
        let mut rows = Vec::with_capacity(payload.instances.len());
        let mut labels = Vec::with_capacity(payload.instances.len());
        for instance in payload.instances {
            if instance.features.len() != schema.len() {
                return Err(Error::CorruptPayload(
                    "instance width does not match schema".to_string(),
                ));
            }
            rows.push(instance.features);
            labels.push(instance.label);
        }
        if rows.is_empty() {
            return Err(Error::CorruptPayload(
                "model stores no instances".to_string(),
            ));
        }
        Ok(KnnModel {
            schema,
            k: payload.k,
            rows,
            labels,
            scaling: payload.scaling,
        })
    }
}

#[derive(Serialize, Deserialize)]
pub(super) struct StoredInstance {
    pub features: Vec<f64>,
    pub label: f64,
}

#[derive(Serialize, Deserialize)]
pub(super) struct KnnPayload {
    pub k: usize,
    pub instances: Vec<StoredInstance>,
    pub scaling: Vec<FeatureScale>,
}

/// Records all training instances and the per-feature min/max ranges.
pub fn knn_train(data: &Dataset, k: usize) -> Result<KnnModel> {
    if k == 0 {
        return Err(Error::InvalidParam("k must be >= 1".to_string()));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset(
            "knn training needs at least one instance".to_string(),
        ));
    }
    let d = data.schema().len();
    let mut scaling = vec![
        FeatureScale {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        d
    ];
    let mut rows = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    for TrainingInstance { features, label } in data.instances() {
        let values = features.values();
        for (scale, value) in scaling.iter_mut().zip(values) {
            scale.min = scale.min.min(*value);
            scale.max = scale.max.max(*value);
        }
        rows.push(values.to_vec());
        labels.push(*label);
    }
    Ok(KnnModel {
        schema: data.schema().clone(),
        k,
        rows,
        labels,
        scaling,
    })
}

/// Candidate ordered worst-first so a max-heap keeps the k best. Distance
/// ties resolve toward the lower stored-instance index.
struct Candidate {
    dist_sq: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist_sq
            .total_cmp(&other.dist_sq)
            .then(self.index.cmp(&other.index))
    }
}

/// Predicts by averaging the labels of the `min(k, n)` nearest stored
/// instances under min-max-scaled Euclidean distance.
pub fn knn_predict(model: &KnnModel, query: &FeatureVector) -> Result<f64> {
    if query.schema() != &model.schema {
        return Err(Error::SchemaMismatch(
            "query does not match the model's feature schema".to_string(),
        ));
    }
    let scaled_query: Vec<f64> = query
        .values()
        .iter()
        .zip(&model.scaling)
        .map(|(v, s)| s.apply(*v))
        .collect();

    let keep = model.k.min(model.rows.len());
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(keep + 1);
    for (index, row) in model.rows.iter().enumerate() {
        let mut dist_sq = 0.0;
        for ((value, scale), q) in row.iter().zip(&model.scaling).zip(&scaled_query) {
            let delta = scale.apply(*value) - q;
            dist_sq += delta * delta;
        }
        heap.push(Candidate { dist_sq, index });
        if heap.len() > keep {
            heap.pop();
        }
    }

    let mut selected: Vec<usize> = heap.into_iter().map(|c| c.index).collect();
    selected.sort_unstable();
    let sum: f64 = selected.iter().map(|&i| model.labels[i]).sum();
    Ok(sum / selected.len() as f64)
}
