//! The two speedup predictors behind one train/predict contract:
//! instance-based k-nearest-neighbor regression ([`knn`]) and an M5-style
//! model tree with linear models in its nodes ([`m5`]).
//!
//! Both learners are deterministic: training the same dataset in the same
//! order produces byte-identical serialized models.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optdb::TrainingInstance;
use crate::profile::{FeatureSchema, FeatureVector};

pub mod knn;
pub mod m5;

pub use knn::{knn_predict, knn_train, KnnModel};
pub use m5::{m5_build, m5_predict, M5Model};

/// Version written into every serialized model file.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Which learning algorithm a model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    /// Instance-based KNN regression.
    Ibk,
    /// M5-style model tree.
    M5p,
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerKind::Ibk => write!(f, "ibk"),
            LearnerKind::M5p => write!(f, "m5p"),
        }
    }
}

impl FromStr for LearnerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<LearnerKind> {
        match s {
            "ibk" => Ok(LearnerKind::Ibk),
            "m5p" => Ok(LearnerKind::M5p),
            other => Err(Error::InvalidParam(format!(
                "unknown learner '{other}' (expected 'ibk' or 'm5p')"
            ))),
        }
    }
}

/// A labelled training set: a feature schema plus instances conforming to it.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: FeatureSchema,
    instances: Vec<TrainingInstance>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, instances: Vec<TrainingInstance>) -> Result<Dataset> {
        for instance in &instances {
            if instance.features.schema() != &schema {
                return Err(Error::SchemaMismatch(
                    "training instance does not conform to the dataset schema".to_string(),
                ));
            }
        }
        Ok(Dataset { schema, instances })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn instances(&self) -> &[TrainingInstance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.instances.iter().map(|i| i.label).collect()
    }
}

/// A trained per-optimization predictor together with its identity.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub learner_kind: LearnerKind,
    pub optimization_id: String,
    pub schema: FeatureSchema,
    pub payload: ModelPayload,
}

#[derive(Debug, Clone)]
pub enum ModelPayload {
    Knn(KnnModel),
    M5(M5Model),
}

impl TrainedModel {
    /// Trains one model of the requested kind. `k` only affects `ibk`.
    pub fn train(
        kind: LearnerKind,
        optimization_id: &str,
        data: &Dataset,
        k: usize,
    ) -> Result<TrainedModel> {
        let payload = match kind {
            LearnerKind::Ibk => ModelPayload::Knn(knn_train(data, k)?),
            LearnerKind::M5p => ModelPayload::M5(m5_build(data)?),
        };
        Ok(TrainedModel {
            learner_kind: kind,
            optimization_id: optimization_id.to_string(),
            schema: data.schema().clone(),
            payload,
        })
    }

    /// Predicts the speedup of this model's optimization for one profile.
    pub fn predict(&self, query: &FeatureVector) -> Result<f64> {
        if query.schema() != &self.schema {
            return Err(Error::SchemaMismatch(format!(
                "query does not match the schema of model '{}'",
                self.optimization_id
            )));
        }
        match &self.payload {
            ModelPayload::Knn(m) => knn_predict(m, query),
            ModelPayload::M5(m) => m5_predict(m, query),
        }
    }
}

/* ----------------------------- serialization ----------------------------- */

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    learner_kind: LearnerKind,
    optimization_id: String,
    schema: FeatureSchema,
    payload: serde_json::Value,
}

fn payload_to_value(payload: &ModelPayload) -> Result<serde_json::Value> {
    let value = match payload {
        ModelPayload::Knn(m) => serde_json::to_value(m.to_payload()),
        ModelPayload::M5(m) => serde_json::to_value(m.to_payload()),
    };
    value.map_err(|e| Error::CorruptPayload(e.to_string()))
}

fn payload_from_value(
    kind: LearnerKind,
    schema: &FeatureSchema,
    value: serde_json::Value,
) -> Result<ModelPayload> {
    match kind {
        LearnerKind::Ibk => {
            let payload = serde_json::from_value(value)
                .map_err(|e| Error::CorruptPayload(format!("bad knn payload: {e}")))?;
            Ok(ModelPayload::Knn(KnnModel::from_payload(
                schema.clone(),
                payload,
            )?))
        }
        LearnerKind::M5p => {
            let payload = serde_json::from_value(value)
                .map_err(|e| Error::CorruptPayload(format!("bad m5 payload: {e}")))?;
            Ok(ModelPayload::M5(M5Model::from_payload(
                schema.clone(),
                payload,
            )?))
        }
    }
}

/// Serializes one model to its JSON document form.
pub fn serialize_model(model: &TrainedModel) -> Result<Vec<u8>> {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        learner_kind: model.learner_kind,
        optimization_id: model.optimization_id.clone(),
        schema: model.schema.clone(),
        payload: payload_to_value(&model.payload)?,
    };
    let mut bytes =
        serde_json::to_vec_pretty(&file).map_err(|e| Error::CorruptPayload(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Decodes a model document, checking the format version first.
pub fn deserialize_model(bytes: &[u8]) -> Result<TrainedModel> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| Error::CorruptPayload(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::CorruptPayload("missing format_version".to_string()))?;
    if version != MODEL_FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: version as u32,
            supported: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| Error::CorruptPayload(e.to_string()))?;
    let payload = payload_from_value(file.learner_kind, &file.schema, file.payload)?;
    Ok(TrainedModel {
        learner_kind: file.learner_kind,
        optimization_id: file.optimization_id,
        schema: file.schema,
        payload,
    })
}

/* -------------------------------- bundles -------------------------------- */

/// Human-facing prose carried alongside a model so recommendations can show
/// names, explanations, and examples without re-opening the database.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProseEntry {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub example: String,
}

/// All per-optimization models from one training run, sharing one schema.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub learner_kind: LearnerKind,
    pub schema: FeatureSchema,
    pub models: BTreeMap<String, TrainedModel>,
    pub prose: BTreeMap<String, ProseEntry>,
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    format_version: u32,
    learner_kind: LearnerKind,
    schema: FeatureSchema,
    models: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    prose: BTreeMap<String, ProseEntry>,
}

impl ModelBundle {
    pub fn new(models: BTreeMap<String, TrainedModel>) -> Result<ModelBundle> {
        let first = models.values().next().ok_or_else(|| {
            Error::EmptyDataset("a model bundle needs at least one model".to_string())
        })?;
        let learner_kind = first.learner_kind;
        let schema = first.schema.clone();
        for model in models.values() {
            if model.learner_kind != learner_kind {
                return Err(Error::InvalidParam(
                    "bundle models must share one learner kind".to_string(),
                ));
            }
            if model.schema != schema {
                return Err(Error::SchemaMismatch(
                    "bundle models must share one feature schema".to_string(),
                ));
            }
        }
        Ok(ModelBundle {
            learner_kind,
            schema,
            models,
            prose: BTreeMap::new(),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut models = BTreeMap::new();
        for (id, model) in &self.models {
            models.insert(id.clone(), payload_to_value(&model.payload)?);
        }
        let file = BundleFile {
            format_version: MODEL_FORMAT_VERSION,
            learner_kind: self.learner_kind,
            schema: self.schema.clone(),
            models,
            prose: self.prose.clone(),
        };
        let mut bytes =
            serde_json::to_vec_pretty(&file).map_err(|e| Error::CorruptPayload(e.to_string()))?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ModelBundle> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::CorruptPayload(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::CorruptPayload("missing format_version".to_string()))?;
        if version != MODEL_FORMAT_VERSION as u64 {
            return Err(Error::VersionMismatch {
                found: version as u32,
                supported: MODEL_FORMAT_VERSION,
            });
        }
        let file: BundleFile =
            serde_json::from_value(value).map_err(|e| Error::CorruptPayload(e.to_string()))?;
        let mut models = BTreeMap::new();
        for (id, payload) in file.models {
            let payload = payload_from_value(file.learner_kind, &file.schema, payload)?;
            models.insert(
                id.clone(),
                TrainedModel {
                    learner_kind: file.learner_kind,
                    optimization_id: id,
                    schema: file.schema.clone(),
                    payload,
                },
            );
        }
        Ok(ModelBundle {
            learner_kind: file.learner_kind,
            schema: file.schema,
            models,
            prose: file.prose,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<ModelBundle> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        ModelBundle::from_bytes(&bytes)
    }
}
