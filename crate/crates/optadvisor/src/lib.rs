//! Profile-driven optimization advisor for GPU kernels.
//!
//! The pipeline has three tiers backed by an optimization database:
//!
//! 1. **Profile ingestion** ([`profile`]) parses hardware-counter profiles
//!    and normalizes every counter by the cycle count, producing
//!    runtime-independent feature vectors.
//! 2. **Learning** ([`optdb`], [`learners`]) pairs before/after profiles from
//!    the database into per-optimization training sets and fits one speedup
//!    predictor per optimization: either instance-based k-nearest-neighbor
//!    regression or a model tree with linear models in its nodes.
//! 3. **Recommendation** ([`recommend`]) predicts the speedup of every known
//!    optimization on a user profile, ranks the predictions, and reports the
//!    top choices above a configurable threshold.
//!
//! The [`evaluation`] module reproduces the train/test experiment protocols
//! used to validate the predictors, including a deterministic synthetic
//! dataset generator with known ground-truth speedups.
//!
//! The `examples/` directory demonstrates each capability end to end; the
//! `optadvisor` binary exposes the same workflows as subcommands.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod learners;
pub mod optdb;
pub mod profile;
pub mod recommend;

pub use error::{Error, Result};
pub use learners::{Dataset, LearnerKind, ModelBundle, TrainedModel};
pub use optdb::Database;
pub use profile::{FeatureSchema, FeatureVector, SampleRecord};
pub use recommend::{Recommendation, ReportConfig};
