//! Inductive conformal prediction when calibration and training labels are
//! candidate sets rather than single classes.
//!
//! The pieces, bottom up:
//!
//! - [`data`]: labels, candidate sets, partially labeled datasets, splits.
//! - [`datagen`]: Gaussian benchmarks plus random and instance-dependent
//!   label contamination.
//! - [`train`]: a small softmax-regression / MLP trainer for partial labels
//!   (optimistic superset loss or progressive disambiguation).
//! - [`conformal`]: score sets for set-valued calibration data, critical
//!   scores and prediction sets.
//! - [`eval`]: coverage, efficiency, dominance audits and the rank-lemma
//!   harness.
//! - [`io`]: dataset, IDX and CSV readers/writers.

pub mod conformal;
pub mod data;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod io;
pub mod train;

pub use conformal::{
    check_all_condition, check_mean_condition, critical_score, prediction_set, score_set, CalibrationMethod,
    ConformalPredictor, CriticalScore, PredictionSet, ScoreSet,
};
pub use data::{CandidateSet, Instance, LabelId, PartialDataset, ProbabilityVector, SplitSpec};
pub use error::{Error, Result};
pub use train::{erm_fit, ModelSpec, Network, ProbabilisticClassifier, TrainConfig};
