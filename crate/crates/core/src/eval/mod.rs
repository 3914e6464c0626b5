//! Scoring metrics, leave-one-subject-out protocol, ablation sweeps.

mod metrics;
mod protocol;

use thiserror::Error;

pub use metrics::{
    auc_trapezoid, eer, ffr_at_flr, hter, hter_per_sample, operating_points, roc_auc, MetricsReport, OperatingPoint,
    ScoredSet,
};
pub use protocol::{
    ablation_csv, ablation_sweep, apply_axis, loso_run, score_samples, subjects_of, AblationAxis, AblationBase,
    AblationRow, FoldResult, LosoOptions, LosoResult,
};

use crate::model::ModelError;
use crate::train::TrainError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid scores: {0}")]
    Input(String),
    #[error("metric needs both classes, got {bonafide} bonafide and {mask} mask samples")]
    SingleClass { bonafide: usize, mask: usize },
    #[error("leave-one-subject-out needs at least 2 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("held-out subject {subject} found in its own training set")]
    Leak { subject: String },
    #[error("unknown ablation axis {0:?}")]
    InvalidAxis(String),
    #[error("invalid value {value:?} for axis {axis}: {message}")]
    InvalidValue { axis: AblationAxis, value: String, message: String },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
