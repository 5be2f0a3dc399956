//! Recovery of structured signals from full-rank Gaussian quadratic
//! measurements `y_i = xᵀA_i x`.
//!
//! * [`measure`]: counter-based Gaussian ensembles, the forward model and the
//!   spectral data matrix, materialized or streamed.
//! * [`sparse`]: spectral initialization with support estimation and
//!   thresholded Wirtinger flow.
//! * [`generative`]: range projections, the projected power method and
//!   projected gradient descent for generative priors.
//! * [`harness`]: metrics, trials and experiment grids.
//! * [`oracle`]: implementation-independent checks.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod generative;
pub mod harness;
pub mod linalg;
pub mod measure;
pub mod metrics;
pub mod oracle;
pub mod recovery;
pub mod sparse;

pub use error::{Error, Result};
pub use generative::{
    default_w0, projected_power, solve_pgd, GenerativeModel, PgdConfig, ProjectionConfig, ReluDecoderModel,
    SubspaceModel,
};
pub use harness::{run_trial, Algorithm, PriorSpec, TrialRecord, TrialSpec};
pub use measure::{sample_ensemble, EnsembleHeader, MeasurementEnsemble, MeasurementSet, Signal, Storage};
pub use metrics::{cosine_similarity, relative_distance};
pub use recovery::{RecoveryResult, Status, TraceRecord};
pub use sparse::{BetaSchedule, SparseConfig, SparseState, ThresholdKind};
