//! Channel estimation under Gaussian priors: synthetic data, classical
//! estimators, ReLU regressors and their linear-region structure, and the
//! sweeps that compare them.

pub mod channel_model;
pub mod error;
pub mod estimators;
pub mod experiment;
mod format;
pub mod linalg;
pub mod piecewise;
pub mod relu_net;
pub mod rng;

pub use channel_model::{
    gen_dataset, gen_mismatched_dataset, observe, sample_channel, snr_db_to_noise_var,
    CovarianceSpec, Distortion, MismatchCase, MismatchSpec, ObservationModel, RappParams,
    SampleSet,
};
pub use error::{Error, Result};
pub use estimators::{AffineEstimator, DimFactor, MseReport};
pub use format::fmt_sig12;
pub use piecewise::{ActivationPattern, LinearityCheck, OccupancyReport, RegionAffine};
pub use relu_net::{MlpParams, MlpSpec, TrainConfig, TrainReport};
pub use rng::{derive_seed, SimRng};
