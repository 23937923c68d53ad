//! Mutual-information machinery: exact enumeration on small systems,
//! variational bounds from decoders, and a Donsker–Varadhan estimator.

mod bounds;
mod exact;
mod mine;

pub use bounds::{
    bernoulli_log_likelihood, categorical_log_likelihood, decoder_ce_bound, eve_ce_bound, PROB_CLAMP,
};
pub use exact::{
    channel_matrix, entropy_bits, exact_mi, h2, joint_code_output, joint_for, joint_label_output,
    joint_source_output, mutual_information_bits, posterior, tabular_bound, MiTarget, MAX_ENUMERATION,
};
pub use mine::{mine_estimate, MineConfig, MineNet, MIN_MINE_SAMPLES};

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::models::ModelError;

#[derive(Debug, Error)]
pub enum MiError {
    #[error("enumeration size {size} exceeds {limit}")]
    EnumerationBound { size: usize, limit: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("estimation failed: {0}")]
    EstimationFailed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MiMethod {
    Exact,
    DecoderBound,
    EveBound,
    Mine,
}

impl MiMethod {
    pub fn name(self) -> &'static str {
        match self {
            MiMethod::Exact => "exact",
            MiMethod::DecoderBound => "decoder-bound",
            MiMethod::EveBound => "eve-bound",
            MiMethod::Mine => "mine",
        }
    }
}

/// An information estimate in bits.
#[derive(Clone, Debug, PartialEq)]
pub struct MiReport {
    /// Bits; clamped at zero for estimators.
    pub value: f64,
    pub method: MiMethod,
    pub sample_count: usize,
    /// Unclamped estimate for MINE.
    pub auxiliary: Option<f64>,
}
