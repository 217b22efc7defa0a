use std::io;

use thiserror::Error;

use crate::transport::Phase;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("ring parameters do not match")]
    ParamsMismatch,

    #[error("modulus {modulus} is not NTT-friendly for N={n}")]
    NotNttFriendly { modulus: u64, n: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("noise budget exhausted: estimate 2^{estimate_bits:.1} >= limit 2^{limit_bits:.1}")]
    NoiseBudget { estimate_bits: f64, limit_bits: f64 },

    #[error("part count mismatch: {0} vs {1}")]
    PartCount(usize, usize),

    #[error("no feasible partition window: {0}")]
    Partition(String),

    #[error("packing overflow: product degree {degree} does not fit ring degree {n}")]
    PackingOverflow { degree: usize, n: usize },

    #[error("channel closed")]
    ChannelClosed,

    #[error("phase tag mismatch: expected {expected:?}, got {got:?}")]
    TagMismatch { expected: Phase, got: Phase },

    #[error("malformed message: {0}")]
    Decode(String),

    #[error("bitwidth mismatch: {0} vs {1}")]
    Bitwidth(u32, u32),

    #[error("OT invocation out of sync: expected {expected}, got {got}")]
    Desync { expected: u64, got: u64 },

    #[error("OT index {index} out of range for k={k}")]
    IndexOutOfRange { index: usize, k: usize },

    #[error("no precomputed masks left for layer {0}")]
    PrecomputeMissing(u32),

    #[error("mask {id} of layer {layer} was already consumed")]
    MaskReuse { layer: u32, id: u64 },

    #[error("fixed-point overflow: {0}")]
    Overflow(String),

    #[error("backend mismatch: {0}")]
    Backend(String),

    #[error("remote party error: {0}")]
    Remote(String),

    #[error("io: {0}")]
    Io(#[from] io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn decode(msg: impl Into<String>) -> Self {
        Error::Decode(msg.into())
    }
}
