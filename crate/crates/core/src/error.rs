use thiserror::Error;

use crate::bits::BitString;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bit string {0:?}")]
    BadBits(String),
    #[error("invalid rational {0:?}")]
    BadRational(String),
    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("invalid online constraint: modulus {modulus}, residue {residue}")]
    BadConstraint { modulus: usize, residue: usize },
    #[error("negative value {value} at node {node}")]
    Negative { node: BitString, value: String },
    #[error("non-increasing update at node {node} (step {step})")]
    NonIncreasing { node: BitString, step: u64 },
    #[error("stream step {step} is out of order")]
    StepOrder { step: u64 },
    #[error("stream becomes invalid at step {step}: {detail}")]
    InvalidStream { step: u64, detail: String },
    #[error("semimeasure has zero mass at {0} but positive mass below it")]
    ZeroParentMass(BitString),
    #[error("depth {0} is not valid here: {1}")]
    BadDepth(usize, &'static str),
    #[error("unsupported parameter: {0}")]
    BadParameter(String),
    #[error("decoder input is undefined: {0}")]
    Undefined(String),
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("precision exhausted after {bits} bits while deciding {what}")]
    PrecisionExhausted { bits: u32, what: String },
    #[error("state space too large: {size} states exceeds bound {bound}")]
    StateSpace { size: u128, bound: u128 },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
