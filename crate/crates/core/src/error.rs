use alloc::string::String;
use core::fmt;

use crate::graph::Violation;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An `RnnSpec` (or layer list) that cannot describe a network.
    InvalidSpec(String),
    /// A graph that breaks one of the `SharedWeightNet` invariants.
    InvalidNet(Violation),
    ParamIndex { index: usize, num_params: usize },
    DimensionMismatch { what: &'static str, expected: usize, actual: usize },
    ClassOutOfRange { class: usize, classes: usize },
    /// Path enumeration would visit more paths than the oracle guard allows.
    PathLimit { limit: u64 },
    /// The operation needs the (layer, time) structure of an unrolled RNN.
    NotRnn,
    NonFinite(&'static str),
    NonPositiveScale { layer: usize, unit: usize },
    ZeroDenominator,
    EmptyBatch,
    InvalidConfig(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidSpec(msg) => write!(f, "invalid network spec: {msg}"),
            Error::InvalidNet(v) => write!(f, "invalid network: {v}"),
            Error::ParamIndex { index, num_params } => {
                write!(f, "parameter index {index} out of range (m = {num_params})")
            }
            Error::DimensionMismatch { what, expected, actual } => {
                write!(f, "{what}: expected length {expected}, got {actual}")
            }
            Error::ClassOutOfRange { class, classes } => {
                write!(f, "class {class} out of range for {classes} classes")
            }
            Error::PathLimit { limit } => {
                write!(f, "path enumeration exceeds the limit of {limit} paths")
            }
            Error::NotRnn => f.write_str("network was not built from an RnnSpec"),
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::NonPositiveScale { layer, unit } => {
                write!(f, "scaling factor for layer {layer} unit {unit} must be positive")
            }
            Error::ZeroDenominator => f.write_str("ratio denominator is zero"),
            Error::EmptyBatch => f.write_str("batch is empty"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
