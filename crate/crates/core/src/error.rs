use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("layer {layer}: {what} has length {found}, expected {expected}")]
    DimensionMismatch {
        layer: usize,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid activation: {0}")]
    InvalidActivation(String),
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("empty interval: lower {lower} > upper {upper}")]
    InvalidInterval { lower: f64, upper: f64 },
    #[error("bounding line slope {slope} is negative (neuron {neuron})")]
    NegativeSlope { neuron: usize, slope: f64 },
    #[error("back-substitution depth must be at least 1")]
    InvalidDepth,
    #[error("missing bounds for layer {0}")]
    MissingBounds(usize),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },
    #[error("oracle disagreement: {0}")]
    OracleMismatch(String),
    #[error("{0}")]
    Invalid(String),
}
