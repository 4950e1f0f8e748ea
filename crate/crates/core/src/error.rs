use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Two tensors (or a tensor and an operator) disagree on an extent.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("axis pair ({axis_a}, {axis_b}) has mismatched extents {extent_a} != {extent_b}")]
    AxisMismatch {
        axis_a: usize,
        axis_b: usize,
        extent_a: usize,
        extent_b: usize,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("{what} failed on a {rows}x{cols} matrix")]
    Numerical {
        what: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },

    /// The evolution discarded more weight than the configured failure threshold.
    #[error(
        "truncation failure at step {step}: cumulative discarded weight {discarded:.3e} \
         exceeds {threshold:.3e} (max bond {max_bond})"
    )]
    Truncation {
        step: usize,
        discarded: f64,
        threshold: f64,
        max_bond: usize,
        entropy_profile: Vec<f64>,
    },

    #[error("singular point: {0}")]
    Singular(String),

    #[error("did not converge: {0}")]
    NoConvergence(String),
}
