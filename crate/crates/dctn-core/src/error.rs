//! Error type shared by every module of the crate.

use alloc::string::String;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input width (or length) does not match what the operation expects.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// `backward` was called without a preceding `forward` on the same net.
    BackwardBeforeForward,
    /// A gradient buffer contains NaN or infinity; reports the offending
    /// layer and the largest finite |grad| seen there.
    NonFiniteGradient { layer: usize, max_abs_grad: f64 },
    /// A loss evaluated to NaN or infinity.
    NonFiniteLoss { context: &'static str },
    /// Invalid hyperparameter, shift specification or architecture.
    InvalidConfig(String),
    /// A dataset (or a post-shift slice of one) has no samples.
    EmptyDomain(String),
    /// Source index out of range.
    InvalidSourceIndex { index: usize, n_sources: usize },
    /// A label does not belong to the class set it is used against.
    LabelOutsideClassSet { label: usize },
    /// The target dataset carries labels; training operations refuse it.
    LabeledTarget,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                what,
                expected,
                got,
            } => write!(f, "dimension mismatch for {what}: expected {expected}, got {got}"),
            Error::BackwardBeforeForward => {
                write!(f, "backward called before forward on this network")
            }
            Error::NonFiniteGradient {
                layer,
                max_abs_grad,
            } => write!(
                f,
                "non-finite gradient in layer {layer} (max finite |grad| = {max_abs_grad:e})"
            ),
            Error::NonFiniteLoss { context } => write!(f, "non-finite loss in {context}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::EmptyDomain(name) => write!(f, "domain '{name}' has no samples"),
            Error::InvalidSourceIndex { index, n_sources } => {
                write!(f, "source index {index} out of range (n_sources = {n_sources})")
            }
            Error::LabelOutsideClassSet { label } => {
                write!(f, "label {label} outside the class set of its domain")
            }
            Error::LabeledTarget => {
                write!(f, "target dataset must be unlabeled for training operations")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
