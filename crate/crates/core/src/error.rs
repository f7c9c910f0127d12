//! Error taxonomy shared by every module in the crate.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Failure classes surfaced by library operations.
///
/// `Dimension` carries both offending shapes so mismatches are debuggable
/// from the message alone; the remaining variants carry prose context.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible for the named operation.
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A configuration value is out of its documented range.
    Config(String),
    /// A precondition of an operation was violated by the caller.
    Contract(String),
    /// An object was driven through an invalid state transition.
    State(String),
    /// Training produced a non-finite loss; carries the abort diagnostic.
    NonFinite {
        epoch: usize,
        batch: usize,
        param_norm: f64,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, lhs, rhs } => {
                write!(f, "{op}: incompatible shapes {lhs:?} and {rhs:?}")
            }
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::State(msg) => write!(f, "invalid state: {msg}"),
            Error::NonFinite {
                epoch,
                batch,
                param_norm,
            } => write!(
                f,
                "non-finite loss at epoch {epoch}, batch {batch} (parameter norm {param_norm:e})"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
