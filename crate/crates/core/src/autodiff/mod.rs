//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! Backward rules are recorded on the same [`Tape`] as the forward pass, so
//! a gradient is an ordinary expression that can be differentiated again.
//! Force-matching training relies on this: forces are a position gradient of
//! the energy and the loss on them is differentiated w.r.t. parameters.
//!
//! ```
//! use so3krates::autodiff::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let x = tape.leaf(Tensor::scalar(2.0)).unwrap();
//! let y = x.powi(3).unwrap();
//! let dy = tape.grad(y, &[x]).unwrap()[0];
//! let d2y = tape.grad(dy, &[x]).unwrap()[0];
//! assert_eq!(dy.item(), 12.0);
//! assert_eq!(d2y.item(), 12.0);
//! ```

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{central_difference, relative_error};
pub use tape::{concat_cols, Tape, Var};
pub use tensor::Tensor;

/// Regulariser inside `sqrt(sum(x^2) + eps)`; keeps the gradient of a norm
/// defined at the zero vector.
pub const SAFE_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },
    #[error("index {index} out of range {len} in {op}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("gradient requested of non-scalar output with shape {shape:?}")]
    NotScalar { shape: [usize; 2] },
    #[error("node belongs to a different tape")]
    ForeignNode,
    #[error("only leaves and constants can be reassigned")]
    NotALeaf,
    #[error("{op} needs at least one input")]
    Empty { op: &'static str },
}

#[cfg(test)]
mod tests;
