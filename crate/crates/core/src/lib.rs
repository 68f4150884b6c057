//! Non-Cartesian subspace-constrained dynamic MRI reconstruction.
//!
//! The crate factors a dynamic image X into a spatial factor U and a small
//! orthonormal temporal basis Phi (X = U Phi) and reconstructs U from
//! undersampled non-Cartesian k-t data. It provides the encoding operators,
//! three interchangeable normal-operator paths (direct, per-spoke subspace
//! kernels, block-Toeplitz), four data-consistency solvers (gradient descent,
//! preconditioned gradient descent, a direct block-Toeplitz solve, and
//! conjugate gradient), an ADMM wavelet reference reconstruction, a synthetic
//! acquisition simulator, and metrics/benchmark tooling.

pub mod alloc_track;
pub mod dc;
pub mod encoding;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod phantom;
pub mod subspace;
pub mod tensor;
pub mod trajectory;
pub mod transform;
pub mod wavelet;

pub use error::{Error, Result};
