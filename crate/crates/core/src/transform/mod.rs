//! Fourier machinery: exact NDFT oracle, Kaiser-Bessel gridding NUFFT,
//! centered Cartesian FFTs, zero-pad embedding, and the Toeplitz-embedded
//! normal operator.

pub mod fft;
pub mod gridding;
pub mod ndft;
pub mod toeplitz;

pub use fft::{fft2c, ifft2c};
pub use gridding::GriddingPlan;
pub use ndft::{ndft_adjoint, ndft_forward, KPoint};
pub use toeplitz::{
    crop_center, psf_diagonal, psf_diagonal_fast, toeplitz_apply, zero_pad_embed, ToeplitzDiagonal,
};
