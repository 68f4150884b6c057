//! Toeplitz embedding of the weighted NUFFT normal operator.
//!
//! F_nu^H diag(w) F_nu is a convolution with the point spread function of the
//! sample set, so on a 2x zero-padded grid it becomes a single k-space
//! multiplication: Z^H F^-1 (q . F Z x) with q the FFT of the PSF.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::transform::fft::{fft2c, ifft2c};
use crate::transform::gridding::GriddingPlan;
use crate::transform::ndft::{ndft_adjoint, KPoint};

/// Centered zero-pad to twice the size in each dimension (the operator Z).
pub fn zero_pad_embed(image: &Array2<Complex64>) -> Array2<Complex64> {
    let (nx, ny) = image.dim();
    let mut out = Array2::<Complex64>::zeros((2 * nx, 2 * ny));
    let (ox, oy) = (nx / 2, ny / 2);
    for i in 0..nx {
        for j in 0..ny {
            out[[i + ox, j + oy]] = image[[i, j]];
        }
    }
    out
}

/// Centered crop, the adjoint of [`zero_pad_embed`] (Z^H Z = I).
pub fn crop_center(image: &Array2<Complex64>, size: (usize, usize)) -> Result<Array2<Complex64>> {
    let (bx, by) = image.dim();
    let (nx, ny) = size;
    if nx > bx || ny > by || (bx - nx) % 2 != 0 || (by - ny) % 2 != 0 {
        return Err(Error::shape(
            "crop_center",
            format!("target {nx}x{ny} centered inside {bx}x{by}"),
            "incompatible (size or parity)",
        ));
    }
    let (ox, oy) = ((bx - nx) / 2, (by - ny) / 2);
    let mut out = Array2::<Complex64>::zeros((nx, ny));
    for i in 0..nx {
        for j in 0..ny {
            out[[i, j]] = image[[i + ox, j + oy]];
        }
    }
    Ok(out)
}

/// Diagonal of Q for one scalar weight set, on the 2x-oversampled grid in
/// centered frequency order.
#[derive(Debug, Clone)]
pub struct ToeplitzDiagonal {
    pub q: Array2<Complex64>,
}

impl ToeplitzDiagonal {
    pub fn grid_size(&self) -> (usize, usize) {
        self.q.dim()
    }
}

fn psf_to_q(mut psf: Array2<Complex64>) -> ToeplitzDiagonal {
    // Differences r - r' of in-image pixel coordinates never reach the -N
    // plane of the 2N-point difference grid, so those PSF entries are free.
    // Zeroing them makes the PSF exactly Hermitian-symmetric and q real to
    // rounding for real weights, without changing the embedded operator.
    let (gx, gy) = psf.dim();
    for j in 0..gy {
        psf[[0, j]] = Complex64::ZERO;
    }
    for i in 0..gx {
        psf[[i, 0]] = Complex64::ZERO;
    }
    ToeplitzDiagonal { q: fft2c(&psf) }
}

/// Exact (NDFT-built) Q diagonal for image size `size`.
pub fn psf_diagonal(coords: &[KPoint], weights: &[Complex64], size: (usize, usize)) -> Result<ToeplitzDiagonal> {
    let (nx, ny) = size;
    if nx % 2 != 0 || ny % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "psf_diagonal needs an even image size, got {nx}x{ny}"
        )));
    }
    if coords.len() != weights.len() {
        return Err(Error::shape(
            "psf_diagonal",
            format!("{} weights", coords.len()),
            format!("{}", weights.len()),
        ));
    }
    let psf = ndft_adjoint(weights, coords, (2 * nx, 2 * ny))?;
    Ok(psf_to_q(psf))
}

/// Fast (gridding-built) Q diagonal; `plan2x` must be a plan for the doubled
/// grid (2 nx, 2 ny).
pub fn psf_diagonal_fast(
    coords: &[KPoint],
    weights: &[Complex64],
    size: (usize, usize),
    plan2x: &GriddingPlan,
) -> Result<ToeplitzDiagonal> {
    let (nx, ny) = size;
    if nx % 2 != 0 || ny % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "psf_diagonal needs an even image size, got {nx}x{ny}"
        )));
    }
    if plan2x.image_size() != (2 * nx, 2 * ny) {
        return Err(Error::shape(
            "psf_diagonal_fast",
            format!("plan for {}x{}", 2 * nx, 2 * ny),
            format!("plan for {}x{}", plan2x.image_size().0, plan2x.image_size().1),
        ));
    }
    let psf = plan2x.adjoint(weights, coords)?;
    Ok(psf_to_q(psf))
}

/// Apply Z^H F^-1 (q . F Z x).
pub fn toeplitz_apply(x: &Array2<Complex64>, q: &ToeplitzDiagonal) -> Result<Array2<Complex64>> {
    let (nx, ny) = x.dim();
    if q.q.dim() != (2 * nx, 2 * ny) {
        return Err(Error::shape(
            "toeplitz_apply",
            format!("q {}x{}", 2 * nx, 2 * ny),
            format!("q {}x{}", q.q.dim().0, q.q.dim().1),
        ));
    }
    let mut spec = fft2c(&zero_pad_embed(x));
    spec.zip_mut_with(&q.q, |s, w| *s *= w);
    crop_center(&ifft2c(&spec), (nx, ny))
}
