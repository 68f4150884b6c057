//! Single-level orthonormal 2-D Haar transform, applied per subspace channel
//! by the ADMM reference reconstruction.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn haar_pair_forward(a: Complex64, b: Complex64) -> (Complex64, Complex64) {
    ((a + b) * INV_SQRT2, (a - b) * INV_SQRT2)
}

/// Forward single-level 2-D Haar: approximation in the top-left quadrant,
/// details in the other three. Orthonormal, so the inverse is the transpose.
pub fn haar2_forward(image: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    let (nx, ny) = image.dim();
    if nx % 2 != 0 || ny % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "Haar transform needs even dims, got {nx}x{ny}"
        )));
    }
    let (hx, hy) = (nx / 2, ny / 2);
    let mut out = Array2::<Complex64>::zeros((nx, ny));
    for i in 0..hx {
        for j in 0..hy {
            let p00 = image[[2 * i, 2 * j]];
            let p01 = image[[2 * i, 2 * j + 1]];
            let p10 = image[[2 * i + 1, 2 * j]];
            let p11 = image[[2 * i + 1, 2 * j + 1]];
            let (r0a, r0d) = haar_pair_forward(p00, p01);
            let (r1a, r1d) = haar_pair_forward(p10, p11);
            let (ll, hl) = haar_pair_forward(r0a, r1a);
            let (lh, hh) = haar_pair_forward(r0d, r1d);
            out[[i, j]] = ll;
            out[[i + hx, j]] = hl;
            out[[i, j + hy]] = lh;
            out[[i + hx, j + hy]] = hh;
        }
    }
    Ok(out)
}

/// Inverse of [`haar2_forward`].
pub fn haar2_inverse(coeffs: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    let (nx, ny) = coeffs.dim();
    if nx % 2 != 0 || ny % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "Haar transform needs even dims, got {nx}x{ny}"
        )));
    }
    let (hx, hy) = (nx / 2, ny / 2);
    let mut out = Array2::<Complex64>::zeros((nx, ny));
    for i in 0..hx {
        for j in 0..hy {
            let ll = coeffs[[i, j]];
            let hl = coeffs[[i + hx, j]];
            let lh = coeffs[[i, j + hy]];
            let hh = coeffs[[i + hx, j + hy]];
            let r0a = (ll + hl) * INV_SQRT2;
            let r1a = (ll - hl) * INV_SQRT2;
            let r0d = (lh + hh) * INV_SQRT2;
            let r1d = (lh - hh) * INV_SQRT2;
            out[[2 * i, 2 * j]] = (r0a + r0d) * INV_SQRT2;
            out[[2 * i, 2 * j + 1]] = (r0a - r0d) * INV_SQRT2;
            out[[2 * i + 1, 2 * j]] = (r1a + r1d) * INV_SQRT2;
            out[[2 * i + 1, 2 * j + 1]] = (r1a - r1d) * INV_SQRT2;
        }
    }
    Ok(out)
}

/// Complex soft threshold: shrink the magnitude by tau, keep the phase.
pub fn soft_threshold(z: Complex64, tau: f64) -> Complex64 {
    let m = z.norm();
    if m <= tau {
        Complex64::ZERO
    } else {
        z * ((m - tau) / m)
    }
}
