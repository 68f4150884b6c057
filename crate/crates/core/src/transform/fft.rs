//! Centered 2-D FFT helpers on top of rustfft.
//!
//! Convention: the image center pixel (nx/2, ny/2) is the spatial origin and
//! the k-space center bin is frequency zero, so `fft2c` of a centered delta is
//! a flat array of ones. Grid sizes must be even.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

fn plan_cache() -> &'static Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Cached 1-D plan; `inverse` selects the unnormalized e^{+i2pi} transform.
pub fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut cache = plan_cache().lock().unwrap();
    cache
        .entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

/// Swap quadrants so the center element moves to index 0 (even sizes only,
/// where fftshift and ifftshift coincide).
pub fn fftshift2(a: &mut Array2<Complex64>) {
    let (nx, ny) = a.dim();
    assert!(nx % 2 == 0 && ny % 2 == 0, "fftshift requires even dims");
    let (hx, hy) = (nx / 2, ny / 2);
    for i in 0..hx {
        for j in 0..ny {
            let jj = (j + hy) % ny;
            let tmp = a[[i, j]];
            a[[i, j]] = a[[i + hx, jj]];
            a[[i + hx, jj]] = tmp;
        }
    }
}

fn fft2_inplace(a: &mut Array2<Complex64>, inverse: bool) {
    let (nx, ny) = a.dim();
    let row_fft = plan(ny, inverse);
    let col_fft = plan(nx, inverse);

    {
        let slice = a.as_slice_mut().expect("contiguous row-major array");
        for row in slice.chunks_exact_mut(ny) {
            row_fft.process(row);
        }
    }
    let mut col = vec![Complex64::ZERO; nx];
    for j in 0..ny {
        for i in 0..nx {
            col[i] = a[[i, j]];
        }
        col_fft.process(&mut col);
        for i in 0..nx {
            a[[i, j]] = col[i];
        }
    }
}

/// Centered forward 2-D DFT, unnormalized:
/// `out[f] = sum_r in[r] e^{-i2pi f.r / N}` with centered index conventions.
pub fn fft2c(a: &Array2<Complex64>) -> Array2<Complex64> {
    let mut w = a.clone();
    fftshift2(&mut w);
    fft2_inplace(&mut w, false);
    fftshift2(&mut w);
    w
}

/// Centered inverse 2-D DFT with 1/(nx*ny) normalization: `ifft2c(fft2c(x)) = x`.
pub fn ifft2c(a: &Array2<Complex64>) -> Array2<Complex64> {
    let (nx, ny) = a.dim();
    let mut w = ifft2c_unnormalized(a);
    let scale = 1.0 / (nx * ny) as f64;
    w.mapv_inplace(|z| z * scale);
    w
}

/// Centered conjugate-transpose of `fft2c` (the unnormalized e^{+i2pi} sum).
pub fn ifft2c_unnormalized(a: &Array2<Complex64>) -> Array2<Complex64> {
    let mut w = a.clone();
    fftshift2(&mut w);
    fft2_inplace(&mut w, true);
    fftshift2(&mut w);
    w
}
