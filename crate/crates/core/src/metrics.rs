//! NRMSE / PSNR / SSIM on spatial factors and reconstructed frames.

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// ||test - ref||_2 / ||ref||_2 over all complex entries. Scale-reporting,
/// not scale-invariant: nrmse(a*ref, ref) = |a - 1|.
pub fn nrmse(test: &[Complex64], reference: &[Complex64]) -> Result<f64> {
    if test.len() != reference.len() {
        return Err(Error::shape("nrmse", format!("{}", reference.len()), format!("{}", test.len())));
    }
    let den: f64 = reference.iter().map(|z| z.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::InvalidArgument("nrmse reference must be nonzero".into()));
    }
    let num: f64 = test.iter().zip(reference).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok((num / den).sqrt())
}

pub fn nrmse_factor(test: &Array3<Complex64>, reference: &Array3<Complex64>) -> Result<f64> {
    nrmse(
        test.as_slice().expect("contiguous"),
        reference.as_slice().expect("contiguous"),
    )
}

/// Peak signal-to-noise ratio in dB on magnitude images:
/// 10 log10(max|ref|^2 / MSE(|test|, |ref|)). Identical inputs give +inf.
pub fn psnr(test: &Array2<f64>, reference: &Array2<f64>) -> Result<f64> {
    if test.dim() != reference.dim() {
        return Err(Error::shape(
            "psnr",
            format!("{:?}", reference.dim()),
            format!("{:?}", test.dim()),
        ));
    }
    if reference.is_empty() {
        return Err(Error::InvalidArgument("psnr needs a nonempty image".into()));
    }
    let peak = reference.iter().cloned().fold(0.0, f64::max);
    let mse: f64 = test
        .iter()
        .zip(reference.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / test.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_window() -> [f64; 11] {
    let sigma = 1.5;
    let mut w = [0.0; 11];
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - 5.0;
        *v = (-x * x / (2.0 * sigma * sigma)).exp();
        sum += *v;
    }
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5, K1 = 0.01,
/// K2 = 0.03) and an explicit dynamic range.
pub fn ssim_with_range(test: &Array2<f64>, reference: &Array2<f64>, range: f64) -> Result<f64> {
    if test.dim() != reference.dim() {
        return Err(Error::shape(
            "ssim",
            format!("{:?}", reference.dim()),
            format!("{:?}", test.dim()),
        ));
    }
    let (nx, ny) = test.dim();
    if nx < 11 || ny < 11 {
        return Err(Error::InvalidArgument(format!(
            "ssim needs images at least 11x11, got {nx}x{ny}"
        )));
    }
    if !(range > 0.0) {
        return Err(Error::InvalidArgument("ssim needs a positive dynamic range".into()));
    }
    let w = gaussian_window();
    let c1 = (0.01 * range) * (0.01 * range);
    let c2 = (0.03 * range) * (0.03 * range);

    // Separable weighted moments.
    let conv = |img: &Array2<f64>| -> Array2<f64> {
        let mut rowpass = Array2::<f64>::zeros((nx, ny - 10));
        for i in 0..nx {
            for j in 0..ny - 10 {
                let mut s = 0.0;
                for (k, &wk) in w.iter().enumerate() {
                    s += wk * img[[i, j + k]];
                }
                rowpass[[i, j]] = s;
            }
        }
        let mut out = Array2::<f64>::zeros((nx - 10, ny - 10));
        for i in 0..nx - 10 {
            for j in 0..ny - 10 {
                let mut s = 0.0;
                for (k, &wk) in w.iter().enumerate() {
                    s += wk * rowpass[[i + k, j]];
                }
                out[[i, j]] = s;
            }
        }
        out
    };

    let mu_x = conv(test);
    let mu_y = conv(reference);
    let xx = conv(&(test * test));
    let yy = conv(&(reference * reference));
    let xy = conv(&(test * reference));

    let mut acc = 0.0;
    let mut count = 0.0;
    for i in 0..nx - 10 {
        for j in 0..ny - 10 {
            let mx = mu_x[[i, j]];
            let my = mu_y[[i, j]];
            let vx = xx[[i, j]] - mx * mx;
            let vy = yy[[i, j]] - my * my;
            let cxy = xy[[i, j]] - mx * my;
            let s = ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            acc += s;
            count += 1.0;
        }
    }
    Ok(acc / count)
}

/// SSIM with the dynamic range taken from the reference image.
pub fn ssim(test: &Array2<f64>, reference: &Array2<f64>) -> Result<f64> {
    let range = reference.iter().cloned().fold(0.0, f64::max);
    ssim_with_range(test, reference, range)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_image(nx: usize, ny: usize, seed: u64) -> Array2<f64> {
        let mut s = seed | 1;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 + 0.5
        };
        Array2::from_shape_fn((nx, ny), |_| next())
    }

    #[test]
    fn nrmse_identities() {
        let r: Vec<Complex64> = (1..10).map(|i| Complex64::new(i as f64, -(i as f64))).collect();
        assert_eq!(nrmse(&r, &r).unwrap(), 0.0);
        let double: Vec<Complex64> = r.iter().map(|z| z * 2.0).collect();
        assert!((nrmse(&double, &r).unwrap() - 1.0).abs() < 1e-14);

        // Scale-reporting: nrmse(a ref, ref) = |a - 1| exactly.
        for a in [0.5, 1.5, 3.0] {
            let scaled: Vec<Complex64> = r.iter().map(|z| z * a).collect();
            assert!((nrmse(&scaled, &r).unwrap() - (a - 1.0f64).abs()).abs() < 1e-13);
        }

        // Direct-formula recomputation on a perturbed input.
        let mut t = r.clone();
        t[0] += Complex64::new(0.3, 0.0);
        let want = {
            let num: f64 = t.iter().zip(&r).map(|(a, b)| (a - b).norm_sqr()).sum();
            let den: f64 = r.iter().map(|z| z.norm_sqr()).sum();
            (num / den).sqrt()
        };
        assert_eq!(nrmse(&t, &r).unwrap(), want);

        let zeros = vec![Complex64::ZERO; 9];
        assert!(nrmse(&r, &zeros).is_err());
    }

    #[test]
    fn psnr_closed_forms() {
        let r = rand_image(8, 8, 3);
        assert_eq!(psnr(&r, &r).unwrap(), f64::INFINITY);

        // max|ref| = 1, MSE = 0.01 -> 20 dB; MSE = 1e-4 -> 40 dB.
        let mut reference = Array2::<f64>::zeros((4, 4));
        reference[[0, 0]] = 1.0;
        let mut t = reference.clone();
        for v in t.iter_mut() {
            *v += 0.1;
        }
        assert!((psnr(&t, &reference).unwrap() - 20.0).abs() < 1e-12);
        let mut t = reference.clone();
        for v in t.iter_mut() {
            *v += 0.01;
        }
        assert!((psnr(&t, &reference).unwrap() - 40.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_identity_and_offset() {
        let r = rand_image(16, 16, 7);
        assert!((ssim(&r, &r).unwrap() - 1.0).abs() < 1e-12);

        // A large constant offset lowers SSIM through the luminance term.
        let mut t = r.clone();
        for v in t.iter_mut() {
            *v += 2.0;
        }
        assert!(ssim(&t, &r).unwrap() < 0.9);

        // Symmetric under swap once the dynamic range is shared.
        let o = rand_image(16, 16, 9);
        let range = 2.0;
        let a = ssim_with_range(&t, &o, range).unwrap();
        let b = ssim_with_range(&o, &t, range).unwrap();
        assert!((a - b).abs() < 1e-13);

        assert!(ssim(&rand_image(8, 8, 1), &rand_image(8, 8, 2)).is_err());
    }

    #[test]
    fn ssim_matches_independent_windowed_reference() {
        // Brute-force reference implementation: direct per-window moments.
        let nx = 64;
        let r = {
            let mut img = Array2::<f64>::zeros((nx, nx));
            for i in 0..nx {
                for j in 0..nx {
                    let x = (i as f64 - 32.0) / 12.0;
                    let y = (j as f64 - 32.0) / 16.0;
                    img[[i, j]] = (-(x * x + y * y)).exp() + if x * x + y * y < 0.4 { 0.5 } else { 0.0 };
                }
            }
            img
        };
        let mut s = 41u64;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let peak = r.iter().cloned().fold(0.0, f64::max);
        let t = Array2::from_shape_fn((nx, nx), |(i, j)| r[[i, j]] + 0.1 * peak * 2.0 * next());

        let got = ssim(&t, &r).unwrap();

        let w = gaussian_window();
        let range = peak;
        let c1 = (0.01 * range) * (0.01 * range);
        let c2 = (0.03 * range) * (0.03 * range);
        let mut acc = 0.0;
        let mut count = 0.0;
        for i0 in 0..nx - 10 {
            for j0 in 0..nx - 10 {
                let (mut mx, mut my) = (0.0, 0.0);
                let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
                for a in 0..11 {
                    for b in 0..11 {
                        let wt = w[a] * w[b];
                        let tv = t[[i0 + a, j0 + b]];
                        let rv = r[[i0 + a, j0 + b]];
                        mx += wt * tv;
                        my += wt * rv;
                        xx += wt * tv * tv;
                        yy += wt * rv * rv;
                        xy += wt * tv * rv;
                    }
                }
                let vx = xx - mx * mx;
                let vy = yy - my * my;
                let cxy = xy - mx * my;
                acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1.0;
            }
        }
        let want = acc / count;
        assert!((got - want).abs() <= 1e-6, "ssim {got} vs reference {want}");
    }
}
