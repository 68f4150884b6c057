//! Data-consistency layers anchoring a prior spatial factor to acquired
//! k-t data, plus the zero-filled initializer and the ADMM wavelet reference
//! reconstruction.
//!
//! All four DC layers solve (or step toward) the prior-regularized problem
//! min_U ||b - A_Phi(U)||^2 + lambda ||U - U_cnn||^2 with interchangeable
//! normal-operator paths.

use ndarray::{Array2, Array3, Array4};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::encoding::{apply_s, combine_s, Encoder, KTData, NormalPath, SpatialFactor};
use crate::error::{Error, Result};
use crate::linalg::power_iteration_norm;
use crate::trajectory::DensityWeights;
use crate::transform::fft::{fft2c, ifft2c};
use crate::wavelet::{haar2_forward, haar2_inverse, soft_threshold};

/// Solver knobs: step size alpha (GD/PGD), regularization lambda (DS/CG),
/// fixed CG iteration count, and normal-operator path.
#[derive(Debug, Clone, Copy)]
pub struct DCConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub cg_iters: usize,
    pub normal_path: NormalPath,
}

impl Default for DCConfig {
    fn default() -> Self {
        DCConfig { alpha: 1.0, lambda: 1.0, cg_iters: 5, normal_path: NormalPath::Direct }
    }
}

impl DCConfig {
    fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument("alpha and lambda must be finite".into()));
        }
        Ok(())
    }
}

/// Cartesian k-space ramp preconditioner, applied per coil per channel as
/// F^-1 diag(ramp) F.
#[derive(Debug, Clone)]
pub struct Preconditioner {
    pub ramp: Array2<f64>,
}

/// ramp(k) = max(|k|, epsilon) on centered integer-bin frequencies in
/// cycles/pixel. Default epsilon is half the smallest nonzero |k| bin.
pub fn build_ramp_preconditioner(size: (usize, usize), epsilon: Option<f64>) -> Result<Preconditioner> {
    let (nx, ny) = size;
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument("preconditioner needs a nonzero size".into()));
    }
    let eps = epsilon.unwrap_or(0.5 / nx.max(ny) as f64);
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
    }
    let ramp = Array2::from_shape_fn((nx, ny), |(i, j)| {
        let kx = (i as f64 - nx as f64 / 2.0) / nx as f64;
        let ky = (j as f64 - ny as f64 / 2.0) / ny as f64;
        (kx * kx + ky * ky).sqrt().max(eps)
    });
    Ok(Preconditioner { ramp })
}

impl Preconditioner {
    fn apply_image(&self, img: &Array2<Complex64>) -> Array2<Complex64> {
        let mut spec = fft2c(img);
        spec.zip_mut_with(&self.ramp, |z, &r| *z *= r);
        ifft2c(&spec)
    }

    /// Apply per coil per channel on a coil-factor stack.
    fn apply_coil_factors(&self, y: &mut Array4<Complex64>) {
        let (nc, nx, ny, l) = y.dim();
        for c in 0..nc {
            for k in 0..l {
                let mut img = Array2::<Complex64>::zeros((nx, ny));
                for i in 0..nx {
                    for j in 0..ny {
                        img[[i, j]] = y[[c, i, j, k]];
                    }
                }
                let filtered = self.apply_image(&img);
                for i in 0..nx {
                    for j in 0..ny {
                        y[[c, i, j, k]] = filtered[[i, j]];
                    }
                }
            }
        }
    }
}

/// Zero-filled regridding initializer:
/// U0 = S^dagger F_nu^H D Omega^*(b) Phi^H / (nx ny). The fixed 1/(nx ny)
/// factor makes unit-weight full-Cartesian regridding exact.
pub fn zero_filled_init(b: &KTData, enc: &Encoder, dweights: &DensityWeights) -> Result<SpatialFactor> {
    let (m, p) = dweights.w.dim();
    if m != b.traj.n_readouts() || p != b.traj.n_samples() {
        return Err(Error::shape(
            "zero_filled_init",
            format!("{} x {} weights", b.traj.n_readouts(), b.traj.n_samples()),
            format!("{m} x {p}"),
        ));
    }
    let mut weighted = b.b.clone();
    let nc = weighted.dim().0;
    for c in 0..nc {
        for i in 0..m {
            for j in 0..p {
                weighted[[c, i, j]] *= dweights.w[[i, j]];
            }
        }
    }
    let y = enc.coil_adjoint(&weighted)?;
    let mut u = combine_s(&y, enc.maps())?;
    let (nx, ny) = enc.image_size();
    let scale = 1.0 / (nx * ny) as f64;
    u.u.mapv_inplace(|z| z * scale);
    Ok(u)
}

/// GD-DC: one gradient step on the data-fidelity term,
/// U = U_cnn - alpha [A^H A(U_cnn) - A^H(b)].
pub fn gd_dc(u_cnn: &SpatialFactor, b: &KTData, cfg: &DCConfig, enc: &Encoder) -> Result<SpatialFactor> {
    cfg.validate()?;
    let normal = enc.normal(u_cnn, cfg.normal_path)?;
    let atb = enc.adjoint(b)?;
    let mut u = u_cnn.u.clone();
    ndarray::Zip::from(&mut u)
        .and(&normal.u)
        .and(&atb.u)
        .for_each(|o, &n, &a| *o -= cfg.alpha * (n - a));
    Ok(SpatialFactor { u })
}

/// PGD-DC: coil-wise gradient with a k-space ramp preconditioner,
/// U = U_cnn - alpha S^dagger P [E^H E(S U_cnn) - E^H(b)].
pub fn pgd_dc(
    u_cnn: &SpatialFactor,
    b: &KTData,
    cfg: &DCConfig,
    precond: &Preconditioner,
    enc: &Encoder,
) -> Result<SpatialFactor> {
    cfg.validate()?;
    let (nx, ny) = enc.image_size();
    if precond.ramp.dim() != (nx, ny) {
        return Err(Error::shape(
            "pgd_dc",
            format!("{nx}x{ny} ramp"),
            format!("{}x{}", precond.ramp.dim().0, precond.ramp.dim().1),
        ));
    }
    let y = apply_s(u_cnn, enc.maps())?;
    let nc = enc.n_coils();
    let residual: Result<Vec<Array3<Complex64>>> = (0..nc)
        .into_par_iter()
        .map(|c| {
            let yc = y.index_axis(ndarray::Axis(0), c).to_owned();
            let mut ee = enc.echan_normal(&yc, cfg.normal_path)?;
            let eb = enc.echan_adjoint(&b.b.index_axis(ndarray::Axis(0), c).to_owned())?;
            ee.zip_mut_with(&eb, |a, &v| *a -= v);
            Ok(ee)
        })
        .collect();
    let residual = residual?;
    let mut stack = Array4::<Complex64>::zeros((nc, nx, ny, enc.l()));
    for (c, r) in residual.iter().enumerate() {
        stack.index_axis_mut(ndarray::Axis(0), c).assign(r);
    }
    precond.apply_coil_factors(&mut stack);
    let combined = combine_s(&stack, enc.maps())?;
    let mut u = u_cnn.u.clone();
    ndarray::Zip::from(&mut u)
        .and(&combined.u)
        .for_each(|o, &g| *o -= cfg.alpha * g);
    Ok(SpatialFactor { u })
}

/// DS-DC: the direct block-Toeplitz solve of the coil-wise DC problem.
/// Per coil, r_c = E^H(b)_c + lambda s_c .* U_cnn, then
/// y_c = Z^H F^-1 (W + lambda I)^-1 F Z r_c, and U = S^dagger y.
pub fn ds_dc(u_cnn: &SpatialFactor, b: &KTData, cfg: &DCConfig, enc: &Encoder) -> Result<SpatialFactor> {
    cfg.validate()?;
    if !(cfg.lambda > 0.0) {
        return Err(Error::InvalidArgument(
            "ds_dc requires lambda > 0 (W may be singular at lambda = 0)".into(),
        ));
    }
    let field = enc
        .toeplitz_field()
        .ok_or_else(|| Error::InvalidArgument("Toeplitz field not built (with_toeplitz_field)".into()))?;
    if field.image_size() != enc.image_size() || field.l() != enc.l() {
        return Err(Error::shape(
            "ds_dc",
            format!("field {}x{} L={}", enc.image_size().0, enc.image_size().1, enc.l()),
            format!("field {}x{} L={}", field.image_size().0, field.image_size().1, field.l()),
        ));
    }
    let solver = field.factor(cfg.lambda)?;

    let eb = enc.coil_adjoint(&b.b)?;
    let su = apply_s(u_cnn, enc.maps())?;
    let nc = enc.n_coils();
    let (nx, ny) = enc.image_size();
    let l = enc.l();

    let solved: Result<Vec<Array3<Complex64>>> = (0..nc)
        .into_par_iter()
        .map(|c| {
            let mut r = eb.index_axis(ndarray::Axis(0), c).to_owned();
            let s = su.index_axis(ndarray::Axis(0), c);
            ndarray::Zip::from(&mut r).and(&s).for_each(|a, &v| *a += cfg.lambda * v);
            let mut stack = enc.spectrum_stack(&r)?;
            solver.solve_blocks(&mut stack);
            enc.stack_to_image(&stack, (nx, ny), l)
        })
        .collect();
    let solved = solved?;
    let mut y = Array4::<Complex64>::zeros((nc, nx, ny, l));
    for (c, s) in solved.iter().enumerate() {
        y.index_axis_mut(ndarray::Axis(0), c).assign(s);
    }
    combine_s(&y, enc.maps())
}

fn cg_dc_impl(
    u_cnn: &SpatialFactor,
    b: &KTData,
    cfg: &DCConfig,
    enc: &Encoder,
    keep_history: bool,
) -> Result<(SpatialFactor, Vec<SpatialFactor>)> {
    cfg.validate()?;
    if !(cfg.lambda > 0.0) {
        return Err(Error::InvalidArgument("cg_dc requires lambda > 0".into()));
    }
    let apply = |u: &Array3<Complex64>| -> Result<Array3<Complex64>> {
        let f = SpatialFactor { u: u.clone() };
        let mut n = enc.normal(&f, cfg.normal_path)?.u;
        n.zip_mut_with(u, |a, &v| *a += cfg.lambda * v);
        Ok(n)
    };

    let atb = enc.adjoint(b)?;
    let mut rhs = atb.u;
    rhs.zip_mut_with(&u_cnn.u, |a, &v| *a += cfg.lambda * v);

    let mut x = u_cnn.u.clone();
    let mut history = Vec::new();
    if keep_history {
        history.push(SpatialFactor { u: x.clone() });
    }

    let ax = apply(&x)?;
    let mut r = rhs;
    r.zip_mut_with(&ax, |a, &v| *a -= v);
    let mut p = r.clone();
    let mut rs_old: f64 = r.iter().map(|z| z.norm_sqr()).sum();

    for _ in 0..cfg.cg_iters {
        if rs_old == 0.0 {
            break; // exact solution reached; CG would divide by zero
        }
        let ap = apply(&p)?;
        let denom: f64 = p.iter().zip(ap.iter()).map(|(a, v)| (a.conj() * v).re).sum();
        if denom <= 0.0 {
            return Err(Error::Numerical(format!(
                "CG curvature {denom:.3e} not positive; system not positive definite"
            )));
        }
        let alpha = rs_old / denom;
        ndarray::Zip::from(&mut x).and(&p).for_each(|a, &v| *a += alpha * v);
        ndarray::Zip::from(&mut r).and(&ap).for_each(|a, &v| *a -= alpha * v);
        let rs_new: f64 = r.iter().map(|z| z.norm_sqr()).sum();
        let beta = rs_new / rs_old;
        ndarray::Zip::from(&mut p).and(&r).for_each(|a, &v| *a = v + beta * *a);
        rs_old = rs_new;
        if keep_history {
            history.push(SpatialFactor { u: x.clone() });
        }
    }
    Ok((SpatialFactor { u: x }, history))
}

/// CG-DC: a fixed number of conjugate-gradient iterations on
/// (A^H A + lambda I) U = A^H b + lambda U_cnn, initialized at U_cnn.
/// Returns the last iterate.
pub fn cg_dc(u_cnn: &SpatialFactor, b: &KTData, cfg: &DCConfig, enc: &Encoder) -> Result<SpatialFactor> {
    cg_dc_impl(u_cnn, b, cfg, enc, false).map(|(u, _)| u)
}

/// All CG-DC iterates including the initializer, for convergence studies.
pub fn cg_dc_iterates(
    u_cnn: &SpatialFactor,
    b: &KTData,
    cfg: &DCConfig,
    enc: &Encoder,
) -> Result<Vec<SpatialFactor>> {
    cg_dc_impl(u_cnn, b, cfg, enc, true).map(|(_, h)| h)
}

fn wavelet_forward_factor(u: &Array3<Complex64>) -> Result<Array3<Complex64>> {
    let (nx, ny, l) = u.dim();
    let mut out = Array3::<Complex64>::zeros((nx, ny, l));
    for k in 0..l {
        let img = u.index_axis(ndarray::Axis(2), k).to_owned();
        let w = haar2_forward(&img)?;
        for i in 0..nx {
            for j in 0..ny {
                out[[i, j, k]] = w[[i, j]];
            }
        }
    }
    Ok(out)
}

fn wavelet_inverse_factor(w: &Array3<Complex64>) -> Result<Array3<Complex64>> {
    let (nx, ny, l) = w.dim();
    let mut out = Array3::<Complex64>::zeros((nx, ny, l));
    for k in 0..l {
        let img = w.index_axis(ndarray::Axis(2), k).to_owned();
        let x = haar2_inverse(&img)?;
        for i in 0..nx {
            for j in 0..ny {
                out[[i, j, k]] = x[[i, j]];
            }
        }
    }
    Ok(out)
}

/// ADMM reference reconstruction of
/// min_U ||b - A(U)||^2 + lambda_w ||Haar(U)||_1, with V = Haar(U) splitting,
/// an inner-CG x-update (10 iterations), and complex soft-thresholding.
pub fn admm_wavelet_recon(
    b: &KTData,
    enc: &Encoder,
    lambda_w: f64,
    n_iters: usize,
    rho: f64,
    path: NormalPath,
) -> Result<SpatialFactor> {
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    if lambda_w < 0.0 {
        return Err(Error::InvalidArgument(format!("lambda_w must be nonnegative, got {lambda_w}")));
    }
    let (nx, ny) = enc.image_size();
    let l = enc.l();
    let atb = enc.adjoint(b)?.u;

    let mut u = Array3::<Complex64>::zeros((nx, ny, l));
    let mut v = Array3::<Complex64>::zeros((nx, ny, l));
    let mut dual = Array3::<Complex64>::zeros((nx, ny, l));

    let apply = |x: &Array3<Complex64>| -> Result<Array3<Complex64>> {
        let f = SpatialFactor { u: x.clone() };
        let mut n = enc.normal(&f, path)?.u;
        n.zip_mut_with(x, |a, &xv| *a += rho * xv);
        Ok(n)
    };

    for _ in 0..n_iters {
        // x-update: (A^H A + rho I) U = A^H b + rho Haar^H(V - dual), 10 CG
        // iterations warm-started at the previous U.
        let mut target = v.clone();
        target.zip_mut_with(&dual, |a, &d| *a -= d);
        let back = wavelet_inverse_factor(&target)?;
        let mut rhs = atb.clone();
        rhs.zip_mut_with(&back, |a, &w| *a += rho * w);

        let ax = apply(&u)?;
        let mut r = rhs;
        r.zip_mut_with(&ax, |a, &w| *a -= w);
        let mut p = r.clone();
        let mut rs_old: f64 = r.iter().map(|z| z.norm_sqr()).sum();
        for _ in 0..10 {
            if rs_old == 0.0 {
                break;
            }
            let ap = apply(&p)?;
            let denom: f64 = p.iter().zip(ap.iter()).map(|(a, w)| (a.conj() * w).re).sum();
            if denom <= 0.0 {
                return Err(Error::Numerical("ADMM inner CG lost positive definiteness".into()));
            }
            let alpha = rs_old / denom;
            ndarray::Zip::from(&mut u).and(&p).for_each(|a, &w| *a += alpha * w);
            ndarray::Zip::from(&mut r).and(&ap).for_each(|a, &w| *a -= alpha * w);
            let rs_new: f64 = r.iter().map(|z| z.norm_sqr()).sum();
            let beta = rs_new / rs_old;
            ndarray::Zip::from(&mut p).and(&r).for_each(|a, &w| *a = w + beta * *a);
            rs_old = rs_new;
        }

        // V-update: soft-threshold the shifted wavelet coefficients.
        let wu = wavelet_forward_factor(&u)?;
        let tau = lambda_w / (2.0 * rho);
        for ((vv, &w), &d) in v.iter_mut().zip(wu.iter()).zip(dual.iter()) {
            *vv = soft_threshold(w + d, tau);
        }

        // Dual ascent.
        ndarray::Zip::from(&mut dual).and(&wu).and(&v).for_each(|d, &w, &vv| *d += w - vv);
    }
    SpatialFactor::new(u)
}

/// ||A(u) - b||_2 over all samples and coils.
pub fn data_residual_norm(enc: &Encoder, b: &KTData, u: &SpatialFactor) -> Result<f64> {
    let au = enc.forward(u)?;
    Ok(au
        .b
        .iter()
        .zip(b.b.iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// The DC objective ||b - A(u)||^2 + lambda ||u - u_cnn||^2.
pub fn dc_objective(
    enc: &Encoder,
    b: &KTData,
    u: &SpatialFactor,
    u_cnn: &SpatialFactor,
    lambda: f64,
) -> Result<f64> {
    let fid = data_residual_norm(enc, b, u)?.powi(2);
    let reg: f64 = u
        .u
        .iter()
        .zip(u_cnn.u.iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    Ok(fid + lambda * reg)
}

/// The regularized reconstruction objective
/// ||b - A(u)||^2 + lambda_w ||Haar(u)||_1.
pub fn wavelet_objective(enc: &Encoder, b: &KTData, u: &SpatialFactor, lambda_w: f64) -> Result<f64> {
    let fid = data_residual_norm(enc, b, u)?.powi(2);
    let w = wavelet_forward_factor(&u.u)?;
    let l1: f64 = w.iter().map(|z| z.norm()).sum();
    Ok(fid + lambda_w * l1)
}

/// S^dagger P [E^H E (S u)]: the PGD gradient map without the data term.
fn precond_normal(enc: &Encoder, precond: &Preconditioner, u: &SpatialFactor, path: NormalPath) -> Result<SpatialFactor> {
    let y = apply_s(u, enc.maps())?;
    let nc = enc.n_coils();
    let (nx, ny) = enc.image_size();
    let per_coil: Result<Vec<Array3<Complex64>>> = (0..nc)
        .into_par_iter()
        .map(|c| enc.echan_normal(&y.index_axis(ndarray::Axis(0), c).to_owned(), path))
        .collect();
    let per_coil = per_coil?;
    let mut stack = Array4::<Complex64>::zeros((nc, nx, ny, enc.l()));
    for (c, r) in per_coil.iter().enumerate() {
        stack.index_axis_mut(ndarray::Axis(0), c).assign(r);
    }
    precond.apply_coil_factors(&mut stack);
    combine_s(&stack, enc.maps())
}

fn estimate_map_norm<F>(enc: &Encoder, iters: usize, seed: u64, mut map: F) -> Result<f64>
where
    F: FnMut(&SpatialFactor) -> Result<SpatialFactor>,
{
    let (nx, ny) = enc.image_size();
    let l = enc.l();
    let dim = nx * ny * l;
    let mut failure: Option<Error> = None;
    let est = power_iteration_norm(
        |v: &[Complex64]| {
            let u = Array3::from_shape_vec((nx, ny, l), v.to_vec()).unwrap();
            match map(&SpatialFactor { u }) {
                Ok(n) => n.u.into_iter().collect(),
                Err(e) => {
                    failure = Some(e);
                    vec![Complex64::ZERO; dim]
                }
            }
        },
        dim,
        iters,
        seed,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(est),
    }
}

/// Power-iteration estimate of ||A^H A|| on the spatial-factor space.
pub fn estimate_normal_norm(enc: &Encoder, path: NormalPath, iters: usize, seed: u64) -> Result<f64> {
    estimate_map_norm(enc, iters, seed, |u| enc.normal(u, path))
}

/// Power-iteration estimate of the preconditioned normal map
/// S^dagger P E^H E S, the operator the PGD step size scales against.
pub fn estimate_precond_normal_norm(
    enc: &Encoder,
    precond: &Preconditioner,
    path: NormalPath,
    iters: usize,
    seed: u64,
) -> Result<f64> {
    estimate_map_norm(enc, iters, seed, |u| precond_normal(enc, precond, u, path))
}

fn nrmse_factor(test: &SpatialFactor, reference: &SpatialFactor) -> f64 {
    let num: f64 = test
        .u
        .iter()
        .zip(reference.u.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let den: f64 = reference.u.iter().map(|z| z.norm_sqr()).sum();
    (num / den).sqrt()
}

/// Grid-search the GD/PGD step size: 10 log-spaced multiples of the inverse
/// norm of the method's own gradient map (A^H A for GD, S^dagger P E^H E S
/// for PGD) in [0.1, 2.0], picking the best NRMSE against the validation
/// truth.
pub fn tune_step_size(
    enc: &Encoder,
    b: &KTData,
    u_cnn: &SpatialFactor,
    u_true: &SpatialFactor,
    precond: Option<&Preconditioner>,
    cfg: &DCConfig,
) -> Result<f64> {
    let norm = match precond {
        None => estimate_normal_norm(enc, cfg.normal_path, 10, 0x5eed)?,
        Some(p) => estimate_precond_normal_norm(enc, p, cfg.normal_path, 10, 0x5eed)?,
    };
    if norm <= 0.0 {
        return Err(Error::Numerical("operator norm estimate is zero".into()));
    }
    let mut best = (f64::INFINITY, 1.0 / norm);
    for i in 0..10 {
        let t = i as f64 / 9.0;
        let alpha = 0.1 * (20.0_f64).powf(t) / norm;
        let mut trial = *cfg;
        trial.alpha = alpha;
        let out = match precond {
            None => gd_dc(u_cnn, b, &trial, enc)?,
            Some(p) => pgd_dc(u_cnn, b, &trial, p, enc)?,
        };
        let score = nrmse_factor(&out, u_true);
        if score < best.0 {
            best = (score, alpha);
        }
    }
    Ok(best.1)
}

/// Which lambda-regularized solver [`tune_lambda`] searches for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaSolver {
    Ds,
    Cg,
}

/// Grid-search lambda over 10^{-4}..10^{2} (13 half-decade points) scaled by
/// the operator-norm estimate, picking the best NRMSE against the validation
/// truth.
pub fn tune_lambda(
    enc: &Encoder,
    b: &KTData,
    u_cnn: &SpatialFactor,
    u_true: &SpatialFactor,
    solver: LambdaSolver,
    cfg: &DCConfig,
) -> Result<f64> {
    let norm = estimate_normal_norm(enc, cfg.normal_path, 10, 0x5eed)?;
    if norm <= 0.0 {
        return Err(Error::Numerical("operator norm estimate is zero".into()));
    }
    let mut best = (f64::INFINITY, norm);
    for i in 0..13 {
        let exp = -4.0 + 0.5 * i as f64;
        let lambda = 10f64.powf(exp) * norm;
        let mut trial = *cfg;
        trial.lambda = lambda;
        let out = match solver {
            LambdaSolver::Ds => ds_dc(u_cnn, b, &trial, enc)?,
            LambdaSolver::Cg => cg_dc(u_cnn, b, &trial, enc)?,
        };
        let score = nrmse_factor(&out, u_true);
        if score < best.0 {
            best = (score, lambda);
        }
    }
    Ok(best.1)
}
