//! Temporal basis construction and the two kernel structures that keep the
//! normal operator inside the L-dimensional subspace: per-spoke L x L kernels
//! and the block-Toeplitz kernel field on the 2x-oversampled grid.

use ndarray::{Array2, Array4};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, cholesky_solve, lu_in_place, lu_solve};
use crate::trajectory::{SamplingSchedule, Trajectory};
use crate::transform::gridding::GriddingPlan;
use crate::transform::toeplitz::{psf_diagonal, psf_diagonal_fast};

pub const DEFAULT_KERNEL_BUDGET_BYTES: usize = 2 << 30;

/// Row-orthonormal temporal factor Phi (L x T). Construction rejects inputs
/// whose rows are not orthonormal to 1e-10.
#[derive(Debug, Clone)]
pub struct TemporalBasis {
    phi: Array2<Complex64>,
}

impl TemporalBasis {
    pub fn new(phi: Array2<Complex64>) -> Result<Self> {
        let (l, t) = phi.dim();
        if l == 0 || t == 0 || l > t {
            return Err(Error::InvalidArgument(format!(
                "temporal basis must be L x T with 1 <= L <= T, got {l} x {t}"
            )));
        }
        let mut defect = 0.0;
        for a in 0..l {
            for b in 0..l {
                let mut g = Complex64::ZERO;
                for s in 0..t {
                    g += phi[[a, s]] * phi[[b, s]].conj();
                }
                let want = if a == b { Complex64::new(1.0, 0.0) } else { Complex64::ZERO };
                defect += (g - want).norm_sqr();
            }
        }
        if defect.sqrt() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "temporal basis rows not orthonormal: ||Phi Phi^H - I||_F = {:.3e}",
                defect.sqrt()
            )));
        }
        Ok(TemporalBasis { phi })
    }

    pub fn l(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.phi.ncols()
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.phi
    }

    /// The t-th column: the subspace coordinates of frame t.
    pub fn frame_vector(&self, t: usize) -> Vec<Complex64> {
        (0..self.l()).map(|i| self.phi[[i, t]]).collect()
    }
}

/// Inversion-recovery signal value 1 - 2 e^{-tau/T1} before normalization.
pub fn ir_atom(t1: f64, tau: f64) -> f64 {
    1.0 - 2.0 * (-tau / t1).exp()
}

/// Dictionary of l2-normalized inversion-recovery curves, one row per T1.
pub fn ir_dictionary(t1_values: &[f64], sample_times: &[f64]) -> Result<Array2<f64>> {
    if t1_values.is_empty() || sample_times.is_empty() {
        return Err(Error::InvalidArgument("empty dictionary grid".into()));
    }
    if t1_values.iter().any(|&t1| !(t1 > 0.0)) {
        return Err(Error::InvalidArgument("T1 values must be positive".into()));
    }
    if sample_times.iter().any(|&tau| tau < 0.0) {
        return Err(Error::InvalidArgument("sample times must be nonnegative".into()));
    }
    let mut dict = Array2::<f64>::zeros((t1_values.len(), sample_times.len()));
    for (a, &t1) in t1_values.iter().enumerate() {
        let mut norm = 0.0;
        for (t, &tau) in sample_times.iter().enumerate() {
            let v = ir_atom(t1, tau);
            dict[[a, t]] = v;
            norm += v * v;
        }
        let norm = norm.sqrt();
        if norm > 0.0 {
            for t in 0..sample_times.len() {
                dict[[a, t]] /= norm;
            }
        }
    }
    Ok(dict)
}

/// Top-L right singular vectors of the dictionary, as basis rows. Computed
/// from the T x T Gram matrix eigendecomposition.
pub fn basis_from_dictionary(dict: &Array2<f64>, l: usize) -> Result<TemporalBasis> {
    let (n_atoms, t) = dict.dim();
    if l == 0 || l > n_atoms.min(t) {
        return Err(Error::InvalidArgument(format!(
            "subspace dimension {l} out of range for a {n_atoms} x {t} dictionary"
        )));
    }
    let mut gram = nalgebra::DMatrix::<f64>::zeros(t, t);
    for a in 0..t {
        for b in a..t {
            let mut s = 0.0;
            for r in 0..n_atoms {
                s += dict[[r, a]] * dict[[r, b]];
            }
            gram[(a, b)] = s;
            gram[(b, a)] = s;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let mut phi = Array2::<Complex64>::zeros((l, t));
    for (row, &idx) in order.iter().take(l).enumerate() {
        let v = eig.eigenvectors.column(idx);
        for s in 0..t {
            phi[[row, s]] = Complex64::new(v[s], 0.0);
        }
    }
    TemporalBasis::new(phi)
}

/// Per-spoke L x L kernels K_s = sum over readouts of spoke s of
/// phi(t_m) phi(t_m)^H.
#[derive(Debug, Clone)]
pub struct SpokeKernelSet {
    kernels: Vec<Array2<Complex64>>,
}

impl SpokeKernelSet {
    pub fn n_spokes(&self) -> usize {
        self.kernels.len()
    }

    pub fn kernel(&self, s: usize) -> &Array2<Complex64> {
        &self.kernels[s]
    }
}

pub fn spoke_kernels(
    schedule: &SamplingSchedule,
    phi: &TemporalBasis,
    spoke_of: &[usize],
    n_spokes: usize,
) -> Result<SpokeKernelSet> {
    if spoke_of.len() != schedule.n_readouts() {
        return Err(Error::shape(
            "spoke_kernels",
            format!("{} readout mappings", schedule.n_readouts()),
            format!("{}", spoke_of.len()),
        ));
    }
    if schedule.n_frames() != phi.n_frames() {
        return Err(Error::shape(
            "spoke_kernels",
            format!("{} frames", schedule.n_frames()),
            format!("{}", phi.n_frames()),
        ));
    }
    if let Some(&bad) = spoke_of.iter().find(|&&s| s >= n_spokes) {
        return Err(Error::InvalidArgument(format!(
            "spoke index {bad} out of range for {n_spokes} spokes"
        )));
    }
    let l = phi.l();
    let mut kernels = vec![Array2::<Complex64>::zeros((l, l)); n_spokes];
    for (m, &s) in spoke_of.iter().enumerate() {
        let f = phi.frame_vector(schedule.frame_of(m));
        let k = &mut kernels[s];
        for a in 0..l {
            for b in 0..l {
                k[[a, b]] += f[a] * f[b].conj();
            }
        }
    }
    Ok(SpokeKernelSet { kernels })
}

/// The per-location L x L kernels W^(n) of the block-Toeplitz model of
/// E_Phi^H E_Phi, stored as a (2nx, 2ny, L, L) field. Storage never scales
/// with the number of frames.
#[derive(Debug, Clone)]
pub struct ToeplitzKernelField {
    w: Array4<Complex64>,
    nx: usize,
    ny: usize,
    l: usize,
}

impl ToeplitzKernelField {
    pub fn image_size(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// Total stored complex entries: exactly 4 nx ny L^2.
    pub fn n_entries(&self) -> usize {
        self.w.len()
    }

    pub fn field(&self) -> &Array4<Complex64> {
        &self.w
    }

    /// out_i(n) = sum_j W_ij(n) v_j(n) over the flattened location axis.
    /// `stack` is (2nx * 2ny, L) row-major, overwritten with the product.
    pub fn apply_blocks(&self, stack: &mut [Complex64]) {
        let l = self.l;
        let w = self.w.as_slice().expect("contiguous field");
        stack
            .par_chunks_mut(l)
            .enumerate()
            .for_each(|(n, v)| {
                let block = &w[n * l * l..(n + 1) * l * l];
                let mut out = [Complex64::ZERO; 16];
                let out = &mut out[..l.min(16)];
                if l <= 16 {
                    for i in 0..l {
                        let mut s = Complex64::ZERO;
                        for j in 0..l {
                            s += block[i * l + j] * v[j];
                        }
                        out[i] = s;
                    }
                    v.copy_from_slice(out);
                } else {
                    let mut big = vec![Complex64::ZERO; l];
                    for i in 0..l {
                        let mut s = Complex64::ZERO;
                        for j in 0..l {
                            s += block[i * l + j] * v[j];
                        }
                        big[i] = s;
                    }
                    v.copy_from_slice(&big);
                }
            });
    }

    /// Factor (W^(n) + lambda I) at every location for repeated solves.
    /// W^(n) is Hermitian but only approximately PSD (the embedding is PSD as
    /// an operator, not pointwise), so locations where lambda does not cover
    /// the negative part fall back from Cholesky to pivoted LU.
    pub fn factor(&self, lambda: f64) -> Result<FieldSolver> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument(
                "block kernel solves need lambda > 0 (W may be singular)".into(),
            ));
        }
        let l = self.l;
        let n_loc = 4 * self.nx * self.ny;
        let w = self.w.as_slice().expect("contiguous field");
        let mut data = vec![Complex64::ZERO; n_loc * l * l];
        let mut perms = vec![0u8; n_loc * l];
        let kinds: Result<Vec<FactorKind>> = data
            .par_chunks_mut(l * l)
            .zip(perms.par_chunks_mut(l))
            .enumerate()
            .map(|(n, (c, perm))| {
                c.copy_from_slice(&w[n * l * l..(n + 1) * l * l]);
                for i in 0..l {
                    c[i * l + i] += lambda;
                }
                if cholesky_in_place(c, l).is_ok() {
                    return Ok(FactorKind::Cholesky);
                }
                c.copy_from_slice(&w[n * l * l..(n + 1) * l * l]);
                for i in 0..l {
                    c[i * l + i] += lambda;
                }
                lu_in_place(c, l, perm)?;
                Ok(FactorKind::Lu)
            })
            .collect();
        Ok(FieldSolver { data, perms, kinds: kinds?, nx: self.nx, ny: self.ny, l })
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum FactorKind {
    Cholesky,
    Lu,
}

/// Prefactored (W^(n) + lambda I) for all locations.
pub struct FieldSolver {
    data: Vec<Complex64>,
    perms: Vec<u8>,
    kinds: Vec<FactorKind>,
    nx: usize,
    ny: usize,
    l: usize,
}

impl FieldSolver {
    pub fn image_size(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// Solve (W^(n) + lambda I) x(n) = v(n) in place on a flattened
    /// (2nx * 2ny, L) stack.
    pub fn solve_blocks(&self, stack: &mut [Complex64]) {
        let l = self.l;
        stack
            .par_chunks_mut(l)
            .enumerate()
            .for_each(|(n, v)| {
                let f = &self.data[n * l * l..(n + 1) * l * l];
                match self.kinds[n] {
                    FactorKind::Cholesky => cholesky_solve(f, l, v),
                    FactorKind::Lu => lu_solve(f, &self.perms[n * l..(n + 1) * l], l, v),
                }
            });
    }
}

/// Build the block-Toeplitz kernel field for the acquisition. For block
/// (i, j), the per-sample weights are phi_j(t_m) conj(phi_i(t_m)) replicated
/// along readout m; q^(ij) is the FFT of the corresponding PSF, and
/// W^(n)_{ij} = q^(ij)_n. Only the upper triangle is computed; the mirror
/// blocks are conjugates.
pub fn toeplitz_block_kernels(
    traj: &Trajectory,
    schedule: &SamplingSchedule,
    phi: &TemporalBasis,
    size: (usize, usize),
    exact: bool,
    budget_bytes: usize,
) -> Result<ToeplitzKernelField> {
    let (nx, ny) = size;
    if schedule.n_readouts() != traj.n_readouts() {
        return Err(Error::shape(
            "toeplitz_block_kernels",
            format!("{} readouts", traj.n_readouts()),
            format!("{}", schedule.n_readouts()),
        ));
    }
    if schedule.n_frames() != phi.n_frames() {
        return Err(Error::shape(
            "toeplitz_block_kernels",
            format!("{} frames", schedule.n_frames()),
            format!("{}", phi.n_frames()),
        ));
    }
    let l = phi.l();
    let bytes = 4usize
        .checked_mul(nx)
        .and_then(|v| v.checked_mul(ny))
        .and_then(|v| v.checked_mul(l * l))
        .and_then(|v| v.checked_mul(std::mem::size_of::<Complex64>()))
        .ok_or_else(|| Error::InvalidArgument("kernel field size overflows".into()))?;
    if bytes > budget_bytes {
        return Err(Error::InvalidArgument(format!(
            "kernel field needs {bytes} bytes ({nx}x{ny}, L={l}), over the {budget_bytes} byte budget"
        )));
    }

    let coords = traj.flat_coords();
    let n_samples = traj.n_samples();
    let plan2x = if exact {
        None
    } else {
        Some(GriddingPlan::default_for((2 * nx, 2 * ny))?)
    };

    let pairs: Vec<(usize, usize)> = (0..l).flat_map(|i| (i..l).map(move |j| (i, j))).collect();
    let diags: Result<Vec<_>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut weights = Vec::with_capacity(coords.len());
            for m in 0..traj.n_readouts() {
                let f = phi.frame_vector(schedule.frame_of(m));
                let w = f[j] * f[i].conj();
                weights.extend(std::iter::repeat_n(w, n_samples));
            }
            let q = match &plan2x {
                None => psf_diagonal(coords, &weights, (nx, ny))?,
                Some(plan) => psf_diagonal_fast(coords, &weights, (nx, ny), plan)?,
            };
            Ok(((i, j), q))
        })
        .collect();
    let diags = diags?;

    let mut w = Array4::<Complex64>::zeros((2 * nx, 2 * ny, l, l));
    for ((i, j), q) in diags {
        for a in 0..2 * nx {
            for b in 0..2 * ny {
                let v = q.q[[a, b]];
                w[[a, b, i, j]] = v;
                if i != j {
                    w[[a, b, j, i]] = v.conj();
                }
            }
        }
    }
    Ok(ToeplitzKernelField { w, nx, ny, l })
}
