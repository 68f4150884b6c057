//! The subspace forward model A_Phi(U) = Omega([F_nu S U] Phi), its adjoint,
//! the coil-wise operator E_Phi, and three interchangeable normal-operator
//! paths: direct (forward then adjoint), per-spoke subspace kernels, and the
//! block-Toeplitz kernel field.

use std::sync::Arc;

use ndarray::{Array2, Array3, Array4};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::subspace::{
    spoke_kernels, toeplitz_block_kernels, SpokeKernelSet, TemporalBasis, ToeplitzKernelField,
    DEFAULT_KERNEL_BUDGET_BYTES,
};
use crate::trajectory::{SamplingSchedule, Trajectory};
use crate::transform::fft::{fft2c, ifft2c};
use crate::transform::gridding::GriddingPlan;
use crate::transform::ndft::{ndft_adjoint, ndft_forward};
use crate::transform::toeplitz::{crop_center, zero_pad_embed};

/// Per-coil complex sensitivity maps, pixelwise normalized.
#[derive(Debug, Clone)]
pub struct CoilSensitivities {
    pub maps: Array3<Complex64>,
}

impl CoilSensitivities {
    pub fn new(maps: Array3<Complex64>) -> Result<Self> {
        let s = CoilSensitivities { maps };
        s.validate_normalized(1e-6)?;
        Ok(s)
    }

    pub fn n_coils(&self) -> usize {
        self.maps.dim().0
    }

    pub fn image_size(&self) -> (usize, usize) {
        let (_, nx, ny) = self.maps.dim();
        (nx, ny)
    }

    /// |sum_c |s_c(r)|^2 - 1| <= tol wherever any map is nonzero.
    pub fn validate_normalized(&self, tol: f64) -> Result<()> {
        let (nc, nx, ny) = self.maps.dim();
        for i in 0..nx {
            for j in 0..ny {
                let mut power = 0.0;
                for c in 0..nc {
                    power += self.maps[[c, i, j]].norm_sqr();
                }
                if power > 0.0 && (power - 1.0).abs() > tol {
                    return Err(Error::InvalidArgument(format!(
                        "sensitivity maps not pixelwise normalized at ({i},{j}): sum |s|^2 = {power}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Spatial factor U: per-pixel coordinates in the temporal subspace.
#[derive(Debug, Clone)]
pub struct SpatialFactor {
    pub u: Array3<Complex64>,
}

impl SpatialFactor {
    pub fn new(u: Array3<Complex64>) -> Result<Self> {
        if u.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical("spatial factor contains non-finite entries".into()));
        }
        Ok(SpatialFactor { u })
    }

    pub fn zeros(nx: usize, ny: usize, l: usize) -> Self {
        SpatialFactor { u: Array3::zeros((nx, ny, l)) }
    }

    pub fn image_size(&self) -> (usize, usize) {
        let (nx, ny, _) = self.u.dim();
        (nx, ny)
    }

    pub fn l(&self) -> usize {
        self.u.dim().2
    }

    pub fn norm(&self) -> f64 {
        self.u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Acquired k-t samples with their trajectory/time bookkeeping.
#[derive(Debug, Clone)]
pub struct KTData {
    pub b: Array3<Complex64>,
    pub traj: Arc<Trajectory>,
    pub schedule: Arc<SamplingSchedule>,
}

impl KTData {
    pub fn new(b: Array3<Complex64>, traj: Arc<Trajectory>, schedule: Arc<SamplingSchedule>) -> Result<Self> {
        let (_, m, p) = b.dim();
        if m != traj.n_readouts() || p != traj.n_samples() {
            return Err(Error::shape(
                "k-t data",
                format!("{} x {} samples", traj.n_readouts(), traj.n_samples()),
                format!("{m} x {p}"),
            ));
        }
        if schedule.n_readouts() != traj.n_readouts() {
            return Err(Error::shape(
                "k-t data",
                format!("{} schedule entries", traj.n_readouts()),
                format!("{}", schedule.n_readouts()),
            ));
        }
        Ok(KTData { b, traj, schedule })
    }

    pub fn n_coils(&self) -> usize {
        self.b.dim().0
    }
}

/// y_c = s_c .* u per subspace channel.
pub fn apply_s(u: &SpatialFactor, maps: &CoilSensitivities) -> Result<Array4<Complex64>> {
    let (nx, ny, l) = u.u.dim();
    if maps.image_size() != (nx, ny) {
        return Err(Error::shape(
            "apply_s",
            format!("{}x{} maps", nx, ny),
            format!("{}x{}", maps.image_size().0, maps.image_size().1),
        ));
    }
    let nc = maps.n_coils();
    let mut y = Array4::<Complex64>::zeros((nc, nx, ny, l));
    for c in 0..nc {
        for i in 0..nx {
            for j in 0..ny {
                let s = maps.maps[[c, i, j]];
                for k in 0..l {
                    y[[c, i, j, k]] = s * u.u[[i, j, k]];
                }
            }
        }
    }
    Ok(y)
}

/// u(r) = sum_c conj(s_c(r)) y_c(r); with normalized maps this is the
/// pseudoinverse coil combination S^dagger.
pub fn combine_s(y: &Array4<Complex64>, maps: &CoilSensitivities) -> Result<SpatialFactor> {
    let (nc, nx, ny, l) = y.dim();
    if maps.n_coils() != nc || maps.image_size() != (nx, ny) {
        return Err(Error::shape(
            "combine_s",
            format!("{} coils {}x{}", maps.n_coils(), maps.image_size().0, maps.image_size().1),
            format!("{nc} coils {nx}x{ny}"),
        ));
    }
    let mut u = Array3::<Complex64>::zeros((nx, ny, l));
    for c in 0..nc {
        for i in 0..nx {
            for j in 0..ny {
                let s = maps.maps[[c, i, j]].conj();
                for k in 0..l {
                    u[[i, j, k]] += s * y[[c, i, j, k]];
                }
            }
        }
    }
    Ok(SpatialFactor { u })
}

/// Which Fourier evaluation backs the encoding operators.
#[derive(Clone)]
pub enum FourierPath {
    /// Exact NDFT sums; the oracle path.
    Exact,
    /// Kaiser-Bessel gridding.
    Gridding(Arc<GriddingPlan>),
}

impl FourierPath {
    fn forward(&self, image: &Array2<Complex64>, coords: &[[f64; 2]]) -> Result<Vec<Complex64>> {
        match self {
            FourierPath::Exact => ndft_forward(image, coords),
            FourierPath::Gridding(plan) => plan.forward(image, coords),
        }
    }

    fn adjoint(
        &self,
        samples: &[Complex64],
        coords: &[[f64; 2]],
        size: (usize, usize),
    ) -> Result<Array2<Complex64>> {
        match self {
            FourierPath::Exact => ndft_adjoint(samples, coords, size),
            FourierPath::Gridding(plan) => {
                if plan.image_size() != size {
                    return Err(Error::shape(
                        "gridding adjoint",
                        format!("{}x{}", size.0, size.1),
                        format!("{}x{}", plan.image_size().0, plan.image_size().1),
                    ));
                }
                plan.adjoint(samples, coords)
            }
        }
    }
}

/// Normal-operator evaluation strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalPath {
    Direct,
    SpokeKernel,
    Toeplitz,
}

impl std::str::FromStr for NormalPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(NormalPath::Direct),
            "kernel" => Ok(NormalPath::SpokeKernel),
            "toeplitz" => Ok(NormalPath::Toeplitz),
            other => Err(Error::InvalidArgument(format!(
                "unknown normal path '{other}' (expected direct|kernel|toeplitz)"
            ))),
        }
    }
}

/// Immutable bundle of everything the forward model needs. All apply methods
/// are pure; the struct can be shared across threads.
pub struct Encoder {
    maps: CoilSensitivities,
    traj: Arc<Trajectory>,
    schedule: Arc<SamplingSchedule>,
    phi: TemporalBasis,
    fourier: FourierPath,
    spoke_of: Vec<usize>,
    n_spokes: usize,
    spoke_kernels: Option<SpokeKernelSet>,
    toeplitz: Option<ToeplitzKernelField>,
}

impl Encoder {
    pub fn new(
        maps: CoilSensitivities,
        traj: Arc<Trajectory>,
        schedule: Arc<SamplingSchedule>,
        phi: TemporalBasis,
        fourier: FourierPath,
    ) -> Result<Self> {
        if schedule.n_readouts() != traj.n_readouts() {
            return Err(Error::shape(
                "encoder",
                format!("{} readouts in schedule", traj.n_readouts()),
                format!("{}", schedule.n_readouts()),
            ));
        }
        if schedule.n_frames() != phi.n_frames() {
            return Err(Error::shape(
                "encoder",
                format!("{} frames in basis", schedule.n_frames()),
                format!("{}", phi.n_frames()),
            ));
        }
        if let FourierPath::Gridding(plan) = &fourier {
            if plan.image_size() != maps.image_size() {
                return Err(Error::shape(
                    "encoder",
                    format!("plan for {}x{}", maps.image_size().0, maps.image_size().1),
                    format!("{}x{}", plan.image_size().0, plan.image_size().1),
                ));
            }
        }
        let n_spokes = traj.n_readouts();
        Ok(Encoder {
            maps,
            traj,
            schedule,
            phi,
            fourier,
            spoke_of: (0..n_spokes).collect(),
            n_spokes,
            spoke_kernels: None,
            toeplitz: None,
        })
    }

    pub fn with_spoke_kernels(mut self) -> Result<Self> {
        self.spoke_kernels = Some(spoke_kernels(&self.schedule, &self.phi, &self.spoke_of, self.n_spokes)?);
        Ok(self)
    }

    pub fn with_toeplitz_field(mut self, exact: bool) -> Result<Self> {
        let field = toeplitz_block_kernels(
            &self.traj,
            &self.schedule,
            &self.phi,
            self.maps.image_size(),
            exact,
            DEFAULT_KERNEL_BUDGET_BYTES,
        )?;
        self.toeplitz = Some(field);
        Ok(self)
    }

    pub fn maps(&self) -> &CoilSensitivities {
        &self.maps
    }

    pub fn traj(&self) -> &Arc<Trajectory> {
        &self.traj
    }

    pub fn schedule(&self) -> &Arc<SamplingSchedule> {
        &self.schedule
    }

    pub fn phi(&self) -> &TemporalBasis {
        &self.phi
    }

    pub fn fourier(&self) -> &FourierPath {
        &self.fourier
    }

    pub fn toeplitz_field(&self) -> Option<&ToeplitzKernelField> {
        self.toeplitz.as_ref()
    }

    pub fn image_size(&self) -> (usize, usize) {
        self.maps.image_size()
    }

    pub fn l(&self) -> usize {
        self.phi.l()
    }

    pub fn n_coils(&self) -> usize {
        self.maps.n_coils()
    }

    fn check_factor(&self, u: &SpatialFactor, context: &'static str) -> Result<()> {
        if u.image_size() != self.image_size() || u.l() != self.l() {
            return Err(Error::shape(
                context,
                format!("{}x{}x{}", self.image_size().0, self.image_size().1, self.l()),
                format!("{}x{}x{}", u.image_size().0, u.image_size().1, u.l()),
            ));
        }
        Ok(())
    }

    fn check_data(&self, b: &Array3<Complex64>, context: &'static str) -> Result<()> {
        let (nc, m, p) = b.dim();
        if nc != self.n_coils() || m != self.traj.n_readouts() || p != self.traj.n_samples() {
            return Err(Error::shape(
                context,
                format!("{} x {} x {}", self.n_coils(), self.traj.n_readouts(), self.traj.n_samples()),
                format!("{nc} x {m} x {p}"),
            ));
        }
        Ok(())
    }

    /// Coil-wise forward E_Phi on one coil's channel stack (nx, ny, L):
    /// NUFFT each channel at every sample, then contract with phi(t_m).
    pub fn echan_forward(&self, y: &Array3<Complex64>) -> Result<Array2<Complex64>> {
        let (nx, ny, l) = y.dim();
        let coords = self.traj.flat_coords();
        let n_samples = self.traj.n_samples();
        let per_channel: Result<Vec<Vec<Complex64>>> = (0..l)
            .into_par_iter()
            .map(|k| {
                let channel = y.index_axis(ndarray::Axis(2), k).to_owned();
                debug_assert_eq!(channel.dim(), (nx, ny));
                self.fourier.forward(&channel, coords)
            })
            .collect();
        let per_channel = per_channel?;

        let mut out = Array2::<Complex64>::zeros((self.traj.n_readouts(), n_samples));
        for m in 0..self.traj.n_readouts() {
            let f = self.phi.frame_vector(self.schedule.frame_of(m));
            for p in 0..n_samples {
                let mut acc = Complex64::ZERO;
                for (k, fk) in f.iter().enumerate() {
                    acc += per_channel[k][m * n_samples + p] * fk;
                }
                out[[m, p]] = acc;
            }
        }
        Ok(out)
    }

    /// Coil-wise adjoint E_Phi^H on one coil's samples (n_readouts,
    /// n_samples): scatter by conj(phi(t_m)) into L channels, then adjoint
    /// NUFFT each channel.
    pub fn echan_adjoint(&self, b: &Array2<Complex64>) -> Result<Array3<Complex64>> {
        let (nx, ny) = self.image_size();
        let l = self.l();
        let coords = self.traj.flat_coords();
        let n_samples = self.traj.n_samples();

        let images: Result<Vec<Array2<Complex64>>> = (0..l)
            .into_par_iter()
            .map(|k| {
                let mut chan = vec![Complex64::ZERO; coords.len()];
                for m in 0..self.traj.n_readouts() {
                    let w = self.phi.matrix()[[k, self.schedule.frame_of(m)]].conj();
                    for p in 0..n_samples {
                        chan[m * n_samples + p] = b[[m, p]] * w;
                    }
                }
                self.fourier.adjoint(&chan, coords, (nx, ny))
            })
            .collect();
        let images = images?;

        let mut out = Array3::<Complex64>::zeros((nx, ny, l));
        for (k, img) in images.iter().enumerate() {
            for i in 0..nx {
                for j in 0..ny {
                    out[[i, j, k]] = img[[i, j]];
                }
            }
        }
        Ok(out)
    }

    /// Coil-wise normal operator E_Phi^H E_Phi on one coil's channel stack.
    pub fn echan_normal(&self, y: &Array3<Complex64>, path: NormalPath) -> Result<Array3<Complex64>> {
        match path {
            NormalPath::Direct => {
                let b = self.echan_forward(y)?;
                self.echan_adjoint(&b)
            }
            NormalPath::SpokeKernel => self.echan_normal_kernel(y),
            NormalPath::Toeplitz => self.echan_normal_toeplitz(y),
        }
    }

    /// Subspace-kernel path: NUFFT per channel, right-multiply the per-spoke
    /// L x L kernels between forward and adjoint, adjoint NUFFT per channel.
    /// Never touches any frame-count-sized array.
    fn echan_normal_kernel(&self, y: &Array3<Complex64>) -> Result<Array3<Complex64>> {
        let kernels = self
            .spoke_kernels
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("spoke kernels not built (with_spoke_kernels)".into()))?;
        let (nx, ny, l) = y.dim();
        let coords = self.traj.flat_coords();
        let n_samples = self.traj.n_samples();

        let forward: Result<Vec<Vec<Complex64>>> = (0..l)
            .into_par_iter()
            .map(|k| {
                let channel = y.index_axis(ndarray::Axis(2), k).to_owned();
                self.fourier.forward(&channel, coords)
            })
            .collect();
        let forward = forward?;

        // Right-multiply V_s K_s per spoke, writing the result channel-major
        // for the adjoint pass.
        let mut mixed = vec![vec![Complex64::ZERO; coords.len()]; l];
        for m in 0..self.traj.n_readouts() {
            let k_s = kernels.kernel(self.spoke_of[m]);
            for p in 0..n_samples {
                let idx = m * n_samples + p;
                for i in 0..l {
                    let mut acc = Complex64::ZERO;
                    for j in 0..l {
                        acc += forward[j][idx] * k_s[[j, i]];
                    }
                    mixed[i][idx] = acc;
                }
            }
        }

        let images: Result<Vec<Array2<Complex64>>> = mixed
            .into_par_iter()
            .map(|chan| self.fourier.adjoint(&chan, coords, (nx, ny)))
            .collect();
        let images = images?;

        let mut out = Array3::<Complex64>::zeros((nx, ny, l));
        for (k, img) in images.iter().enumerate() {
            for i in 0..nx {
                for j in 0..ny {
                    out[[i, j, k]] = img[[i, j]];
                }
            }
        }
        Ok(out)
    }

    /// Block-Toeplitz path: Z^H F^-1 W(.) F Z per channel stack.
    fn echan_normal_toeplitz(&self, y: &Array3<Complex64>) -> Result<Array3<Complex64>> {
        let field = self
            .toeplitz
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("Toeplitz field not built (with_toeplitz_field)".into()))?;
        let (nx, ny, l) = y.dim();

        let mut stack = self.spectrum_stack(y)?;
        field.apply_blocks(&mut stack);
        self.stack_to_image(&stack, (nx, ny), l)
    }

    /// F Z per channel, flattened to (2nx * 2ny, L) row-major.
    pub fn spectrum_stack(&self, y: &Array3<Complex64>) -> Result<Vec<Complex64>> {
        let (nx, ny, l) = y.dim();
        let specs: Vec<Array2<Complex64>> = (0..l)
            .into_par_iter()
            .map(|k| {
                let channel = y.index_axis(ndarray::Axis(2), k).to_owned();
                fft2c(&zero_pad_embed(&channel))
            })
            .collect();
        let mut stack = vec![Complex64::ZERO; 4 * nx * ny * l];
        for (k, spec) in specs.iter().enumerate() {
            let flat = spec.as_slice().unwrap();
            for (n, v) in flat.iter().enumerate() {
                stack[n * l + k] = *v;
            }
        }
        Ok(stack)
    }

    /// Z^H F^-1 per channel from a flattened (2nx * 2ny, L) stack.
    pub fn stack_to_image(
        &self,
        stack: &[Complex64],
        size: (usize, usize),
        l: usize,
    ) -> Result<Array3<Complex64>> {
        let (nx, ny) = size;
        let images: Result<Vec<Array2<Complex64>>> = (0..l)
            .into_par_iter()
            .map(|k| {
                let mut spec = Array2::<Complex64>::zeros((2 * nx, 2 * ny));
                let flat = spec.as_slice_mut().unwrap();
                for (n, v) in flat.iter_mut().enumerate() {
                    *v = stack[n * l + k];
                }
                crop_center(&ifft2c(&spec), (nx, ny))
            })
            .collect();
        let images = images?;
        let mut out = Array3::<Complex64>::zeros((nx, ny, l));
        for (k, img) in images.iter().enumerate() {
            for i in 0..nx {
                for j in 0..ny {
                    out[[i, j, k]] = img[[i, j]];
                }
            }
        }
        Ok(out)
    }

    /// Coil-wise forward on all coils: (ncoils, n_readouts, n_samples).
    pub fn coil_forward(&self, y: &Array4<Complex64>) -> Result<Array3<Complex64>> {
        let (nc, _, _, _) = y.dim();
        let per_coil: Result<Vec<Array2<Complex64>>> = (0..nc)
            .into_par_iter()
            .map(|c| self.echan_forward(&y.index_axis(ndarray::Axis(0), c).to_owned()))
            .collect();
        let per_coil = per_coil?;
        let mut out =
            Array3::<Complex64>::zeros((nc, self.traj.n_readouts(), self.traj.n_samples()));
        for (c, b) in per_coil.iter().enumerate() {
            out.index_axis_mut(ndarray::Axis(0), c).assign(b);
        }
        Ok(out)
    }

    /// Coil-wise adjoint on all coils.
    pub fn coil_adjoint(&self, b: &Array3<Complex64>) -> Result<Array4<Complex64>> {
        self.check_data(b, "coil_adjoint")?;
        let nc = b.dim().0;
        let per_coil: Result<Vec<Array3<Complex64>>> = (0..nc)
            .into_par_iter()
            .map(|c| self.echan_adjoint(&b.index_axis(ndarray::Axis(0), c).to_owned()))
            .collect();
        let per_coil = per_coil?;
        let (nx, ny) = self.image_size();
        let mut out = Array4::<Complex64>::zeros((nc, nx, ny, self.l()));
        for (c, y) in per_coil.iter().enumerate() {
            out.index_axis_mut(ndarray::Axis(0), c).assign(y);
        }
        Ok(out)
    }

    /// A_Phi(U): sensitivity-weight, then coil-wise forward.
    pub fn forward(&self, u: &SpatialFactor) -> Result<KTData> {
        self.check_factor(u, "forward")?;
        let y = apply_s(u, &self.maps)?;
        let b = self.coil_forward(&y)?;
        KTData::new(b, Arc::clone(&self.traj), Arc::clone(&self.schedule))
    }

    /// A_Phi^H(b): coil-wise adjoint, then conjugate-map combination.
    pub fn adjoint(&self, b: &KTData) -> Result<SpatialFactor> {
        self.check_data(&b.b, "adjoint")?;
        let y = self.coil_adjoint(&b.b)?;
        combine_s(&y, &self.maps)
    }

    /// A_Phi^H A_Phi(U) by the selected path. All paths evaluate the same
    /// linear map.
    pub fn normal(&self, u: &SpatialFactor, path: NormalPath) -> Result<SpatialFactor> {
        self.check_factor(u, "normal")?;
        let y = apply_s(u, &self.maps)?;
        let nc = self.n_coils();
        let per_coil: Result<Vec<Array3<Complex64>>> = (0..nc)
            .into_par_iter()
            .map(|c| self.echan_normal(&y.index_axis(ndarray::Axis(0), c).to_owned(), path))
            .collect();
        let per_coil = per_coil?;
        let (nx, ny) = self.image_size();
        let mut out = Array4::<Complex64>::zeros((nc, nx, ny, self.l()));
        for (c, yc) in per_coil.iter().enumerate() {
            out.index_axis_mut(ndarray::Axis(0), c).assign(yc);
        }
        combine_s(&out, &self.maps)
    }
}
