//! Synthetic dynamic phantom, analytic coil maps, and k-t acquisition
//! simulation: the ground-truth generator behind every end-to-end test.

use std::sync::Arc;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::encoding::{CoilSensitivities, Encoder, KTData, SpatialFactor};
use crate::error::{Error, Result};
use crate::subspace::{ir_atom, TemporalBasis};
use crate::trajectory::{SamplingSchedule, Trajectory};
use crate::transform::ndft::ndft_forward;

/// One elliptical tissue: geometry in fractional image coordinates
/// (center in [-1, 1], semi-axes in units of the half-FOV), proton density,
/// and a T1 recovery time in seconds.
#[derive(Debug, Clone)]
pub struct Tissue {
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    pub angle: f64,
    pub proton_density: f64,
    pub t1: f64,
}

#[derive(Debug, Clone)]
pub struct PhantomConfig {
    pub size: (usize, usize),
    pub n_frames: usize,
    pub tissues: Vec<Tissue>,
    /// Fractional ellipse-center displacement per motion cycle.
    pub motion_amplitude: f64,
    /// Motion period in frames.
    pub motion_period: usize,
    /// Seconds per frame.
    pub tr: f64,
    pub seed: u64,
}

impl PhantomConfig {
    /// A small heart-like default: static background, a moving ventricle,
    /// and a blood pool with long T1.
    pub fn default_for(size: (usize, usize), n_frames: usize, seed: u64) -> Self {
        PhantomConfig {
            size,
            n_frames,
            tissues: vec![
                Tissue {
                    center: (0.0, 0.0),
                    semi_axes: (0.82, 0.78),
                    angle: 0.0,
                    proton_density: 0.8,
                    t1: 1.0,
                },
                Tissue {
                    center: (-0.18, 0.14),
                    semi_axes: (0.34, 0.3),
                    angle: 0.5,
                    proton_density: 0.6,
                    t1: 1.4,
                },
                Tissue {
                    center: (0.28, -0.22),
                    semi_axes: (0.2, 0.16),
                    angle: -0.3,
                    proton_density: 1.0,
                    t1: 0.4,
                },
            ],
            motion_amplitude: 0.06,
            motion_period: n_frames.max(2) / 2,
            tr: 0.05,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let (nx, ny) = self.size;
        if nx == 0 || ny == 0 || nx % 2 != 0 || ny % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "phantom size must be even and positive, got {nx}x{ny}"
            )));
        }
        if self.n_frames == 0 {
            return Err(Error::InvalidArgument("phantom needs at least one frame".into()));
        }
        for t in &self.tissues {
            if !(t.t1 > 0.0) {
                return Err(Error::InvalidArgument(format!("T1 must be positive, got {}", t.t1)));
            }
            if !(t.semi_axes.0 > 0.0 && t.semi_axes.1 > 0.0) {
                return Err(Error::InvalidArgument("degenerate ellipse semi-axes".into()));
            }
        }
        Ok(())
    }
}

/// Ground truth produced by [`make_phantom`]: the frame stack X, its
/// rank-truncated factorization X = U_true Phi_true, and the truncation rank.
pub struct Phantom {
    /// (nx, ny, T) complex frames.
    pub frames: Array3<Complex64>,
    pub u_true: SpatialFactor,
    pub phi_true: TemporalBasis,
}

fn render_frame(cfg: &PhantomConfig, t: usize) -> Array2<f64> {
    let (nx, ny) = cfg.size;
    let tau = t as f64 * cfg.tr;
    let phase = if cfg.motion_period > 0 {
        std::f64::consts::TAU * t as f64 / cfg.motion_period as f64
    } else {
        0.0
    };
    let mut img = Array2::<f64>::zeros((nx, ny));
    for tissue in &cfg.tissues {
        let signal = tissue.proton_density * ir_atom(tissue.t1, tau);
        let (mut cx, mut cy) = tissue.center;
        cx += cfg.motion_amplitude * tissue.semi_axes.0 * phase.sin();
        cy += cfg.motion_amplitude * tissue.semi_axes.1 * (phase * 0.5).sin();
        let (ca, sa) = (tissue.angle.cos(), tissue.angle.sin());
        for i in 0..nx {
            for j in 0..ny {
                let x = (i as f64 - nx as f64 / 2.0) / (nx as f64 / 2.0) - cx;
                let y = (j as f64 - ny as f64 / 2.0) / (ny as f64 / 2.0) - cy;
                let xr = ca * x + sa * y;
                let yr = -sa * x + ca * y;
                let d = (xr / tissue.semi_axes.0).powi(2) + (yr / tissue.semi_axes.1).powi(2);
                if d <= 1.0 {
                    img[[i, j]] += signal;
                }
            }
        }
    }
    img
}

/// Render the dynamic phantom and factor it: Phi_true holds the temporal
/// modes that capture all but 1e-8 of the frame energy, and
/// U_true = X Phi_true^H.
pub fn make_phantom(cfg: &PhantomConfig) -> Result<Phantom> {
    cfg.validate()?;
    let (nx, ny) = cfg.size;
    let t_total = cfg.n_frames;

    let frames_2d: Vec<Array2<f64>> =
        (0..t_total).into_par_iter().map(|t| render_frame(cfg, t)).collect();

    let mut frames = Array3::<Complex64>::zeros((nx, ny, t_total));
    for (t, f) in frames_2d.iter().enumerate() {
        for i in 0..nx {
            for j in 0..ny {
                frames[[i, j, t]] = Complex64::new(f[[i, j]], 0.0);
            }
        }
    }

    // Temporal Gram matrix of the (real) frame stack.
    let mut gram = nalgebra::DMatrix::<f64>::zeros(t_total, t_total);
    for a in 0..t_total {
        for b in a..t_total {
            let s: f64 = frames_2d[a].iter().zip(frames_2d[b].iter()).map(|(x, y)| x * y).sum();
            gram[(a, b)] = s;
            gram[(b, a)] = s;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..t_total).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let total_energy: f64 = eig.eigenvalues.iter().map(|&v| v.max(0.0)).sum();
    let mut kept = 0.0;
    let mut l = 0;
    for &idx in &order {
        kept += eig.eigenvalues[idx].max(0.0);
        l += 1;
        if kept >= total_energy * (1.0 - 1e-8) {
            break;
        }
    }

    let mut phi = Array2::<Complex64>::zeros((l, t_total));
    for (row, &idx) in order.iter().take(l).enumerate() {
        let v = eig.eigenvectors.column(idx);
        for s in 0..t_total {
            phi[[row, s]] = Complex64::new(v[s], 0.0);
        }
    }
    let phi_true = TemporalBasis::new(phi)?;

    // U = X Phi^H.
    let mut u = Array3::<Complex64>::zeros((nx, ny, l));
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..l {
                let mut acc = Complex64::ZERO;
                for s in 0..t_total {
                    acc += frames[[i, j, s]] * phi_true.matrix()[[k, s]].conj();
                }
                u[[i, j, k]] = acc;
            }
        }
    }

    Ok(Phantom { frames, u_true: SpatialFactor::new(u)?, phi_true })
}

/// Gaussian-lobed complex coil maps centered at equally spaced border
/// positions with a smooth linear phase, pixelwise normalized.
pub fn make_coil_maps(n_coils: usize, size: (usize, usize)) -> Result<CoilSensitivities> {
    if n_coils == 0 {
        return Err(Error::InvalidArgument("need at least one coil".into()));
    }
    let (nx, ny) = size;
    let mut maps = Array3::<Complex64>::zeros((n_coils, nx, ny));
    let radius = 0.6 * nx.max(ny) as f64 / 2.0;
    let sigma = 0.6 * nx.max(ny) as f64;
    for c in 0..n_coils {
        let theta = std::f64::consts::TAU * c as f64 / n_coils as f64;
        let cx = nx as f64 / 2.0 + radius * theta.cos();
        let cy = ny as f64 / 2.0 + radius * theta.sin();
        // Gentle per-coil linear phase, well under a tenth of a radian/pixel.
        let (px, py) = (0.05 * theta.cos(), 0.05 * theta.sin());
        for i in 0..nx {
            for j in 0..ny {
                let d2 = ((i as f64 - cx).powi(2) + (j as f64 - cy).powi(2)) / (2.0 * sigma * sigma);
                let mag = (-d2).exp();
                let phase = px * i as f64 + py * j as f64;
                maps[[c, i, j]] = Complex64::from_polar(mag, phase);
            }
        }
    }
    for i in 0..nx {
        for j in 0..ny {
            let norm: f64 = (0..n_coils).map(|c| maps[[c, i, j]].norm_sqr()).sum::<f64>().sqrt();
            for c in 0..n_coils {
                maps[[c, i, j]] /= norm;
            }
        }
    }
    CoilSensitivities::new(maps)
}

/// Simulate the acquisition. With `exact` the samples come from per-frame
/// NDFT sums over the full (non-rank-truncated) frame stack, which breaks
/// the inverse crime; otherwise the encoder's forward model is used on
/// U_true. Complex Gaussian noise is scaled relative to the clean RMS, with
/// an independent stream per readout derived from (seed, readout).
pub fn simulate_acquisition(
    phantom: &Phantom,
    enc: &Encoder,
    noise_sigma: f64,
    exact: bool,
    seed: u64,
) -> Result<KTData> {
    let traj = enc.traj();
    let schedule = enc.schedule();
    let (nx, ny, t_total) = phantom.frames.dim();
    if enc.image_size() != (nx, ny) {
        return Err(Error::shape(
            "simulate_acquisition",
            format!("{nx}x{ny}"),
            format!("{}x{}", enc.image_size().0, enc.image_size().1),
        ));
    }
    if schedule.n_frames() != t_total {
        return Err(Error::shape(
            "simulate_acquisition",
            format!("{t_total} frames"),
            format!("{}", schedule.n_frames()),
        ));
    }

    let nc = enc.n_coils();
    let n_read = traj.n_readouts();
    let n_samp = traj.n_samples();
    let mut b = Array3::<Complex64>::zeros((nc, n_read, n_samp));

    if exact {
        // Per readout: NDFT of the sensitivity-weighted frame image at the
        // spoke coordinates.
        let rows: Vec<(usize, Vec<Vec<Complex64>>)> = (0..n_read)
            .into_par_iter()
            .map(|m| {
                let t = schedule.frame_of(m);
                let coords = traj.readout_coords(m);
                let per_coil: Vec<Vec<Complex64>> = (0..nc)
                    .map(|c| {
                        let img = Array2::from_shape_fn((nx, ny), |(i, j)| {
                            enc.maps().maps[[c, i, j]] * phantom.frames[[i, j, t]]
                        });
                        ndft_forward(&img, coords).expect("validated coords")
                    })
                    .collect();
                (m, per_coil)
            })
            .collect();
        for (m, per_coil) in rows {
            for (c, row) in per_coil.iter().enumerate() {
                for (p, v) in row.iter().enumerate() {
                    b[[c, m, p]] = *v;
                }
            }
        }
    } else {
        b = enc.forward(&phantom.u_true)?.b;
    }

    if noise_sigma > 0.0 {
        let rms = (b.iter().map(|z| z.norm_sqr()).sum::<f64>() / b.len() as f64).sqrt();
        let scale = noise_sigma * rms / std::f64::consts::SQRT_2;
        for m in 0..n_read {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed ^ (m as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            for c in 0..nc {
                for p in 0..n_samp {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    b[[c, m, p]] += Complex64::new(re, im) * scale;
                }
            }
        }
    }

    KTData::new(b, Arc::clone(traj), Arc::clone(schedule))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::FourierPath;
    use crate::trajectory::golden_angle_spokes;

    #[test]
    fn static_single_tissue_is_rank_one() {
        let mut cfg = PhantomConfig::default_for((16, 16), 8, 1);
        cfg.tissues.truncate(1);
        cfg.motion_amplitude = 0.0;
        let ph = make_phantom(&cfg).unwrap();
        assert_eq!(ph.phi_true.l(), 1, "static single tissue must be rank one");
    }

    #[test]
    fn inversion_at_time_zero() {
        let mut cfg = PhantomConfig::default_for((16, 16), 4, 1);
        cfg.tissues.truncate(1);
        cfg.motion_amplitude = 0.0;
        let ph = make_phantom(&cfg).unwrap();
        // A pixel inside the first tissue at frame 0 reads -proton_density.
        let (nx, ny) = cfg.size;
        let v = ph.frames[[nx / 2, ny / 2, 0]];
        assert!((v.re + cfg.tissues[0].proton_density).abs() < 1e-12);
    }

    #[test]
    fn factorization_residual_is_small() {
        let cfg = PhantomConfig::default_for((24, 24), 16, 5);
        let ph = make_phantom(&cfg).unwrap();
        let (nx, ny, t) = ph.frames.dim();
        let l = ph.phi_true.l();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..nx {
            for j in 0..ny {
                for s in 0..t {
                    let mut rec = Complex64::ZERO;
                    for k in 0..l {
                        rec += ph.u_true.u[[i, j, k]] * ph.phi_true.matrix()[[k, s]];
                    }
                    num += (ph.frames[[i, j, s]] - rec).norm_sqr();
                    den += ph.frames[[i, j, s]].norm_sqr();
                }
            }
        }
        let rel = (num / den).sqrt();
        assert!(rel <= 1e-4, "factorization residual {rel}");
    }

    #[test]
    fn coil_maps_normalized_and_smooth() {
        let maps = make_coil_maps(4, (64, 64)).unwrap();
        // Normalization is exact by construction.
        maps.validate_normalized(1e-6).unwrap();

        // Smoothness: finite-difference gradient magnitude stays small.
        let mut max_grad: f64 = 0.0;
        for c in 0..4 {
            for i in 0..63 {
                for j in 0..63 {
                    let v = maps.maps[[c, i, j]];
                    let gx = (maps.maps[[c, i + 1, j]] - v).norm();
                    let gy = (maps.maps[[c, i, j + 1]] - v).norm();
                    max_grad = max_grad.max((gx * gx + gy * gy).sqrt());
                }
            }
        }
        assert!(max_grad <= 0.2, "coil map gradient {max_grad}");

        // Single coil normalizes to unit magnitude.
        let one = make_coil_maps(1, (8, 8)).unwrap();
        assert!(one.maps.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));

        assert!(make_coil_maps(0, (8, 8)).is_err());
    }

    #[test]
    fn exact_simulation_matches_forward_when_rank_complete() {
        // Static phantom: rank 1, so X = U Phi exactly and the exact NDFT
        // simulation must match the encoder's forward model.
        let mut cfg = PhantomConfig::default_for((12, 12), 6, 3);
        cfg.motion_amplitude = 0.0;
        cfg.tissues.truncate(1);
        let ph = make_phantom(&cfg).unwrap();
        assert_eq!(ph.phi_true.l(), 1);

        let traj = Arc::new(golden_angle_spokes(10, 24).unwrap());
        let schedule = Arc::new(
            SamplingSchedule::new((0..10).map(|m| m % 6).collect(), 6).unwrap(),
        );
        let maps = make_coil_maps(2, (12, 12)).unwrap();
        let enc = Encoder::new(maps, traj, schedule, ph.phi_true.clone(), FourierPath::Exact)
            .unwrap();

        let sim = simulate_acquisition(&ph, &enc, 0.0, true, 1).unwrap();
        let fwd = enc.forward(&ph.u_true).unwrap();
        let num: f64 = sim.b.iter().zip(fwd.b.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = fwd.b.iter().map(|z| z.norm_sqr()).sum();
        assert!((num / den).sqrt() <= 1e-10, "model identity err {}", (num / den).sqrt());
    }

    #[test]
    fn noise_level_matches_request() {
        let cfg = PhantomConfig::default_for((16, 16), 8, 7);
        let ph = make_phantom(&cfg).unwrap();
        let traj = Arc::new(golden_angle_spokes(24, 32).unwrap());
        let schedule = Arc::new(
            SamplingSchedule::new((0..24).map(|m| m % 8).collect(), 8).unwrap(),
        );
        let maps = make_coil_maps(2, (16, 16)).unwrap();
        let enc = Encoder::new(maps, traj, schedule, ph.phi_true.clone(), FourierPath::Exact)
            .unwrap();

        let clean = simulate_acquisition(&ph, &enc, 0.0, true, 11).unwrap();
        let noisy = simulate_acquisition(&ph, &enc, 0.05, true, 11).unwrap();
        let n_rms = (noisy
            .b
            .iter()
            .zip(clean.b.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / clean.b.len() as f64)
            .sqrt();
        let s_rms = (clean.b.iter().map(|z| z.norm_sqr()).sum::<f64>() / clean.b.len() as f64).sqrt();
        let ratio = n_rms / s_rms;
        assert!((ratio - 0.05).abs() <= 0.005, "noise ratio {ratio}");
    }

    #[test]
    fn simulation_is_deterministic() {
        let cfg = PhantomConfig::default_for((12, 12), 6, 9);
        let ph = make_phantom(&cfg).unwrap();
        let traj = Arc::new(golden_angle_spokes(12, 24).unwrap());
        let schedule = Arc::new(
            SamplingSchedule::new((0..12).map(|m| m % 6).collect(), 6).unwrap(),
        );
        let maps = make_coil_maps(2, (12, 12)).unwrap();
        let enc = Encoder::new(maps, traj, schedule, ph.phi_true.clone(), FourierPath::Exact)
            .unwrap();
        let a = simulate_acquisition(&ph, &enc, 0.03, true, 21).unwrap();
        let b = simulate_acquisition(&ph, &enc, 0.03, true, 21).unwrap();
        assert!(a.b.iter().zip(b.b.iter()).all(|(x, y)| x == y), "same seed, same bytes");
    }

    #[test]
    fn zero_filled_error_non_increasing_in_spoke_count() {
        let cfg = PhantomConfig::default_for((16, 16), 8, 13);
        let ph = make_phantom(&cfg).unwrap();
        let maps = make_coil_maps(2, (16, 16)).unwrap();
        let mut last = f64::INFINITY;
        for spokes in [13, 26, 52] {
            let traj = Arc::new(golden_angle_spokes(spokes, 32).unwrap());
            let schedule = Arc::new(
                SamplingSchedule::new((0..spokes).map(|m| m % 8).collect(), 8).unwrap(),
            );
            let enc = Encoder::new(
                maps.clone(),
                Arc::clone(&traj),
                schedule,
                ph.phi_true.clone(),
                FourierPath::Exact,
            )
            .unwrap();
            let b = simulate_acquisition(&ph, &enc, 0.0, true, 17).unwrap();
            let d = crate::trajectory::ramp_density_comp(&traj).unwrap();
            let u0 = crate::dc::zero_filled_init(&b, &enc, &d).unwrap();
            let num: f64 = u0
                .u
                .iter()
                .zip(ph.u_true.u.iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum();
            let den: f64 = ph.u_true.u.iter().map(|z| z.norm_sqr()).sum();
            let nrmse = (num / den).sqrt();
            assert!(
                nrmse <= last * (1.0 + 1e-9),
                "NRMSE {nrmse} increased from {last} at {spokes} spokes"
            );
            last = nrmse;
        }
    }
}
