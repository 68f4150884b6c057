use ncs_core::dc::*;
use ncs_core::encoding::*;
use ncs_core::subspace::TemporalBasis;
use ncs_core::trajectory::*;
use ncs_core::transform::fft::{fft2c, ifft2c};
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use std::sync::Arc;

fn rand_rng(seed: u64) -> impl FnMut() -> f64 {
    let mut s = seed | 1;
    move || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }
}

fn random_basis(l: usize, t: usize, seed: u64) -> TemporalBasis {
    let mut next = rand_rng(seed);
    let raw = nalgebra::DMatrix::<f64>::from_fn(t, l, |_, _| next());
    let q = raw.qr().q();
    let mut phi = Array2::<Complex64>::zeros((l, t));
    for i in 0..l {
        for s in 0..t {
            phi[[i, s]] = Complex64::new(q[(s, i)], 0.0);
        }
    }
    TemporalBasis::new(phi).unwrap()
}

fn smooth_factor(nx: usize, l: usize, seed: u64, cutoff: f64) -> SpatialFactor {
    let mut nf = rand_rng(seed);
    let mut u = Array3::from_shape_fn((nx, nx, l), |_| Complex64::new(nf(), nf()));
    for k in 0..l {
        let img = u.index_axis(ndarray::Axis(2), k).to_owned();
        let mut spec = fft2c(&img);
        for i in 0..nx {
            for j in 0..nx {
                let kx = (i as f64 - nx as f64 / 2.0) / nx as f64;
                let ky = (j as f64 - nx as f64 / 2.0) / nx as f64;
                spec[[i, j]] *= (-(kx * kx + ky * ky) / (cutoff * cutoff)).exp();
            }
        }
        let sm = ifft2c(&spec);
        for i in 0..nx {
            for j in 0..nx {
                u[[i, j, k]] = sm[[i, j]];
            }
        }
    }
    SpatialFactor::new(u).unwrap()
}

fn main() {
    for (noise, spokes) in [(0.0f64, 48usize), (0.05, 48), (0.05, 96), (0.02, 96)] {
        let nx = 12usize;
        let (l, t) = (2usize, 12usize);
        let traj = Arc::new(golden_angle_spokes(spokes, 2 * nx).unwrap());
        let schedule = Arc::new(SamplingSchedule::new((0..spokes).map(|m| m % t).collect(), t).unwrap());
        let phi = random_basis(l, t, 131);
        let maps = CoilSensitivities::new(Array3::from_elem((1, nx, nx), Complex64::new(1.0, 0.0))).unwrap();
        let enc = Encoder::new(maps, traj, schedule, phi, FourierPath::Exact)
            .unwrap()
            .with_toeplitz_field(true)
            .unwrap();

        let u_true = smooth_factor(nx, l, 137, 0.18);
        let mut b = enc.forward(&u_true).unwrap();
        let rms = (b.b.iter().map(|z| z.norm_sqr()).sum::<f64>() / b.b.len() as f64).sqrt();
        let mut ng = rand_rng(777);
        b.b.mapv_inplace(|z| z + noise * rms * Complex64::new(ng(), ng()) * std::f64::consts::SQRT_2);

        // prior: truth + noise at SNR 10 (scaled smooth-ish noise)
        let mut pn = rand_rng(139);
        let mut prior = u_true.u.clone();
        let tn = u_true.norm();
        let mut pert = Array3::<Complex64>::zeros(prior.dim());
        pert.mapv_inplace(|_| Complex64::new(pn(), pn()));
        let pnorm = pert.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        ndarray::Zip::from(&mut prior).and(&pert).for_each(|a, &p| *a += p * (tn / (10.0 * pnorm)));
        let u_cnn = SpatialFactor { u: prior };

        let mut cfg = DCConfig::default();
        let lambda = tune_lambda(&enc, &b, &u_cnn, &u_true, LambdaSolver::Ds, &cfg).unwrap();
        cfg.lambda = lambda;
        let ds = ds_dc(&u_cnn, &b, &cfg, &enc).unwrap();
        cfg.cg_iters = 300;
        let cg = cg_dc(&u_cnn, &b, &cfg, &enc).unwrap();
        let obj_ds = dc_objective(&enc, &b, &ds, &u_cnn, lambda).unwrap();
        let obj_cg = dc_objective(&enc, &b, &cg, &u_cnn, lambda).unwrap();
        let norm = estimate_normal_norm(&enc, NormalPath::Direct, 10, 6).unwrap();
        let nrmse = |a: &SpatialFactor| {
            let num: f64 = a.u.iter().zip(u_true.u.iter()).map(|(x, y)| (x - y).norm_sqr()).sum();
            let den: f64 = u_true.u.iter().map(|z| z.norm_sqr()).sum();
            (num / den).sqrt()
        };
        let fid = |u: &SpatialFactor| data_residual_norm(&enc, &b, u).unwrap().powi(2);
        let reg = |u: &SpatialFactor| -> f64 {
            lambda * u.u.iter().zip(u_cnn.u.iter()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>()
        };
        // edge energy of the DS-CG difference (outer 2-pixel ring)
        let mut edge = 0.0; let mut inner = 0.0;
        for i in 0..nx { for j in 0..nx { for k in 0..l {
            let d = (ds.u[[i,j,k]] - cg.u[[i,j,k]]).norm_sqr();
            if i < 2 || j < 2 || i >= nx-2 || j >= nx-2 { edge += d; } else { inner += d; }
        }}}
        println!(
            "noise={noise} spokes={spokes}: lam/n={:7.2e} gap={:8.3e} fid_ds={:9.4e} fid_cg={:9.4e} reg_ds={:9.4e} reg_cg={:9.4e} edge/inner={:6.2}",
            lambda / norm,
            (obj_ds - obj_cg) / obj_cg,
            fid(&ds), fid(&cg), reg(&ds), reg(&cg), edge/inner.max(1e-30)
        );
    }
}
