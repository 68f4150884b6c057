//! Golden-angle radial trajectories, readout-to-frame scheduling, and
//! ramp density compensation.

use ndarray::{Array1, Array2, Array3};

use crate::error::{Error, Result};
use crate::transform::ndft::KPoint;

/// Golden-angle azimuth increment pi (sqrt(5) - 1) / 2, about 111.246
/// degrees: successive spokes never repeat a line angle, so any contiguous
/// window of readouts covers k-space near-uniformly.
pub const GOLDEN_ANGLE: f64 =
    std::f64::consts::PI * (2.2360679774997896964091736687747 - 1.0) / 2.0;

/// Non-Cartesian sample coordinates in cycles/pixel, grouped by readout.
#[derive(Debug, Clone)]
pub struct Trajectory {
    coords: Vec<KPoint>,
    n_readouts: usize,
    n_samples: usize,
}

impl Trajectory {
    /// Build from raw coordinates; components must lie in [-0.5, 0.5).
    pub fn from_coords(coords: Vec<KPoint>, n_readouts: usize, n_samples: usize) -> Result<Self> {
        if n_readouts == 0 || n_samples == 0 || coords.len() != n_readouts * n_samples {
            return Err(Error::shape(
                "trajectory",
                format!("{n_readouts} x {n_samples} coords"),
                format!("{}", coords.len()),
            ));
        }
        crate::transform::ndft::check_coords(&coords)?;
        Ok(Trajectory { coords, n_readouts, n_samples })
    }

    pub fn n_readouts(&self) -> usize {
        self.n_readouts
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// All coordinates, readout-major.
    pub fn flat_coords(&self) -> &[KPoint] {
        &self.coords
    }

    pub fn readout_coords(&self, m: usize) -> &[KPoint] {
        &self.coords[m * self.n_samples..(m + 1) * self.n_samples]
    }

    /// True when every readout is a straight line through k = 0.
    pub fn is_radial(&self) -> bool {
        for m in 0..self.n_readouts {
            let spoke = self.readout_coords(m);
            let dir = spoke
                .iter()
                .max_by(|a, b| {
                    let ra = a[0] * a[0] + a[1] * a[1];
                    let rb = b[0] * b[0] + b[1] * b[1];
                    ra.partial_cmp(&rb).unwrap()
                })
                .unwrap();
            let norm = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
            if norm == 0.0 {
                continue; // all samples at DC: degenerate but radial
            }
            let (ux, uy) = (dir[0] / norm, dir[1] / norm);
            for k in spoke {
                let cross = k[0] * uy - k[1] * ux;
                if cross.abs() > 1e-9 {
                    return false;
                }
            }
        }
        true
    }

    /// Serialize as [readout, sample, 2] real-double.
    pub fn to_array(&self) -> Array3<f64> {
        Array3::from_shape_fn((self.n_readouts, self.n_samples, 2), |(m, p, c)| {
            self.coords[m * self.n_samples + p][c]
        })
    }

    pub fn from_array(a: &Array3<f64>) -> Result<Self> {
        let (m, p, c) = a.dim();
        if c != 2 {
            return Err(Error::shape("trajectory array", "last dim 2", format!("{c}")));
        }
        let coords = (0..m * p).map(|i| [a[[i / p, i % p, 0]], a[[i / p, i % p, 1]]]).collect();
        Trajectory::from_coords(coords, m, p)
    }
}

/// Golden-angle radial spokes: spoke i has azimuth i * pi(3 - sqrt(5)),
/// radii (j - n_samples/2) / n_samples for j = 0..n_samples.
pub fn golden_angle_spokes(n_readouts: usize, n_samples: usize) -> Result<Trajectory> {
    if n_readouts < 1 {
        return Err(Error::InvalidArgument("need at least one readout".into()));
    }
    if n_samples < 2 || n_samples % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "readout length must be even and >= 2, got {n_samples}"
        )));
    }
    let dk = 1.0 / n_samples as f64;
    let mut coords = Vec::with_capacity(n_readouts * n_samples);
    for i in 0..n_readouts {
        let theta = i as f64 * GOLDEN_ANGLE;
        let (sin, cos) = theta.sin_cos();
        for j in 0..n_samples {
            let r = (j as f64 - n_samples as f64 / 2.0) * dk;
            coords.push([r * cos, r * sin]);
        }
    }
    Trajectory::from_coords(coords, n_readouts, n_samples)
}

/// Readout-to-frame assignment (the undersampling bookkeeping).
#[derive(Debug, Clone)]
pub struct SamplingSchedule {
    time_index: Vec<usize>,
    n_frames: usize,
}

impl SamplingSchedule {
    pub fn new(time_index: Vec<usize>, n_frames: usize) -> Result<Self> {
        if n_frames == 0 {
            return Err(Error::InvalidArgument("schedule needs at least one frame".into()));
        }
        if let Some(&bad) = time_index.iter().find(|&&t| t >= n_frames) {
            return Err(Error::InvalidArgument(format!(
                "time index {bad} out of range for {n_frames} frames"
            )));
        }
        Ok(SamplingSchedule { time_index, n_frames })
    }

    pub fn n_readouts(&self) -> usize {
        self.time_index.len()
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn frame_of(&self, readout: usize) -> usize {
        self.time_index[readout]
    }

    pub fn time_index(&self) -> &[usize] {
        &self.time_index
    }

    pub fn to_array(&self) -> Array1<f64> {
        self.time_index.iter().map(|&t| t as f64).collect()
    }
}

/// Consecutive blocks of `readouts_per_frame` readouts share a frame:
/// t_m = floor(m / readouts_per_frame).
pub fn linear_schedule(n_readouts: usize, readouts_per_frame: usize) -> Result<SamplingSchedule> {
    if readouts_per_frame < 1 {
        return Err(Error::InvalidArgument("readouts_per_frame must be >= 1".into()));
    }
    if n_readouts == 0 {
        return Err(Error::InvalidArgument("need at least one readout".into()));
    }
    let time_index: Vec<usize> = (0..n_readouts).map(|m| m / readouts_per_frame).collect();
    let n_frames = n_readouts.div_ceil(readouts_per_frame);
    SamplingSchedule::new(time_index, n_frames)
}

/// Per-sample density compensation weights.
#[derive(Debug, Clone)]
pub struct DensityWeights {
    pub w: Array2<f64>,
}

/// Ramp weights before global normalization: |k| away from DC and the
/// annulus-area limit dk/4 at DC.
pub(crate) fn ramp_weights_unscaled(traj: &Trajectory) -> Array2<f64> {
    let dk = 1.0 / traj.n_samples() as f64;
    Array2::from_shape_fn((traj.n_readouts(), traj.n_samples()), |(m, p)| {
        let k = traj.readout_coords(m)[p];
        let r = (k[0] * k[0] + k[1] * k[1]).sqrt();
        if r > 0.0 {
            r
        } else {
            dk / 4.0
        }
    })
}

/// Radial ramp density compensation, globally scaled so max w = 0.5.
pub fn ramp_density_comp(traj: &Trajectory) -> Result<DensityWeights> {
    if !traj.is_radial() {
        return Err(Error::InvalidArgument(
            "ramp density compensation needs a radial trajectory (spokes through k = 0)".into(),
        ));
    }
    let mut w = ramp_weights_unscaled(traj);
    let max = w.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        let scale = 0.5 / max;
        w.mapv_inplace(|v| v * scale);
    }
    Ok(DensityWeights { w })
}
