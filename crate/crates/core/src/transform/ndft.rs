//! Exact nonuniform DFT, the correctness oracle for the gridding NUFFT.
//!
//! `forward`: s_m = sum_r x(r) e^{-i-2pi k_m . r} with the image center pixel
//! (nx/2, ny/2) at r = 0 and k in cycles/pixel, components in [-0.5, 0.5).

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// One k-space location in cycles/pixel.
pub type KPoint = [f64; 2];

pub fn check_coords(coords: &[KPoint]) -> Result<()> {
    for (m, k) in coords.iter().enumerate() {
        if !(k[0] >= -0.5 && k[0] < 0.5 && k[1] >= -0.5 && k[1] < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "k-space coordinate {m} = ({}, {}) outside [-0.5, 0.5)",
                k[0], k[1]
            )));
        }
    }
    Ok(())
}

fn phase_vector(n: usize, k: f64, sign: f64) -> Vec<Complex64> {
    let c = n as f64 / 2.0;
    (0..n)
        .map(|i| Complex64::from_polar(1.0, sign * std::f64::consts::TAU * k * (i as f64 - c)))
        .collect()
}

/// Exact nonuniform forward DFT of a 2-D image at arbitrary coordinates.
pub fn ndft_forward(image: &Array2<Complex64>, coords: &[KPoint]) -> Result<Vec<Complex64>> {
    check_coords(coords)?;
    let (nx, ny) = image.dim();
    let img = image.as_slice().expect("contiguous image");

    let out: Vec<Complex64> = coords
        .par_chunks(256)
        .flat_map_iter(|chunk| {
            chunk
                .iter()
                .map(|k| {
                    let ex = phase_vector(nx, k[0], -1.0);
                    let ey = phase_vector(ny, k[1], -1.0);
                    let mut acc = Complex64::ZERO;
                    for (i, exi) in ex.iter().enumerate() {
                        let row = &img[i * ny..(i + 1) * ny];
                        let mut inner = Complex64::ZERO;
                        for (v, eyj) in row.iter().zip(ey.iter()) {
                            inner += v * eyj;
                        }
                        acc += exi * inner;
                    }
                    acc
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(out)
}

/// Exact conjugate transpose of [`ndft_forward`]:
/// u(r) = sum_m s_m e^{+i2pi k_m . r}.
pub fn ndft_adjoint(
    samples: &[Complex64],
    coords: &[KPoint],
    size: (usize, usize),
) -> Result<Array2<Complex64>> {
    check_coords(coords)?;
    if samples.len() != coords.len() {
        return Err(Error::shape(
            "ndft_adjoint",
            format!("{} samples", coords.len()),
            format!("{}", samples.len()),
        ));
    }
    let (nx, ny) = size;
    let mut out = Array2::<Complex64>::zeros((nx, ny));
    if samples.is_empty() {
        return Ok(out);
    }

    let cx = nx as f64 / 2.0;
    // Blocked over samples so the y-phase table stays small; rows are
    // processed in parallel and accumulate block-by-block in a fixed order,
    // which keeps the result independent of the thread schedule.
    let block = 512;
    let out_slice = out.as_slice_mut().unwrap();
    for (bs, bk) in samples.chunks(block).zip(coords.chunks(block)) {
        let ey: Vec<Vec<Complex64>> = bk.iter().map(|k| phase_vector(ny, k[1], 1.0)).collect();
        out_slice
            .par_chunks_mut(ny)
            .enumerate()
            .for_each(|(i, row)| {
                let rx = i as f64 - cx;
                for ((s, k), eyv) in bs.iter().zip(bk.iter()).zip(ey.iter()) {
                    let w = s * Complex64::from_polar(1.0, std::f64::consts::TAU * k[0] * rx);
                    for (o, e) in row.iter_mut().zip(eyv.iter()) {
                        *o += w * e;
                    }
                }
            });
    }
    Ok(out)
}
