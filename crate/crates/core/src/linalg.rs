//! Small complex Hermitian factorizations used by the per-location kernel
//! solves, plus a power-iteration norm estimate for step-size scaling.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// In-place lower Cholesky of a Hermitian positive-definite l x l matrix in
/// row-major order. Only the lower triangle of the input is read; on return
/// the lower triangle holds L with A = L L^H.
pub fn cholesky_in_place(a: &mut [Complex64], l: usize) -> Result<()> {
    debug_assert_eq!(a.len(), l * l);
    for k in 0..l {
        let mut d = a[k * l + k].re;
        for p in 0..k {
            d -= a[k * l + p].norm_sqr();
        }
        if !(d > 0.0) {
            return Err(Error::Numerical(format!(
                "Cholesky pivot {k} not positive ({d:.3e}); matrix not positive definite"
            )));
        }
        let dk = d.sqrt();
        a[k * l + k] = Complex64::new(dk, 0.0);
        for i in (k + 1)..l {
            let mut s = a[i * l + k];
            for p in 0..k {
                s -= a[i * l + p] * a[k * l + p].conj();
            }
            a[i * l + k] = s / dk;
        }
    }
    Ok(())
}

/// Solve A x = b given the Cholesky factor from [`cholesky_in_place`];
/// `rhs` is overwritten with the solution.
pub fn cholesky_solve(chol: &[Complex64], l: usize, rhs: &mut [Complex64]) {
    debug_assert_eq!(chol.len(), l * l);
    debug_assert_eq!(rhs.len(), l);
    // L y = b
    for i in 0..l {
        let mut s = rhs[i];
        for p in 0..i {
            s -= chol[i * l + p] * rhs[p];
        }
        rhs[i] = s / chol[i * l + i].re;
    }
    // L^H x = y
    for i in (0..l).rev() {
        let mut s = rhs[i];
        for p in (i + 1)..l {
            s -= chol[p * l + i].conj() * rhs[p];
        }
        rhs[i] = s / chol[i * l + i].re;
    }
}

/// In-place LU with partial pivoting for a general l x l complex matrix,
/// row-major. `perm[k]` records the row swapped into position k at step k.
pub fn lu_in_place(a: &mut [Complex64], l: usize, perm: &mut [u8]) -> Result<()> {
    debug_assert_eq!(a.len(), l * l);
    debug_assert_eq!(perm.len(), l);
    for k in 0..l {
        let mut p = k;
        let mut best = a[k * l + k].norm_sqr();
        for i in (k + 1)..l {
            let v = a[i * l + k].norm_sqr();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 {
            return Err(Error::Numerical(format!("singular matrix at pivot {k}")));
        }
        perm[k] = p as u8;
        if p != k {
            for j in 0..l {
                a.swap(k * l + j, p * l + j);
            }
        }
        let piv = a[k * l + k];
        for i in (k + 1)..l {
            let f = a[i * l + k] / piv;
            a[i * l + k] = f;
            for j in (k + 1)..l {
                let akj = a[k * l + j];
                a[i * l + j] -= f * akj;
            }
        }
    }
    Ok(())
}

/// Solve A x = b given the factorization from [`lu_in_place`].
pub fn lu_solve(lu: &[Complex64], perm: &[u8], l: usize, rhs: &mut [Complex64]) {
    for k in 0..l {
        let p = perm[k] as usize;
        if p != k {
            rhs.swap(k, p);
        }
        let rk = rhs[k];
        for i in (k + 1)..l {
            rhs[i] -= lu[i * l + k] * rk;
        }
    }
    for i in (0..l).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..l {
            s -= lu[i * l + j] * rhs[j];
        }
        rhs[i] = s / lu[i * l + i];
    }
}

/// Estimate the spectral norm of a Hermitian PSD operator by power iteration.
pub fn power_iteration_norm<F>(mut apply: F, dim: usize, iters: usize, seed: u64) -> f64
where
    F: FnMut(&[Complex64]) -> Vec<Complex64>,
{
    let mut s = seed | 1;
    let mut next = move || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut v: Vec<Complex64> = (0..dim).map(|_| Complex64::new(next(), next())).collect();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for z in v.iter_mut() {
            *z /= norm;
        }
        let w = apply(&v);
        lambda = v.iter().zip(w.iter()).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
        v = w;
    }
    lambda.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_hermitian_system() {
        // A = B B^H + I with a fixed small B, so A is Hermitian PD.
        let l = 3;
        let b = [
            Complex64::new(1.0, 0.5),
            Complex64::new(-0.3, 0.2),
            Complex64::new(0.7, 0.0),
            Complex64::new(0.2, -1.1),
            Complex64::new(0.4, 0.4),
            Complex64::new(-0.6, 0.1),
            Complex64::new(0.0, 0.9),
            Complex64::new(1.2, -0.2),
            Complex64::new(0.3, 0.3),
        ];
        let mut a = vec![Complex64::ZERO; l * l];
        for i in 0..l {
            for j in 0..l {
                let mut s = if i == j { Complex64::new(1.0, 0.0) } else { Complex64::ZERO };
                for k in 0..l {
                    s += b[i * l + k] * b[j * l + k].conj();
                }
                a[i * l + j] = s;
            }
        }
        let x_true = [Complex64::new(0.3, -0.4), Complex64::new(-1.0, 0.2), Complex64::new(0.5, 0.9)];
        let mut rhs = vec![Complex64::ZERO; l];
        for i in 0..l {
            for j in 0..l {
                rhs[i] += a[i * l + j] * x_true[j];
            }
        }
        let mut chol = a.clone();
        cholesky_in_place(&mut chol, l).unwrap();
        cholesky_solve(&chol, l, &mut rhs);
        for (got, want) in rhs.iter().zip(x_true.iter()) {
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(1.0, 0.0),
        ];
        assert!(cholesky_in_place(&mut a, 2).is_err());
    }

    #[test]
    fn lu_solves_indefinite_hermitian_system() {
        // Hermitian but indefinite (eigenvalues of opposite sign).
        let l = 2;
        let a = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 2.0),
            Complex64::new(0.0, -2.0),
            Complex64::new(-1.0, 0.0),
        ];
        let x_true = [Complex64::new(0.4, 0.1), Complex64::new(-0.2, 0.7)];
        let mut rhs = [Complex64::ZERO; 2];
        for i in 0..l {
            for j in 0..l {
                rhs[i] += a[i * l + j] * x_true[j];
            }
        }
        let mut lu = a;
        let mut perm = [0u8; 2];
        lu_in_place(&mut lu, l, &mut perm).unwrap();
        lu_solve(&lu, &perm, l, &mut rhs);
        for (got, want) in rhs.iter().zip(x_true.iter()) {
            assert!((got - want).norm() < 1e-13);
        }
    }

    #[test]
    fn power_iteration_finds_dominant_eigenvalue() {
        // Diagonal operator with entries 1..=4.
        let apply = |v: &[Complex64]| {
            v.iter().enumerate().map(|(i, z)| z * (i + 1) as f64).collect::<Vec<_>>()
        };
        let est = power_iteration_norm(apply, 4, 50, 9);
        assert!((est - 4.0).abs() < 1e-6, "estimate {est}");
    }
}
