//! Eigen-decomposition of complex symmetric tridiagonal matrices by the
//! implicit QL method with complex orthogonal rotations.
//!
//! For real input this is the textbook symmetric QL iteration. For complex
//! symmetric input the accumulated eigenvector matrix Z satisfies ZᵀZ = I
//! (bilinear, not Hermitian, orthonormality), which is the pairing the
//! Mathieu eigen-expansions use.

use num_complex::Complex64;

use crate::error::{Result, Se2Error};

type C = Complex64;

/// Eigenvalues and eigenvectors (columns of `vectors`, row-major n×n:
/// `vectors[i * n + k]` is component i of eigenvector k).
#[derive(Debug, Clone)]
pub struct TridiagEigen {
    pub values: Vec<C>,
    pub vectors: Vec<C>,
    pub n: usize,
}

impl TridiagEigen {
    pub fn vector(&self, k: usize) -> Vec<C> {
        (0..self.n).map(|i| self.vectors[i * self.n + k]).collect()
    }
}

/// `diag` has length n, `off` length n − 1 (sub/super-diagonal).
pub fn tridiag_eigen(diag: &[C], off: &[C]) -> Result<TridiagEigen> {
    let n = diag.len();
    if n == 0 || off.len() + 1 != n {
        return Err(Se2Error::InvalidParams("tridiagonal sizes inconsistent".into()));
    }
    let mut d = diag.to_vec();
    let mut e = vec![C::new(0.0, 0.0); n];
    e[..n - 1].copy_from_slice(off);
    let mut z = vec![C::new(0.0, 0.0); n * n];
    for i in 0..n {
        z[i * n + i] = C::new(1.0, 0.0);
    }
    let eps = f64::EPSILON;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].norm() + d[m + 1].norm();
                if e[m].norm() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 200 {
                return Err(Se2Error::Numerical("tridiagonal QL did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = (g * g + 1.0).sqrt();
            if (g - r).norm() > (g + r).norm() {
                r = -r;
            }
            g = d[m] - d[l] + e[l] / (g + r);
            let mut s = C::new(1.0, 0.0);
            let mut c = C::new(1.0, 0.0);
            let mut p = C::new(0.0, 0.0);
            let mut early = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = (f * f + g * g).sqrt();
                e[i + 1] = r;
                if r.norm() < 1e-300 {
                    d[i + 1] -= p;
                    e[m] = C::new(0.0, 0.0);
                    early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let zf = z[k * n + i + 1];
                    let zi = z[k * n + i];
                    z[k * n + i + 1] = s * zi + c * zf;
                    z[k * n + i] = c * zi - s * zf;
                }
            }
            if early {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = C::new(0.0, 0.0);
        }
    }
    Ok(TridiagEigen { values: d, vectors: z, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(diag: &[C], off: &[C], tol: f64) {
        let n = diag.len();
        let eg = tridiag_eigen(diag, off).unwrap();
        for k in 0..n {
            let v = eg.vector(k);
            for i in 0..n {
                let mut av = diag[i] * v[i];
                if i > 0 {
                    av += off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    av += off[i] * v[i + 1];
                }
                assert!((av - eg.values[k] * v[i]).norm() < tol, "residual at ({i},{k})");
            }
            for j in 0..n {
                let dot: C = (0..n).map(|i| v[i] * eg.vectors[i * n + j]).sum();
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((dot - want).norm() < tol, "bilinear orthonormality ({k},{j})");
            }
        }
    }

    #[test]
    fn real_symmetric() {
        let diag: Vec<C> = (0..12).map(|i| C::new((i * i) as f64, 0.0)).collect();
        let off: Vec<C> = (0..11).map(|i| C::new(1.5 + 0.1 * i as f64, 0.0)).collect();
        check(&diag, &off, 1e-10);
    }

    #[test]
    fn complex_symmetric() {
        let diag: Vec<C> = (0..10).map(|i| C::new(4.0 * (i * i) as f64, 0.0)).collect();
        let off: Vec<C> = vec![C::new(0.0, 3.0); 9];
        check(&diag, &off, 1e-9);
    }
}
