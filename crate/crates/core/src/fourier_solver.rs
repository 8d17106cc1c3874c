//! Fourier band solver.
//!
//! Expanding the θ-profile at frequency ω = ρ(cos φ, sin φ) as
//! P̂(ω, θ) = Σ_l P_l e^{il(θ−φ)} turns the resolvent equation into a
//! pentadiagonal system for the coefficients (couplings l±1 from
//! convection, l±2 from the anisotropic diffusion). After multiplying by
//! 4/D33 the rows read
//!
//! r P_{l−2} + (q + t) P_{l−1} + p_l P_l + (q − t) P_{l+1} + r P_{l+2} = (4α/D33) U_l
//!
//! with p_l = 4l² + (4α + 2ρ²(D11+D22) + 4i a3 l)/D33, r = ρ²(D11−D22)/D33,
//! q = 2iρ a1/D33, t = 2ρ a2/D33. Boundary coefficients outside
//! [−N, N] are zero.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::eig::tridiag_eigen;
use crate::error::{Result, Se2Error};
use crate::field::Se2Field;
use crate::grid::GridSpec;
use crate::params::DiffusionParams;
use crate::sampling;

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Truncated pentadiagonal system of size 2N+1 at one ρ.
#[derive(Debug, Clone)]
pub struct BandSystem {
    pub n: usize,
    pub rho: f64,
    /// p_l for l = −N..N
    pub diag: Vec<C>,
    pub r: C,
    pub q: C,
    pub t: C,
    /// 4α/D33
    pub rhs_scale: f64,
}

impl BandSystem {
    pub fn new(rho: f64, p: &DiffusionParams, n: usize) -> Self {
        let d33 = p.d33;
        let diag = (-(n as i64)..=n as i64)
            .map(|l| {
                let l = l as f64;
                C::new(4.0 * l * l + (4.0 * p.alpha + 2.0 * rho * rho * (p.d11 + p.d22)) / d33, 4.0 * p.a3 * l / d33)
            })
            .collect();
        BandSystem {
            n,
            rho,
            diag,
            r: C::new(rho * rho * (p.d11 - p.d22) / d33, 0.0),
            q: C::new(0.0, 2.0 * rho * p.a1 / d33),
            t: C::new(2.0 * rho * p.a2 / d33, 0.0),
            rhs_scale: 4.0 * p.alpha / d33,
        }
    }

    pub fn size(&self) -> usize {
        2 * self.n + 1
    }

    /// Entry (i, j) with row/column indices 0..2N+1 (l = i − N).
    pub fn entry(&self, i: usize, j: usize) -> C {
        match j as i64 - i as i64 {
            0 => self.diag[i],
            -1 => self.q + self.t,
            1 => self.q - self.t,
            -2 | 2 => self.r,
            _ => ZERO,
        }
    }

    pub fn matvec(&self, x: &[C]) -> Vec<C> {
        let m = self.size();
        (0..m)
            .map(|i| {
                let lo = i.saturating_sub(2);
                let hi = (i + 2).min(m - 1);
                (lo..=hi).map(|j| self.entry(i, j) * x[j]).sum()
            })
            .collect()
    }

    fn diagonally_dominant(&self) -> bool {
        let off = 2.0 * self.r.norm() + (self.q + self.t).norm() + (self.q - self.t).norm();
        self.diag.iter().all(|d| d.norm() >= off)
    }

    pub fn factor(&self) -> Result<BandLu> {
        BandLu::new(self)
    }
}

/// LU factors of a pentadiagonal matrix, partial pivoting only when the
/// matrix is not diagonally dominant. Row i of U holds columns i..i+4.
#[derive(Debug, Clone)]
pub struct BandLu {
    m: usize,
    upper: Vec<[C; 5]>,
    lower: Vec<[C; 2]>,
    pivots: Vec<usize>,
    pub pivoted: bool,
}

impl BandLu {
    fn new(sys: &BandSystem) -> Result<Self> {
        let m = sys.size();
        let pivoted = !sys.diagonally_dominant();
        // working rows: absolute columns base..base+7 with base = i − 2
        let mut rows: Vec<[C; 7]> = (0..m)
            .map(|i| {
                let mut r = [ZERO; 7];
                for (k, slot) in r.iter_mut().enumerate().take(5) {
                    let j = i as i64 - 2 + k as i64;
                    if j >= 0 && (j as usize) < m {
                        *slot = sys.entry(i, j as usize);
                    }
                }
                r
            })
            .collect();
        let get = |rows: &Vec<[C; 7]>, i: usize, j: usize| -> C {
            let k = j as i64 - i as i64 + 2;
            if (0..7).contains(&k) {
                rows[i][k as usize]
            } else {
                ZERO
            }
        };
        let mut upper = vec![[ZERO; 5]; m];
        let mut lower = vec![[ZERO; 2]; m];
        let mut pivots = vec![0; m];
        for col in 0..m {
            let last = (col + 2).min(m - 1);
            let mut piv = col;
            if pivoted {
                let mut best = get(&rows, col, col).norm();
                for r in col + 1..=last {
                    let v = get(&rows, r, col).norm();
                    if v > best {
                        best = v;
                        piv = r;
                    }
                }
            }
            pivots[col] = piv;
            if piv != col {
                let a: Vec<C> = (col..col + 5).map(|j| get(&rows, col, j)).collect();
                let b: Vec<C> = (col..col + 5).map(|j| get(&rows, piv, j)).collect();
                rows[col] = [ZERO; 7];
                rows[piv] = [ZERO; 7];
                for k in 0..5 {
                    rows[col][k + 2] = b[k];
                    let kk = (col + k) as i64 - piv as i64 + 2;
                    if (0..7).contains(&kk) {
                        rows[piv][kk as usize] = a[k];
                    }
                }
            }
            let d = get(&rows, col, col);
            if d.norm() == 0.0 || !d.norm().is_finite() {
                return Err(Se2Error::Numerical(format!("singular band matrix at ρ = {}", sys.rho)));
            }
            for (k, u) in upper[col].iter_mut().enumerate() {
                *u = get(&rows, col, col + k);
            }
            for r in col + 1..=last {
                let f = get(&rows, r, col) / d;
                lower[col][r - col - 1] = f;
                for j in col..col + 5 {
                    let k = j as i64 - r as i64 + 2;
                    if (0..7).contains(&k) {
                        rows[r][k as usize] -= f * upper[col][j - col];
                    }
                }
            }
        }
        Ok(BandLu { m, upper, lower, pivots, pivoted })
    }

    pub fn solve(&self, rhs: &[C]) -> Vec<C> {
        let m = self.m;
        let mut b = rhs.to_vec();
        for col in 0..m {
            b.swap(col, self.pivots[col]);
            for k in 0..2 {
                let r = col + k + 1;
                if r < m {
                    b[r] = b[r] - self.lower[col][k] * b[col];
                }
            }
        }
        for i in (0..m).rev() {
            let mut acc = b[i];
            for k in 1..5 {
                if i + k < m {
                    acc -= self.upper[i][k] * b[i + k];
                }
            }
            b[i] = acc / self.upper[i][0];
        }
        b
    }
}

/// Solve the band system at ρ for coefficient vector `rhs` (Ũ_l, l = −N..N);
/// the right-hand side is scaled by 4α/D33.
pub fn solve_column(rho: f64, rhs: &[C], p: &DiffusionParams, n: usize) -> Result<Vec<C>> {
    if rhs.len() != 2 * n + 1 {
        return Err(Se2Error::InvalidParams(format!("rhs length {} ≠ 2N+1 = {}", rhs.len(), 2 * n + 1)));
    }
    let sys = BandSystem::new(rho, p, n);
    let lu = sys.factor()?;
    let scaled: Vec<C> = rhs.iter().map(|v| v * sys.rhs_scale).collect();
    Ok(lu.solve(&scaled))
}

/// Coefficients of a Gaussian-blurred spike at the identity:
/// Ũ_l = e^{ilφ} e^{−sρ²}/(2π).
pub fn spike_coefficients(rho: f64, phi: f64, s: f64, n: usize) -> Vec<C> {
    let g = (-s * rho * rho).exp() / (2.0 * PI);
    (-(n as i64)..=n as i64).map(|l| C::from_polar(g, l as f64 * phi)).collect()
}

fn check(p: &DiffusionParams, grid: &GridSpec, n: usize) -> Result<()> {
    p.validate(false)?;
    if n < grid.r {
        return Err(Se2Error::InvalidParams(format!("band truncation N = {n} below R = {}", grid.r)));
    }
    Ok(())
}

/// θ-columns at the given lattice points; Gamma order k applies the
/// resolvent k times.
fn fbt_columns(grid: &GridSpec, p: &DiffusionParams, n: usize, points: &[(i64, i64)]) -> Result<Vec<Vec<C>>> {
    let mut unique: Vec<(i64, i64)> = points.iter().map(|&pq| sampling::half_plane(pq).0).collect();
    unique.sort_unstable();
    unique.dedup();
    let mut by_rho: HashMap<u64, Vec<(i64, i64)>> = HashMap::new();
    for &pq in &unique {
        let rho = grid.omega_x(pq.0).hypot(grid.omega_y(pq.1));
        by_rho.entry(rho.to_bits()).or_default().push(pq);
    }
    let groups: Vec<(u64, Vec<(i64, i64)>)> = by_rho.into_iter().collect();
    let r = grid.r as i64;
    let solved: Vec<Vec<((i64, i64), Vec<C>)>> = groups
        .par_iter()
        .map(|(bits, pts)| {
            let rho = f64::from_bits(*bits);
            let sys = BandSystem::new(rho, p, n);
            let lu = sys.factor()?;
            Ok(pts
                .iter()
                .map(|&(a, b)| {
                    let (wx, wy) = (grid.omega_x(a), grid.omega_y(b));
                    let phi = if rho == 0.0 { 0.0 } else { wy.atan2(wx) };
                    let mut coef = spike_coefficients(rho, phi, p.s, n);
                    for _ in 0..p.k {
                        let scaled: Vec<C> = coef.iter().map(|v| v * sys.rhs_scale).collect();
                        coef = lu.solve(&scaled);
                    }
                    let col = (-r..=r)
                        .map(|k| {
                            let psi = grid.theta(k) - phi;
                            let w = C::from_polar(1.0, psi);
                            // Horner in e^{iψ}, starting from l = N
                            let mut acc = ZERO;
                            for c in coef.iter().rev() {
                                acc = acc * w + c;
                            }
                            acc * C::from_polar(1.0, -(n as f64) * psi)
                        })
                        .collect();
                    ((a, b), col)
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let lookup: HashMap<(i64, i64), Vec<C>> = solved.into_iter().flatten().collect();
    Ok(points
        .iter()
        .map(|&pq| {
            let (key, flip) = sampling::half_plane(pq);
            let col = &lookup[&key];
            if flip {
                col.iter().map(|v| v.conj()).collect()
            } else {
                col.clone()
            }
        })
        .collect())
}

/// Frequency-domain kernel on the base lattice.
pub fn kernel_fbt_hat(grid: &GridSpec, p: &DiffusionParams, n: usize) -> Result<Se2Field> {
    check(p, grid, n)?;
    let points = sampling::base_points(grid);
    let cols = fbt_columns(grid, p, n, &points)?;
    Ok(sampling::columns_to_field(grid, &points, &cols))
}

/// Spatial, DC-normalized kernel (ς-oversampled and folded like the
/// exact kernels).
pub fn kernel_fbt(grid: &GridSpec, p: &DiffusionParams, n: usize) -> Result<Se2Field> {
    check(p, grid, n)?;
    let points = sampling::oversampled_points(grid);
    let cols = fbt_columns(grid, p, n, &points)?;
    sampling::fold_to_spatial(grid, &points, &cols)
}

/// Eigen-decomposition of the band matrix for pure diffusion (no
/// convection): A = (4/D33) S diag(α − λ_n) Sᵀ. The matrix splits into
/// even-l and odd-l tridiagonal blocks; columns of S from the even block
/// vanish on odd rows and vice versa.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub n: usize,
    pub alpha: f64,
    /// columns of S, each of length 2N+1 (row index l + N)
    pub columns: Vec<Vec<C>>,
    /// α − λ_n per column
    pub lambda: Vec<C>,
    /// true for columns of the even-l block
    pub even: Vec<bool>,
}

impl SpectralDecomposition {
    /// α S Λ⁻¹ Sᵀ u
    pub fn apply(&self, u: &[C]) -> Vec<C> {
        let mut out = vec![ZERO; u.len()];
        for (col, lam) in self.columns.iter().zip(&self.lambda) {
            let proj: C = col.iter().zip(u).map(|(a, b)| a * b).sum();
            let w = proj * self.alpha / lam;
            for (o, c) in out.iter_mut().zip(col) {
                *o += c * w;
            }
        }
        out
    }
}

pub fn spectral_decompose(rho: f64, p: &DiffusionParams, n: usize) -> Result<SpectralDecomposition> {
    if p.a1 != 0.0 || p.a2 != 0.0 || p.a3 != 0.0 {
        return Err(Se2Error::InvalidParams("spectral decomposition needs a = 0".into()));
    }
    let sys = BandSystem::new(rho, p, n);
    let m = sys.size();
    let mut columns = Vec::new();
    let mut lambda = Vec::new();
    let mut even = Vec::new();
    for parity in [0usize, 1] {
        // rows i with l = i − N of the given parity
        let idx: Vec<usize> = (0..m).filter(|&i| (i + n) % 2 == parity).collect();
        let d: Vec<C> = idx.iter().map(|&i| sys.diag[i]).collect();
        let o = vec![sys.r; idx.len().saturating_sub(1)];
        let eg = tridiag_eigen(&d, &o)?;
        for k in 0..idx.len() {
            let v = eg.vector(k);
            let mut col = vec![ZERO; m];
            for (&i, vi) in idx.iter().zip(&v) {
                col[i] = *vi;
            }
            columns.push(col);
            lambda.push(eg.values[k] * p.d33 / 4.0);
            even.push(parity == 0);
        }
    }
    Ok(SpectralDecomposition { n, alpha: p.alpha, columns, lambda, even })
}
