use num_complex::Complex64;

use crate::cdft;
use crate::error::{Result, Se2Error};
use crate::grid::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Spatial,
    Frequency,
}

/// A complex function sampled on a [`GridSpec`] lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Se2Field {
    pub domain: Domain,
    pub grid: GridSpec,
    pub data: Vec<Complex64>,
}

impl Se2Field {
    pub fn zeros(grid: GridSpec, domain: Domain) -> Self {
        Se2Field { domain, grid, data: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_data(grid: GridSpec, domain: Domain, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Se2Error::GridMismatch(format!(
                "data length {} does not match grid size {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(Se2Field { domain, grid, data })
    }

    pub fn from_real(grid: GridSpec, domain: Domain, data: &[f64]) -> Result<Self> {
        Se2Field::from_data(grid, domain, data.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// Evaluate `f(r, p, q)` on every centered lattice index.
    pub fn from_fn(grid: GridSpec, domain: Domain, mut f: impl FnMut(i64, i64, i64) -> Complex64) -> Self {
        let data = (0..grid.len())
            .map(|i| {
                let (r, p, q) = grid.coords(i);
                f(r, p, q)
            })
            .collect();
        Se2Field { domain, grid, data }
    }

    /// Discrete spike of unit mass at the origin sample.
    pub fn spike(grid: GridSpec) -> Self {
        let mut f = Se2Field::zeros(grid, Domain::Spatial);
        f.data[grid.index(0, 0, 0)] = Complex64::new(1.0 / grid.cell_volume(), 0.0);
        f
    }

    #[inline]
    pub fn get(&self, r: i64, p: i64, q: i64) -> Complex64 {
        self.data[self.grid.index(r, p, q)]
    }

    #[inline]
    pub fn set(&mut self, r: i64, p: i64, q: i64, v: Complex64) {
        let i = self.grid.index(r, p, q);
        self.data[i] = v;
    }

    /// Orientation slice r ∈ [−R, R] as a contiguous (2P+1)(2Q+1) block.
    pub fn slice(&self, r: i64) -> &[Complex64] {
        let n = self.grid.slice_len();
        let ir = (r + self.grid.r as i64) as usize;
        &self.data[ir * n..(ir + 1) * n]
    }

    pub fn slice_mut(&mut self, r: i64) -> &mut [Complex64] {
        let n = self.grid.slice_len();
        let ir = (r + self.grid.r as i64) as usize;
        &mut self.data[ir * n..(ir + 1) * n]
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.re).collect()
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.data.iter().fold(0.0, |m, c| m.max(c.im.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    /// Drop imaginary parts.
    pub fn to_real(&self) -> Se2Field {
        Se2Field {
            domain: self.domain,
            grid: self.grid,
            data: self.data.iter().map(|c| Complex64::new(c.re, 0.0)).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn require(&self, domain: Domain) -> Result<()> {
        if self.domain != domain {
            return Err(Se2Error::DomainMismatch { expected: domain, found: self.domain });
        }
        Ok(())
    }

    pub fn require_same_grid(&self, other: &Se2Field) -> Result<()> {
        if !self.grid.same_shape(&other.grid) {
            return Err(Se2Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    /// Σ U ΔxΔyΔθ (real part) for spatial fields; Σ_r Û(0,0,θ_r)Δθ for
    /// frequency fields. The two agree for a field and its CDFT scaled by ΔxΔy.
    pub fn mass(&self) -> f64 {
        let g = &self.grid;
        match self.domain {
            Domain::Spatial => self.data.iter().map(|c| c.re).sum::<f64>() * g.cell_volume(),
            Domain::Frequency => (-(g.r as i64)..=g.r as i64).map(|r| self.get(r, 0, 0).re).sum::<f64>() * g.dtheta(),
        }
    }

    /// Scale so that the DC components add up to one:
    /// Σ_r [CDFT U(·,·,θ_r)](0,0)·ΔxΔyΔθ = 1.
    pub fn dc_normalize(&self) -> Result<Se2Field> {
        let m = match self.domain {
            Domain::Spatial => {
                let g = &self.grid;
                let mut dc = 0.0;
                for r in -(g.r as i64)..=g.r as i64 {
                    dc += cdft::slice_dc(self.slice(r)).re;
                }
                dc * g.cell_volume()
            }
            Domain::Frequency => self.mass(),
        };
        if m == 0.0 || !m.is_finite() {
            return Err(Se2Error::ZeroMass);
        }
        let mut out = self.clone();
        out.scale(1.0 / m);
        Ok(out)
    }

    /// Scale so that Σ|U| ΔxΔyΔθ = 1 (spatial) or Σ|Û| Δθ-weighted sum = 1.
    pub fn l1_normalize(&self) -> Result<Se2Field> {
        let n = self.norm_l1();
        if n == 0.0 || !n.is_finite() {
            return Err(Se2Error::ZeroMass);
        }
        let mut out = self.clone();
        out.scale(1.0 / (n * self.grid.cell_volume()));
        Ok(out)
    }

    pub fn norm_l1(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// θ-integrated field Σ_r U(·,·,θ_r)Δθ as a (2P+1)×(2Q+1) row-major array
    /// (x index slowest).
    pub fn xy_marginal(&self) -> Result<Vec<f64>> {
        self.require(Domain::Spatial)?;
        let g = &self.grid;
        let mut out = vec![0.0; g.slice_len()];
        for r in -(g.r as i64)..=g.r as i64 {
            for (o, v) in out.iter_mut().zip(self.slice(r)) {
                *o += v.re * g.dtheta();
            }
        }
        Ok(out)
    }

    /// Element-wise product (same grid, same domain).
    pub fn pointwise_mul(&self, other: &Se2Field) -> Result<Se2Field> {
        self.require_same_grid(other)?;
        other.require(self.domain)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        Ok(Se2Field { domain: self.domain, grid: self.grid, data })
    }
}
