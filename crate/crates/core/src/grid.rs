use std::f64::consts::PI;

use crate::error::{Result, Se2Error};

/// Centered sampling lattice: (2P+1)×(2Q+1) spatial samples and 2R+1
/// orientations, every axis odd so the origin is a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub p: usize,
    pub q: usize,
    pub r: usize,
    /// Frequency oversampling factor ς: the exact kernel is sampled on
    /// [−ςπ, ςπ]² before folding back onto the base lattice.
    pub oversample: usize,
    pub length_x: f64,
    pub length_y: f64,
}

impl GridSpec {
    /// Unit pixel spacing.
    pub fn new(p: usize, q: usize, r: usize) -> Result<Self> {
        if p == 0 || q == 0 || r == 0 {
            return Err(Se2Error::InvalidParams("grid half-sizes must be ≥ 1".into()));
        }
        Ok(GridSpec { p, q, r, oversample: 1, length_x: (2 * p + 1) as f64, length_y: (2 * q + 1) as f64 })
    }

    /// Square grid from sample counts; even counts round up to the next odd
    /// count so the center sample exists (N_s = 128 gives 129 samples).
    pub fn from_counts(n_s: usize, n_o: usize) -> Result<Self> {
        GridSpec::new(n_s / 2, n_s / 2, n_o / 2)
    }

    pub fn with_oversample(mut self, s: usize) -> Result<Self> {
        if s == 0 {
            return Err(Se2Error::InvalidParams("oversampling factor must be ≥ 1".into()));
        }
        self.oversample = s;
        Ok(self)
    }

    pub fn nx(&self) -> usize {
        2 * self.p + 1
    }

    pub fn ny(&self) -> usize {
        2 * self.q + 1
    }

    pub fn ntheta(&self) -> usize {
        2 * self.r + 1
    }

    pub fn slice_len(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn len(&self) -> usize {
        self.ntheta() * self.slice_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.length_x / self.nx() as f64
    }

    pub fn dy(&self) -> f64 {
        self.length_y / self.ny() as f64
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.ntheta() as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx() * self.dy() * self.dtheta()
    }

    /// θ_r = 2πr/(2R+1) for r ∈ [−R, R].
    pub fn theta(&self, r: i64) -> f64 {
        self.dtheta() * r as f64
    }

    pub fn x(&self, p: i64) -> f64 {
        self.dx() * p as f64
    }

    pub fn y(&self, q: i64) -> f64 {
        self.dy() * q as f64
    }

    /// ω¹_{p′} = 2πp′/((2P+1)Δx).
    pub fn omega_x(&self, p: i64) -> f64 {
        2.0 * PI * p as f64 / self.length_x
    }

    pub fn omega_y(&self, q: i64) -> f64 {
        2.0 * PI * q as f64 / self.length_y
    }

    /// Flat index of the centered triple (r, p, q); θ slowest, y fastest.
    #[inline]
    pub fn index(&self, r: i64, p: i64, q: i64) -> usize {
        let ir = (r + self.r as i64) as usize;
        let ip = (p + self.p as i64) as usize;
        let iq = (q + self.q as i64) as usize;
        (ir * self.nx() + ip) * self.ny() + iq
    }

    /// Inverse of [`GridSpec::index`].
    pub fn coords(&self, idx: usize) -> (i64, i64, i64) {
        let iq = idx % self.ny();
        let ip = (idx / self.ny()) % self.nx();
        let ir = idx / self.slice_len();
        (ir as i64 - self.r as i64, ip as i64 - self.p as i64, iq as i64 - self.q as i64)
    }

    pub fn same_shape(&self, other: &GridSpec) -> bool {
        self.p == other.p && self.q == other.q && self.r == other.r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_angles() {
        let g = GridSpec::from_counts(128, 48).unwrap();
        assert_eq!((g.nx(), g.ny(), g.ntheta()), (129, 129, 49));
        assert!((g.theta(g.r as i64) - 2.0 * PI * 24.0 / 49.0).abs() < 1e-15);
        assert!(g.theta(g.r as i64) <= PI);
        assert!((g.omega_x(g.p as i64) - PI * 128.0 / 129.0).abs() < 1e-14);
        assert_eq!(g.dx(), 1.0);
    }

    #[test]
    fn index_round_trip() {
        let g = GridSpec::new(3, 2, 4).unwrap();
        for idx in 0..g.len() {
            let (r, p, q) = g.coords(idx);
            assert_eq!(g.index(r, p, q), idx);
        }
        assert_eq!(g.index(0, 0, 0), g.len() / 2);
    }
}
