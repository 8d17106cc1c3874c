//! Lattice bookkeeping shared by the frequency-domain kernel builders.

use num_complex::Complex64;

use crate::cdft;
use crate::error::Result;
use crate::field::{Domain, Se2Field};
use crate::grid::GridSpec;

/// Frequency indices (p′, q′) of the base lattice.
pub fn base_points(grid: &GridSpec) -> Vec<(i64, i64)> {
    let (pp, qq) = (grid.p as i64, grid.q as i64);
    (-pp..=pp).flat_map(|a| (-qq..=qq).map(move |b| (a, b))).collect()
}

/// Frequency indices of the ς-oversampled lattice, p′ ∈ [−ςP, ςP].
pub fn oversampled_points(grid: &GridSpec) -> Vec<(i64, i64)> {
    let s = grid.oversample as i64;
    let (pp, qq) = (s * grid.p as i64, s * grid.q as i64);
    (-pp..=pp).flat_map(|a| (-qq..=qq).map(move |b| (a, b))).collect()
}

/// Place θ-columns (ordered r = −R..R) at base-lattice points.
pub fn columns_to_field(grid: &GridSpec, points: &[(i64, i64)], cols: &[Vec<Complex64>]) -> Se2Field {
    let mut out = Se2Field::zeros(*grid, Domain::Frequency);
    let r = grid.r as i64;
    for (&(a, b), col) in points.iter().zip(cols) {
        for (k, v) in (-r..=r).zip(col) {
            out.set(k, a, b, *v);
        }
    }
    out
}

/// Alias oversampled columns onto the base lattice (exact for the inverse
/// CDFT evaluated at base-lattice positions), invert, scale by 1/(ΔxΔy)
/// and DC-normalize.
pub fn fold_to_spatial(grid: &GridSpec, points: &[(i64, i64)], cols: &[Vec<Complex64>]) -> Result<Se2Field> {
    let (pp, qq) = (grid.p as i64, grid.q as i64);
    let fold = |v: i64, h: i64| (v + h).rem_euclid(2 * h + 1) - h;
    let mut freq = Se2Field::zeros(*grid, Domain::Frequency);
    let r = grid.r as i64;
    for (&(a, b), col) in points.iter().zip(cols) {
        let (fa, fb) = (fold(a, pp), fold(b, qq));
        for (k, v) in (-r..=r).zip(col) {
            let cur = freq.get(k, fa, fb);
            freq.set(k, fa, fb, cur + v);
        }
    }
    let mut spatial = cdft::cdft_inverse(&freq)?;
    spatial.scale(1.0 / (grid.dx() * grid.dy()));
    spatial.dc_normalize()
}

/// Map a point to the closed half-plane used with Hermitian symmetry;
/// the flag says whether the value must be conjugated.
pub fn half_plane(pq: (i64, i64)) -> ((i64, i64), bool) {
    if pq.0 > 0 || (pq.0 == 0 && pq.1 >= 0) {
        (pq, false)
    } else {
        ((-pq.0, -pq.1), true)
    }
}
