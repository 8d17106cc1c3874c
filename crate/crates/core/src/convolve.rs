//! SE(2) group convolution of sampled fields.
//!
//! (K ∗ U)(x, θ) = Σ_{x′,θ′} K(R_{θ′}⁻¹(x − x′), θ − θ′) U(x′, θ′) ΔxΔyΔθ
//!
//! Orientation offsets are lattice exact (θ′ is a grid angle, so θ − θ′ is
//! an index shift); the spatial rotation R_{θ′}⁻¹ needs off-grid kernel
//! samples, taken by cubic convolution interpolation.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cdft::Fft2;
use crate::error::Result;
use crate::field::{Domain, Se2Field};
use crate::grid::GridSpec;

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Spatial boundary treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Samples outside the frame are zero.
    #[default]
    ZeroPad,
    /// The frame wraps around.
    Periodic,
}

/// Keys cubic convolution weight (a = −1/2).
fn cubic_weight(t: f64) -> f64 {
    let t = t.abs();
    if t < 1.0 {
        (1.5 * t - 2.5) * t * t + 1.0
    } else if t < 2.0 {
        ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    } else {
        0.0
    }
}

/// Cubic interpolation of one (2P+1)×(2Q+1) slice at fractional centered
/// indices (u, v). Outside samples are zero, or wrapped when `periodic`.
pub fn interpolate(slice: &[C], grid: &GridSpec, u: f64, v: f64, periodic: bool) -> C {
    let (pp, qq) = (grid.p as i64, grid.q as i64);
    let (nx, ny) = (grid.nx() as i64, grid.ny() as i64);
    let (u0, v0) = (u.floor() as i64, v.floor() as i64);
    let mut acc = ZERO;
    for i in u0 - 1..=u0 + 2 {
        let wx = cubic_weight(u - i as f64);
        if wx == 0.0 {
            continue;
        }
        let ii = if periodic { (i + pp).rem_euclid(nx) - pp } else { i };
        if ii < -pp || ii > pp {
            continue;
        }
        for j in v0 - 1..=v0 + 2 {
            let wy = cubic_weight(v - j as f64);
            if wy == 0.0 {
                continue;
            }
            let jj = if periodic { (j + qq).rem_euclid(ny) - qq } else { j };
            if jj < -qq || jj > qq {
                continue;
            }
            acc += slice[((ii + pp) * ny + jj + qq) as usize] * (wx * wy);
        }
    }
    acc
}

/// Sample one kernel slice on offsets o ∈ [−hx, hx]×[−hy, hy] (centered,
/// y contiguous) at positions R_φ⁻¹ o.
fn rotated_slice(slice: &[C], grid: &GridSpec, phi: f64, hx: i64, hy: i64, periodic: bool) -> Vec<C> {
    let (c, s) = (phi.cos(), phi.sin());
    let (dx, dy) = (grid.dx(), grid.dy());
    let mut out = Vec::with_capacity(((2 * hx + 1) * (2 * hy + 1)) as usize);
    for i in -hx..=hx {
        for j in -hy..=hy {
            let (x, y) = (i as f64 * dx, j as f64 * dy);
            // R_φ⁻¹ (x, y)
            let (xr, yr) = (c * x + s * y, -s * x + c * y);
            out.push(interpolate(slice, grid, xr / dx, yr / dy, periodic));
        }
    }
    out
}

fn check(k: &Se2Field, u: &Se2Field) -> Result<()> {
    k.require(Domain::Spatial)?;
    u.require(Domain::Spatial)?;
    k.require_same_grid(u)
}

/// Group convolution by per-orientation FFT products over rotated kernels.
pub fn se2_convolve(k: &Se2Field, u: &Se2Field, boundary: Boundary) -> Result<Se2Field> {
    check(k, u)?;
    let g = k.grid;
    let (pp, qq, rr) = (g.p as i64, g.q as i64, g.r as i64);
    let periodic = boundary == Boundary::Periodic;
    // work lattice: offsets up to 2P for linear convolution, P when wrapping
    let (hx, hy) = if periodic { (pp, qq) } else { (2 * pp, 2 * qq) };
    let (lx, ly) = ((2 * hx + 1) as usize, (2 * hy + 1) as usize);
    let plan = Fft2::new(lx, ly);
    let embed = |slice: &[C]| -> Vec<C> {
        let mut out = vec![ZERO; lx * ly];
        for i in -pp..=pp {
            for j in -qq..=qq {
                out[((i + hx) as usize) * ly + (j + hy) as usize] = slice[((i + pp) * (2 * qq + 1) + j + qq) as usize];
            }
        }
        out
    };
    let scale = g.cell_volume();
    // θ′ slices of U that carry data
    let active: Vec<i64> = (-rr..=rr).filter(|&r| u.slice(r).iter().any(|v| *v != ZERO)).collect();
    let u_hat: Vec<(i64, Vec<C>)> = active
        .par_iter()
        .map(|&r| {
            let mut s = embed(u.slice(r));
            plan.forward(&mut s);
            (r, s)
        })
        .collect();
    let nth = g.ntheta() as i64;
    let wrap = |r: i64| (r + rr).rem_euclid(nth) - rr;
    let out_slices: Vec<Vec<C>> = (-rr..=rr)
        .into_par_iter()
        .map(|r_out| {
            let mut acc = vec![ZERO; lx * ly];
            for (r_in, uh) in &u_hat {
                let phi = g.theta(*r_in);
                let mut kr = rotated_slice(k.slice(wrap(r_out - r_in)), &g, phi, hx, hy, periodic);
                plan.forward(&mut kr);
                for ((a, b), c) in acc.iter_mut().zip(&kr).zip(uh) {
                    *a += b * c;
                }
            }
            plan.inverse(&mut acc);
            let mut out = Vec::with_capacity(g.slice_len());
            for i in -pp..=pp {
                for j in -qq..=qq {
                    out.push(acc[((i + hx) as usize) * ly + (j + hy) as usize] * scale);
                }
            }
            out
        })
        .collect();
    let data = out_slices.into_iter().flatten().collect();
    Se2Field::from_data(g, Domain::Spatial, data)
}

/// Direct summation of the same discrete convolution. O(N⁶); for oracle
/// checks on small grids.
pub fn se2_convolve_direct(k: &Se2Field, u: &Se2Field, boundary: Boundary) -> Result<Se2Field> {
    check(k, u)?;
    let g = k.grid;
    let (pp, qq, rr) = (g.p as i64, g.q as i64, g.r as i64);
    let periodic = boundary == Boundary::Periodic;
    let nth = g.ntheta() as i64;
    let (nx, ny) = (g.nx() as i64, g.ny() as i64);
    let wrap = |v: i64, h: i64, n: i64| (v + h).rem_euclid(n) - h;
    let scale = g.cell_volume();
    let mut out = Se2Field::zeros(g, Domain::Spatial);
    for r_out in -rr..=rr {
        for r_in in -rr..=rr {
            let (c, s) = (g.theta(r_in).cos(), g.theta(r_in).sin());
            let ks = k.slice(wrap(r_out - r_in, rr, nth));
            for xo in -pp..=pp {
                for yo in -qq..=qq {
                    let mut acc = ZERO;
                    for xi in -pp..=pp {
                        for yi in -qq..=qq {
                            let uv = u.get(r_in, xi, yi);
                            if uv == ZERO {
                                continue;
                            }
                            let (mut ox, mut oy) = (xo - xi, yo - yi);
                            if periodic {
                                ox = wrap(ox, pp, nx);
                                oy = wrap(oy, qq, ny);
                            }
                            let (x, y) = (ox as f64 * g.dx(), oy as f64 * g.dy());
                            let (xr, yr) = (c * x + s * y, -s * x + c * y);
                            acc += interpolate(ks, &g, xr / g.dx(), yr / g.dy(), periodic) * uv;
                        }
                    }
                    let cur = out.get(r_out, xo, yo);
                    out.set(r_out, xo, yo, cur + acc * scale);
                }
            }
        }
    }
    Ok(out)
}
