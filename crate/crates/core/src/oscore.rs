//! Invertible orientation scores.
//!
//! Each orientation filter is ψ̂_m(ω) = √N_o · a(|ω|) · w_m(ω), with angular
//! windows whose squares sum to one (fading into the isotropic 1/√N_o near
//! DC) and a radial window a that equals one inside 0.9ϱπ and falls
//! smoothly to zero at ϱπ. Then
//! M_ψ(ω) = Σ_m |ψ̂_m(ω)|² Δθ/(2π) = a(|ω|)², which is exactly one on the
//! inner disk, so reconstruction is the plain adjoint there.
//!
//! Images map onto slices with x along columns and y up the rows. Even
//! dimensions are padded with a trailing zero row or column.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cdft::Fft2;
use crate::convolve::{se2_convolve, Boundary};
use crate::error::{Result, Se2Error};
use crate::field::{Domain, Se2Field};
use crate::grid::GridSpec;
use crate::io::Image;

type C = Complex64;

/// Default disk radius as a fraction of the Nyquist frequency.
pub const DEFAULT_DISK: f64 = 0.9;

/// Where the radial taper starts, relative to the disk radius.
const TAPER_START: f64 = 0.9;

/// Below this frequency (rad/pixel) the filters blend into an isotropic
/// response, which keeps ψ̂ smooth at DC and the wavelets short.
const ISOTROPIC_BELOW: f64 = 0.3 * PI;

/// Filter bank for a fixed image size.
#[derive(Debug, Clone)]
pub struct WaveletSpec {
    pub n_o: usize,
    /// Disk radius as a fraction of Nyquist.
    pub disk: f64,
    /// Lattice of the score: padded image and N_o orientations.
    pub grid: GridSpec,
    /// Original image dimensions.
    pub rows: usize,
    pub cols: usize,
    /// Frequency response per orientation, slice layout of `grid`.
    pub filters: Vec<Vec<C>>,
    /// Σ_m |ψ̂_m|² Δθ/(2π).
    pub m_psi: Vec<f64>,
}

/// C^∞ step from 0 to 1 on [0, 1] with β(t) + β(1 − t) = 1.
fn smooth_step(t: f64) -> f64 {
    let f = |x: f64| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() };
    let (a, b) = (f(t), f(1.0 - t));
    a / (a + b)
}

/// Angular window centered at 0 with support (−Δθ, Δθ); squares of shifted
/// copies on a Δθ lattice sum to one.
fn angular_window(phi: f64, dtheta: f64) -> f64 {
    let d = phi.sin().atan2(phi.cos()).abs() / dtheta;
    if d >= 1.0 {
        0.0
    } else {
        (0.5 * PI * smooth_step(d)).cos()
    }
}

fn radial_window(r: f64, edge: f64) -> f64 {
    let inner = TAPER_START * edge;
    if r <= inner {
        1.0
    } else if r >= edge {
        0.0
    } else {
        (0.5 * PI * smooth_step((r - inner) / (edge - inner))).cos()
    }
}

/// Build the filter bank. `n_o` is the orientation count (rounded up to
/// odd); `disk` is the fraction of Nyquist kept.
pub fn build_wavelets(n_o: usize, disk: f64, rows: usize, cols: usize) -> Result<WaveletSpec> {
    if n_o < 4 {
        return Err(Se2Error::InvalidParams(format!("need at least 4 orientations, got {n_o}")));
    }
    if !(disk > 0.0 && disk <= 1.0) {
        return Err(Se2Error::InvalidParams(format!("disk radius {disk} must lie in (0, 1]")));
    }
    if rows == 0 || cols == 0 {
        return Err(Se2Error::InvalidParams("empty image".into()));
    }
    let grid = GridSpec::new(cols / 2, rows / 2, n_o / 2)?;
    let nth = grid.ntheta();
    let dth = grid.dtheta();
    let (pp, qq) = (grid.p as i64, grid.q as i64);
    let (nx, ny) = (grid.nx() as f64, grid.ny() as f64);
    let edge = disk * PI;
    let mut filters = vec![vec![C::new(0.0, 0.0); grid.slice_len()]; nth];
    let mut m_psi = vec![0.0; grid.slice_len()];
    for a in -pp..=pp {
        for b in -qq..=qq {
            // angular frequency per pixel
            let (wx, wy) = (2.0 * PI * a as f64 / nx, 2.0 * PI * b as f64 / ny);
            let rad = radial_window(wx.hypot(wy), edge);
            let blend = 0.5 * PI * smooth_step(wx.hypot(wy) / ISOTROPIC_BELOW);
            let (iso, aniso) = (blend.cos(), blend.sin());
            let idx = ((a + pp) * (2 * qq + 1) + b + qq) as usize;
            let phi = wy.atan2(wx);
            let mut m = 0.0;
            for (k, f) in filters.iter_mut().enumerate() {
                let theta = grid.theta(k as i64 - grid.r as i64);
                let ang = if a == 0 && b == 0 {
                    1.0 / (nth as f64).sqrt()
                } else {
                    // symmetric in ±ω so the wavelet is real; the response
                    // sits across the orientation, as for a line detector
                    let w1 = angular_window(phi - theta - 0.5 * PI, dth);
                    let w2 = angular_window(phi - theta + 0.5 * PI, dth);
                    (aniso * aniso * 0.5 * (w1 * w1 + w2 * w2) + iso * iso / nth as f64).sqrt()
                };
                let v = (nth as f64).sqrt() * rad * ang;
                f[idx] = C::new(v, 0.0);
                m += v * v * dth / (2.0 * PI);
            }
            m_psi[idx] = m;
        }
    }
    Ok(WaveletSpec { n_o: nth, disk, grid, rows, cols, filters, m_psi })
}

impl WaveletSpec {
    fn check(&self, img: &Image) -> Result<()> {
        if img.rows != self.rows || img.cols != self.cols {
            return Err(Se2Error::GridMismatch(format!(
                "image is {}×{}, wavelets built for {}×{}",
                img.rows, img.cols, self.rows, self.cols
            )));
        }
        Ok(())
    }

    fn to_slice(&self, img: &Image) -> Vec<C> {
        let g = &self.grid;
        let mut s = vec![C::new(0.0, 0.0); g.slice_len()];
        for row in 0..img.rows {
            for col in 0..img.cols {
                let j = g.ny() - 1 - row;
                s[col * g.ny() + j] = C::new(img.get(row, col), 0.0);
            }
        }
        s
    }

    fn to_image(&self, s: &[C]) -> Image {
        let g = &self.grid;
        let mut img = Image::zeros(self.rows, self.cols);
        for row in 0..self.rows {
            for col in 0..self.cols {
                img.set(row, col, s[col * g.ny() + g.ny() - 1 - row].re);
            }
        }
        img
    }

    /// Image restricted to the inner disk where M_ψ = 1.
    pub fn disk_limit(&self, img: &Image) -> Result<Image> {
        self.check(img)?;
        let plan = Fft2::new(self.grid.nx(), self.grid.ny());
        let mut s = self.to_slice(img);
        plan.forward(&mut s);
        for (v, m) in s.iter_mut().zip(&self.m_psi) {
            if (m - 1.0).abs() > 1e-12 {
                *v = C::new(0.0, 0.0);
            }
        }
        plan.inverse(&mut s);
        Ok(self.to_image(&s))
    }
}

/// Orientation score U(x, θ_m) = (ψ_m ⋆ f)(x), computed per orientation in
/// the frequency domain.
pub fn transform(img: &Image, spec: &WaveletSpec) -> Result<Se2Field> {
    spec.check(img)?;
    let g = spec.grid;
    let plan = Fft2::new(g.nx(), g.ny());
    let mut f_hat = spec.to_slice(img);
    plan.forward(&mut f_hat);
    let slices: Vec<Vec<C>> = spec
        .filters
        .par_iter()
        .map(|psi| {
            let mut s: Vec<C> = f_hat.iter().zip(psi).map(|(f, p)| f * p.conj()).collect();
            plan.inverse(&mut s);
            s
        })
        .collect();
    Se2Field::from_data(g, Domain::Spatial, slices.into_iter().flatten().collect())
}

/// Σ_m ψ̂_m Û_m Δθ/(2π) in the frequency domain.
fn adjoint_spectrum(u: &Se2Field, spec: &WaveletSpec) -> Result<Vec<C>> {
    u.require(Domain::Spatial)?;
    let g = spec.grid;
    if !u.grid.same_shape(&g) {
        return Err(Se2Error::GridMismatch("score does not match the wavelet lattice".into()));
    }
    let plan = Fft2::new(g.nx(), g.ny());
    let w = g.dtheta() / (2.0 * PI);
    let parts: Vec<Vec<C>> = (0..g.ntheta())
        .into_par_iter()
        .map(|k| {
            let mut s = u.slice(k as i64 - g.r as i64).to_vec();
            plan.forward(&mut s);
            s.iter().zip(&spec.filters[k]).map(|(a, b)| a * b * w).collect()
        })
        .collect();
    let mut acc = vec![C::new(0.0, 0.0); g.slice_len()];
    for p in &parts {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    Ok(acc)
}

/// Inverse of [`transform`]: f̂ = M_ψ⁻¹ Σ_m ψ̂_m Û_m Δθ/(2π).
///
/// Frequencies with M_ψ < 1e−8 are dropped; an error is raised if they
/// carry a noticeable share of the energy. Exact for scores of images,
/// but the division amplifies the taper band of a processed score; see
/// [`reconstruct_adjoint`].
pub fn reconstruct(u: &Se2Field, spec: &WaveletSpec) -> Result<Image> {
    let mut acc = adjoint_spectrum(u, spec)?;
    let total: f64 = acc.iter().map(|v| v.norm_sqr()).sum();
    let mut lost = 0.0;
    for (a, m) in acc.iter_mut().zip(&spec.m_psi) {
        if *m < 1e-8 {
            lost += a.norm_sqr();
            *a = C::new(0.0, 0.0);
        } else {
            *a /= *m;
        }
    }
    if total > 0.0 && lost > 1e-8 * total {
        return Err(Se2Error::Numerical(format!("score has {:.2e} of its energy where M_ψ < 1e-8", lost / total)));
    }
    Fft2::new(spec.grid.nx(), spec.grid.ny()).inverse(&mut acc);
    Ok(spec.to_image(&acc))
}

/// Plain adjoint Σ_m ψ_m ∗ U_m Δθ/(2π). Agrees with [`reconstruct`] on the
/// inner disk where M_ψ = 1 and stays bounded on the taper, so it is the
/// one used after processing.
pub fn reconstruct_adjoint(u: &Se2Field, spec: &WaveletSpec) -> Result<Image> {
    let mut acc = adjoint_spectrum(u, spec)?;
    Fft2::new(spec.grid.nx(), spec.grid.ny()).inverse(&mut acc);
    Ok(spec.to_image(&acc))
}

/// Score norm (Σ |U|² Δθ/(2π))^{1/2}; equals the ℓ2 norm of a disk-limited
/// image.
pub fn score_norm(u: &Se2Field) -> f64 {
    let w = u.grid.dtheta() / (2.0 * PI);
    (u.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * w).sqrt()
}

/// Linear enhancement: transform, SE(2) convolution with `kernel`,
/// reconstruction. The kernel must share the score lattice.
pub fn enhance(img: &Image, spec: &WaveletSpec, kernel: &Se2Field) -> Result<Image> {
    if !kernel.grid.same_shape(&spec.grid) {
        return Err(Se2Error::GridMismatch(format!(
            "kernel lattice {}×{}×{} differs from score lattice {}×{}×{}",
            kernel.grid.nx(),
            kernel.grid.ny(),
            kernel.grid.ntheta(),
            spec.grid.nx(),
            spec.grid.ny(),
            spec.grid.ntheta()
        )));
    }
    let u = transform(img, spec)?;
    let mut k = kernel.clone();
    k.grid = u.grid;
    let v = se2_convolve(&k, &u, Boundary::ZeroPad)?;
    reconstruct_adjoint(&v, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_partition_is_exact_on_inner_disk() {
        let spec = build_wavelets(12, DEFAULT_DISK, 33, 31).unwrap();
        let g = spec.grid;
        let (pp, qq) = (g.p as i64, g.q as i64);
        let mut worst: f64 = 0.0;
        for a in -pp..=pp {
            for b in -qq..=qq {
                let r = (2.0 * PI * a as f64 / g.nx() as f64).hypot(2.0 * PI * b as f64 / g.ny() as f64);
                if r < 0.9 * spec.disk * PI {
                    worst = worst.max((spec.m_psi[((a + pp) * (2 * qq + 1) + b + qq) as usize] - 1.0).abs());
                }
            }
        }
        assert!(worst < 1e-10, "{worst}");
        assert!((spec.m_psi[(pp * (2 * qq + 1) + qq) as usize] - 1.0).abs() < 1e-14);
        assert!(build_wavelets(3, 0.9, 8, 8).is_err());
    }

    #[test]
    fn zero_score_gives_zero_image() {
        let spec = build_wavelets(8, 0.9, 10, 10).unwrap();
        let u = Se2Field::zeros(spec.grid, Domain::Spatial);
        assert!(reconstruct(&u, &spec).unwrap().data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scores_are_real() {
        let spec = build_wavelets(8, 0.9, 17, 17).unwrap();
        let img = Image::new(17, 17, (0..289).map(|i| ((i * 37) % 11) as f64).collect()).unwrap();
        assert!(transform(&img, &spec).unwrap().max_abs_imag() < 1e-12);
    }
}
