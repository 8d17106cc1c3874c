//! Exact kernels in the spatial Fourier domain.
//!
//! For a frequency ω = ρ(cos φ, sin φ) the θ-profile R̂(ω, ·) solves a
//! periodic Sturm-Liouville problem on the circle with a point source at
//! θ = 0. Three equivalent representations are provided:
//!
//! * `Series`: expansion in periodic Mathieu eigenfunctions;
//! * `Unwrapped`: the Green's function on the real line built from two
//!   Floquet solutions, periodized by summing its 2π-shifts;
//! * `ClosedForm`: the geometric sum of the periodization done analytically.
//!
//! Fourier convention: R̂(ω, θ) = ∫ R(x, θ) e^{−iω·x} dx, so a normalized
//! kernel has ∫ R̂(0, θ) dθ = 1.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Result, Se2Error};
use crate::field::Se2Field;
use crate::grid::GridSpec;
use crate::group::wrap_angle;
use crate::mathieu::{is_resonant, HillFamily, Kind, MathieuParams, MathieuSolution, PeriodicClass};
use crate::params::{Case, DiffusionParams};
use crate::sampling;
use crate::special::exp_integral_e1;

type C = Complex64;

const I: C = C::new(0.0, 1.0);
const ZERO: C = C::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approach {
    Series,
    Unwrapped,
    ClosedForm,
}

impl FromStr for Approach {
    type Err = Se2Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact1" | "series" => Ok(Approach::Series),
            "exact2" | "unwrapped" => Ok(Approach::Unwrapped),
            "exact3" | "closed" | "closed-form" => Ok(Approach::ClosedForm),
            _ => Err(Se2Error::InvalidParams(format!("unknown exact approach '{s}'"))),
        }
    }
}

/// Resolvent α(αI − Q)⁻¹δ or fundamental solution −Q⁻¹δ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMode {
    Resolvent,
    Fundamental,
}

/// The Mathieu parameters belonging to one frequency.
#[derive(Debug, Clone, Copy)]
pub struct MathieuSetting {
    pub a: C,
    pub q: C,
    pub mu: f64,
}

/// Mathieu characteristic a and parameter q for frequency magnitude ρ and
/// decay rate `decay` (α, or 0 for the fundamental solution).
pub fn mathieu_setting(p: &DiffusionParams, case: Case, rho: f64, decay: f64) -> MathieuSetting {
    match case {
        Case::Enhancement => MathieuSetting {
            a: C::new((-decay - rho * rho * (p.d11 + p.d22) / 2.0) / p.d33, 0.0),
            q: C::new(rho * rho * (p.d11 - p.d22) / (4.0 * p.d33), 0.0),
            mu: 1.0,
        },
        Case::Completion => {
            MathieuSetting { a: C::new(-4.0 * decay / p.d33, 0.0), q: C::new(0.0, 2.0 * rho * p.a1 / p.d33), mu: 2.0 }
        }
    }
}

/// θ-potential of the Fourier-domain generator (without the decay):
/// the profile solves D33 R″ − (decay + V(θ)) R = −source·δ.
fn potential(p: &DiffusionParams, case: Case, rho: f64, phi: f64, theta: f64) -> C {
    let c = (phi - theta).cos();
    match case {
        Case::Enhancement => {
            let s2 = 1.0 - c * c;
            C::new(rho * rho * (p.d11 * c * c + p.d22 * s2), 0.0)
        }
        Case::Completion => C::new(0.0, rho * p.a1 * c),
    }
}

/// Resolvent of D33∂² − c on the circle with source weight `source`:
/// source/(2D33κ)·cosh(κ(π−|θ|))/sinh(κπ), κ = √(c/D33).
pub fn circle_resolvent(c: C, d33: f64, source: f64, theta: f64) -> C {
    let kappa = (c / d33).sqrt();
    let t = wrap_angle(theta).abs();
    let num = (-kappa * t).exp() + (-kappa * (2.0 * PI - t)).exp();
    let den = 1.0 - (-2.0 * PI * kappa).exp();
    source / (2.0 * d33 * kappa) * num / den
}

/// Per-frequency data for the Floquet representations.
#[derive(Debug, Clone)]
pub struct CaseSettings {
    pub case: Case,
    pub rho: f64,
    pub phi: f64,
    pub mode: KernelMode,
    pub setting: MathieuSetting,
    /// decay actually used (α, possibly nudged off a resonance)
    pub decay: f64,
    pub source: f64,
    pub d33: f64,
    /// None at ρ = 0 where the circle closed form is used.
    pub sol: Option<MathieuSolution>,
    pub nu: C,
    pub wronskian: C,
    p_phi: C,
    p_mphi: C,
    x: C,
}

impl CaseSettings {
    pub fn new(p: &DiffusionParams, case: Case, mode: KernelMode, omega_x: f64, omega_y: f64) -> Result<Self> {
        let rho = omega_x.hypot(omega_y);
        let phi = if rho == 0.0 { 0.0 } else { omega_y.atan2(omega_x) };
        let (decay, source) = match mode {
            KernelMode::Resolvent => (p.alpha, p.alpha),
            KernelMode::Fundamental => (0.0, 1.0),
        };
        if rho == 0.0 {
            if decay == 0.0 {
                return Err(Se2Error::Numerical("fundamental solution has a pole at ω = 0".into()));
            }
            let setting = mathieu_setting(p, case, 0.0, decay);
            return Ok(CaseSettings {
                case,
                rho,
                phi,
                mode,
                setting,
                decay,
                source,
                d33: p.d33,
                sol: None,
                nu: ZERO,
                wronskian: ZERO,
                p_phi: ZERO,
                p_mphi: ZERO,
                x: ZERO,
            });
        }
        let wrap = |e: Se2Error| Se2Error::Numerical(format!("at ρ = {rho}, φ = {phi}: {e}"));
        let mut decay_used = decay;
        for attempt in 0..2 {
            let setting = mathieu_setting(p, case, rho, decay_used);
            let sol = MathieuSolution::new(MathieuParams::new(setting.a, setting.q)).map_err(wrap)?;
            let x = (2.0 * PI * I * sol.nu / setting.mu).exp();
            if (is_resonant(sol.nu) || (1.0 - x).norm() < 1e-12) && attempt == 0 {
                decay_used = if decay_used == 0.0 { 1e-9 } else { decay_used * (1.0 + 1e-9) };
                continue;
            }
            let w = sol.wronskian(setting.mu);
            if w.norm() < 1e-14 {
                return Err(wrap(Se2Error::Numerical(format!("degenerate Wronskian {w}"))));
            }
            let p_phi = sol.periodic(phi / setting.mu);
            let p_mphi = sol.periodic(-phi / setting.mu);
            return Ok(CaseSettings {
                case,
                rho,
                phi,
                mode,
                setting,
                decay: decay_used,
                source,
                d33: p.d33,
                nu: sol.nu,
                wronskian: w,
                sol: Some(sol),
                p_phi,
                p_mphi,
                x,
            });
        }
        Err(wrap(Se2Error::Resonant { nu: ZERO }))
    }

    fn prefactor(&self) -> C {
        self.source / (self.d33 * self.wronskian)
    }

    fn e(&self, s: f64) -> C {
        (I * self.nu * s / self.setting.mu).exp()
    }

    /// (A, B) = (P(φ/μ)P((θ−φ)/μ), P(−φ/μ)P((φ−θ)/μ)).
    fn products(&self, theta: f64) -> (C, C) {
        let sol = self.sol.as_ref().expect("ρ > 0");
        let mu = self.setting.mu;
        (self.p_phi * sol.periodic((theta - self.phi) / mu), self.p_mphi * sol.periodic((self.phi - theta) / mu))
    }

    fn circle(&self, theta: f64) -> C {
        circle_resolvent(C::new(self.decay, 0.0), self.d33, self.source, theta)
    }

    /// Green's function on the unwrapped θ-line, θ ∈ ℝ.
    pub fn unwrapped_line(&self, theta: f64) -> C {
        if self.sol.is_none() {
            let kappa = (self.decay / self.d33).sqrt();
            return C::new(self.source / (2.0 * self.d33 * kappa) * (-kappa * theta.abs()).exp(), 0.0);
        }
        let (a, b) = self.products(theta);
        let v = if theta >= 0.0 { self.e(theta) * a } else { self.e(-theta) * b };
        self.prefactor() * v
    }

    /// Periodized sum over 2π-shifts, truncated adaptively once the
    /// geometric factor |e^{2πiν/μ}|ⁿ drops below 1e−16.
    pub fn unwrapped(&self, theta: f64) -> Result<C> {
        if self.sol.is_none() {
            return Ok(self.circle(theta));
        }
        let theta = wrap_angle(theta);
        let (a, b) = self.products(theta);
        let xn = self.x.norm();
        let mut acc = if theta >= 0.0 { self.e(theta) * a } else { self.e(-theta) * b };
        let mut n = 1usize;
        loop {
            let shift = 2.0 * PI * n as f64;
            acc += self.e(theta + shift) * a + self.e(shift - theta) * b;
            if xn.powi(n as i32) < 1e-16 {
                break;
            }
            n += 1;
            if n > 200_000 {
                return Err(Se2Error::NoConvergence { iters: n, residual: xn });
            }
        }
        Ok(self.prefactor() * acc)
    }

    /// Magnitude of the first neglected 2π-shift if the periodization were
    /// cut at |n| ≤ 2.
    pub fn tail_factor(&self) -> f64 {
        self.x.norm().powi(3)
    }

    /// Geometric series summed analytically.
    pub fn closed_form(&self, theta: f64) -> C {
        if self.sol.is_none() {
            return self.circle(theta);
        }
        let theta = wrap_angle(theta);
        let (a, b) = self.products(theta);
        let branch = if theta >= 0.0 { self.e(theta) * a } else { self.e(-theta) * b };
        let wrap = (self.e(theta + 2.0 * PI) * a + self.e(2.0 * PI - theta) * b) / (1.0 - self.x);
        self.prefactor() * (branch + wrap)
    }

    /// The closed form written with ce/se and cot(πν/μ). Algebraically equal
    /// to `closed_form` but loses accuracy badly once Im ν is large.
    pub fn closed_form_cot(&self, theta: f64) -> C {
        let Some(sol) = &self.sol else {
            return self.circle(theta);
        };
        let theta = wrap_angle(theta);
        let mu = self.setting.mu;
        let za = C::new(self.phi / mu, 0.0);
        let zb = C::new((self.phi - theta) / mu, 0.0);
        let (ca, sa) = (sol.eval(za, Kind::Ce), sol.eval(za, Kind::Se));
        let (cb, sb) = (sol.eval(zb, Kind::Ce), sol.eval(zb, Kind::Se));
        let beta = PI * self.nu / mu;
        let cot = beta.cos() / beta.sin();
        let sgn = if theta >= 0.0 { 1.0 } else { -1.0 };
        I * self.prefactor() * (cot * (ca * cb + sa * sb) + sgn * (sa * cb - ca * sb))
    }

    /// F(θ)G′(θ) − G(θ)F′(θ) evaluated directly at θ, with
    /// F(θ) = me_{−ν}((φ−θ)/μ) and G(θ) = me_ν((φ−θ)/μ).
    pub fn wronskian_at(&self, theta: f64) -> Option<C> {
        let sol = self.sol.as_ref()?;
        let mu = self.setting.mu;
        let (f, fd, _) = sol.me_with_derivs(C::new((theta - self.phi) / mu, 0.0));
        let (g, gd, _) = sol.me_with_derivs(C::new((self.phi - theta) / mu, 0.0));
        Some(f * (-gd / mu) - g * (fd / mu))
    }
}

/// Approach-2 value at one (ω, θ).
pub fn kernel_hat_unwrapped(omega: (f64, f64), theta: f64, p: &DiffusionParams) -> Result<C> {
    let case = p.validate(true)?;
    CaseSettings::new(p, case, mode_of(p), omega.0, omega.1)?.unwrapped(theta)
}

/// Approach-3 value at one (ω, θ).
pub fn kernel_hat_closed_form(omega: (f64, f64), theta: f64, p: &DiffusionParams) -> Result<C> {
    let case = p.validate(true)?;
    Ok(CaseSettings::new(p, case, mode_of(p), omega.0, omega.1)?.closed_form(theta))
}

fn mode_of(p: &DiffusionParams) -> KernelMode {
    if p.alpha > 0.0 {
        KernelMode::Resolvent
    } else {
        KernelMode::Fundamental
    }
}

/// Hill classes spanning the 2π-periodic θ-functions for each case.
fn classes(case: Case) -> &'static [PeriodicClass] {
    match case {
        Case::Enhancement => &PeriodicClass::ALL,
        Case::Completion => &[PeriodicClass::CosEven, PeriodicClass::SinEven],
    }
}

/// Eigen-decompositions shared by all frequencies of equal ρ.
#[derive(Debug, Clone)]
pub struct SeriesBasis {
    pub case: Case,
    pub rho: f64,
    pub size: usize,
    pub families: Vec<HillFamily>,
    /// eigenvalues λ_n of the θ-operator D33∂² − V, per family
    pub lambdas: Vec<Vec<C>>,
}

impl SeriesBasis {
    pub fn new(p: &DiffusionParams, case: Case, rho: f64, size: usize) -> Result<Self> {
        let st = mathieu_setting(p, case, rho, 0.0);
        let mut families = Vec::new();
        let mut lambdas = Vec::new();
        for &class in classes(case) {
            let fam = HillFamily::new(class, st.q, size)?;
            for v in &fam.vectors {
                let cond: f64 = v.iter().map(|c| c.norm_sqr()).sum();
                if cond > 1e8 {
                    return Err(Se2Error::Numerical(format!(
                        "Hill eigenvector near an exceptional point at ρ = {rho} (‖v‖² = {cond:e})"
                    )));
                }
            }
            let lam = fam
                .values
                .iter()
                .map(|&a| match case {
                    Case::Enhancement => -a * p.d33 - rho * rho * (p.d11 + p.d22) / 2.0,
                    Case::Completion => -a * p.d33 / 4.0,
                })
                .collect();
            families.push(fam);
            lambdas.push(lam);
        }
        Ok(SeriesBasis { case, rho, size, families, lambdas })
    }
}

/// Approach 1 at one frequency: a free circle resolvent with the potential
/// frozen at θ = 0, plus the eigen-series of the smooth remainder.
#[derive(Debug, Clone)]
pub struct SeriesColumn {
    rho: f64,
    phi: f64,
    mu: f64,
    c: C,
    d33: f64,
    source: f64,
    /// remainder coefficients per family and basis index
    coeffs: Vec<(PeriodicClass, Vec<C>)>,
}

impl SeriesColumn {
    pub fn new(p: &DiffusionParams, basis: &SeriesBasis, mode: KernelMode, phi: f64) -> Result<Self> {
        let case = basis.case;
        let rho = basis.rho;
        let (decay, source) = match mode {
            KernelMode::Resolvent => (p.alpha, p.alpha),
            KernelMode::Fundamental => (0.0, 1.0),
        };
        let mut c = decay + potential(p, case, rho, phi, 0.0);
        if c.norm() < 1e-12 * (1.0 + rho * rho) {
            // no decay and a vanishing potential at the source: any positive
            // shift still gives a valid (slower converging) split
            c += p.d33;
        }
        let d33 = p.d33;
        let mu = case.mu();
        // remainder source s = (V − c + decay)H = K[cos(m(φ−θ)) − cos(mφ)]H + (V(0)+decay−c)H
        let (kk, m) = match case {
            Case::Enhancement => (C::new(rho * rho * (p.d11 - p.d22) / 2.0, 0.0), 2.0),
            Case::Completion => (C::new(0.0, rho * p.a1), 1.0),
        };
        let shift = decay + potential(p, case, rho, phi, 0.0) - c;
        let h_hat = |h: f64| source / (c + d33 * h * h);
        let t = |h: f64, cos: bool| {
            let tr = if cos { (h * phi).cos() } else { (h * phi).sin() };
            tr * h_hat(h)
        };
        let mut coeffs = Vec::new();
        for (fam, lam) in basis.families.iter().zip(&basis.lambdas) {
            let class = fam.class;
            let cos = class.is_cos();
            let bs: Vec<C> = (0..fam.size)
                .map(|i| {
                    let h = class.harmonic(i) as f64 / mu;
                    let w = class.basis_weight(i);
                    let inner =
                        kk * (0.5 * (t(h + m, cos) + t(h - m, cos)) - (m * phi).cos() * t(h, cos)) + shift * t(h, cos);
                    inner * w
                })
                .collect();
            let mut d = vec![ZERO; fam.size];
            for (n, v) in fam.vectors.iter().enumerate() {
                let proj: C = v.iter().zip(&bs).map(|(a, b)| a * b).sum();
                let wn = proj / (decay - lam[n]);
                for (di, vi) in d.iter_mut().zip(v) {
                    *di -= vi * wn / PI;
                }
            }
            coeffs.push((class, d));
        }
        Ok(SeriesColumn { rho, phi, mu, c, d33, source, coeffs })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn eval(&self, theta: f64) -> C {
        let mut acc = circle_resolvent(self.c, self.d33, self.source, theta);
        for (class, d) in &self.coeffs {
            for (i, di) in d.iter().enumerate() {
                let h = class.harmonic(i) as f64 / self.mu;
                let arg = h * (self.phi - theta);
                let b = if class.is_cos() { arg.cos() } else { arg.sin() };
                acc += di * b * class.basis_weight(i);
            }
        }
        acc
    }
}

/// Approach-1 value at one (ω, θ) with Hill truncation starting at `m`
/// and doubled until successive values agree to 1e−10 relative to the
/// column peak R̂(ω, 0).
pub fn kernel_hat_series(omega: (f64, f64), theta: f64, p: &DiffusionParams, m: usize) -> Result<C> {
    let case = p.validate(true)?;
    if m < 8 {
        return Err(Se2Error::InvalidParams("series truncation M must be ≥ 8".into()));
    }
    let rho = omega.0.hypot(omega.1);
    let phi = if rho == 0.0 { 0.0 } else { omega.1.atan2(omega.0) };
    let mut size = m;
    let mut prev: Option<C> = None;
    while size <= 512 {
        let basis = SeriesBasis::new(p, case, rho, size)?;
        let col = SeriesColumn::new(p, &basis, mode_of(p), phi)?;
        let v = col.eval(theta);
        let peak = col.eval(0.0).norm().max(1e-300);
        if let Some(pv) = prev {
            if (v - pv).norm() <= 1e-10 * peak {
                return Ok(v);
            }
        }
        prev = Some(v);
        size *= 2;
    }
    Err(Se2Error::NoConvergence { iters: size, residual: 0.0 })
}

/// Time-dependent kernel K̂_t(ω, θ) = Σ Θ_n(θ)Θ_n(0)e^{tλ_n}; validation only.
pub fn kernel_hat_time(omega: (f64, f64), theta: f64, p: &DiffusionParams, t: f64, m: usize) -> Result<C> {
    let case = p.validate(true)?;
    if t <= 0.0 {
        return Err(Se2Error::InvalidParams("time must be positive".into()));
    }
    let rho = omega.0.hypot(omega.1);
    let phi = if rho == 0.0 { 0.0 } else { omega.1.atan2(omega.0) };
    let basis = SeriesBasis::new(p, case, rho, m.max(8))?;
    let mu = case.mu();
    let mut acc = ZERO;
    for (fam, lam) in basis.families.iter().zip(&basis.lambdas) {
        for (n, v) in fam.vectors.iter().enumerate() {
            let (mut at_theta, mut at_zero) = (ZERO, ZERO);
            for (i, vi) in v.iter().enumerate() {
                let h = fam.class.harmonic(i) as f64 / mu;
                let w = fam.class.basis_weight(i);
                let (b1, b0) = if fam.class.is_cos() {
                    ((h * (phi - theta)).cos(), (h * phi).cos())
                } else {
                    ((h * (phi - theta)).sin(), (h * phi).sin())
                };
                at_theta += vi * b1 * w;
                at_zero += vi * b0 * w;
            }
            acc += at_theta * at_zero / PI * (t * lam[n]).exp();
        }
    }
    Ok(acc)
}

/// Default Gaussian scale from the inner-scale rule: σ = 2/(0.9·ς·π) pixels.
pub fn default_s(grid: &GridSpec) -> f64 {
    let sigma = 2.0 / (0.9 * grid.oversample as f64 * PI) * grid.dx();
    0.5 * sigma * sigma
}

/// Γ(0, π² s ς²): bound on the Fourier tail outside the sampled square in
/// units of πC (s in squared pixels).
pub fn tail_bound(s: f64, oversample: usize) -> f64 {
    let z = PI * PI * s * (oversample * oversample) as f64;
    exp_integral_e1(z)
}

/// Evaluate one frequency column at all lattice angles.
fn column_values(
    p: &DiffusionParams,
    case: Case,
    approach: Approach,
    mode: KernelMode,
    grid: &GridSpec,
    wx: f64,
    wy: f64,
    basis: Option<&SeriesBasis>,
) -> Result<Vec<C>> {
    let nt = grid.ntheta();
    let r = grid.r as i64;
    let thetas = (-r..=r).map(|k| grid.theta(k));
    match approach {
        Approach::Series => {
            let rho = wx.hypot(wy);
            if rho == 0.0 && mode == KernelMode::Resolvent {
                return Ok(thetas.map(|t| circle_resolvent(C::new(p.alpha, 0.0), p.d33, p.alpha, t)).collect());
            }
            let phi = if rho == 0.0 { 0.0 } else { wy.atan2(wx) };
            let col = SeriesColumn::new(p, basis.expect("series basis"), mode, phi)?;
            Ok(thetas.map(|t| col.eval(t)).collect())
        }
        Approach::Unwrapped => {
            let st = CaseSettings::new(p, case, mode, wx, wy)?;
            let mut out = Vec::with_capacity(nt);
            for t in thetas {
                out.push(st.unwrapped(t)?);
            }
            Ok(out)
        }
        Approach::ClosedForm => {
            let st = CaseSettings::new(p, case, mode, wx, wy)?;
            Ok(thetas.map(|t| st.closed_form(t)).collect())
        }
    }
}

const SERIES_SIZE: usize = 64;

/// Frequency samples on an arbitrary set of lattice points (p′, q′),
/// one θ-column each, with the Gaussian factor e^{−s|ω|²} applied.
fn fill_columns(
    grid: &GridSpec,
    p: &DiffusionParams,
    case: Case,
    approach: Approach,
    mode: KernelMode,
    points: &[(i64, i64)],
) -> Result<Vec<Vec<C>>> {
    // Hermitian symmetry R̂(−ω, θ) = conj R̂(ω, θ): compute one half only
    let canon = sampling::half_plane;
    let mut unique: Vec<(i64, i64)> = points.iter().map(|&pq| canon(pq).0).collect();
    unique.sort_unstable();
    unique.dedup();

    let bases: HashMap<u64, SeriesBasis> = if approach == Approach::Series {
        let mut rhos: Vec<f64> = unique.iter().map(|&(a, b)| grid.omega_x(a).hypot(grid.omega_y(b))).collect();
        rhos.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rhos.dedup();
        rhos.par_iter()
            .map(|&rho| SeriesBasis::new(p, case, rho, SERIES_SIZE).map(|b| (rho.to_bits(), b)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .collect()
    } else {
        HashMap::new()
    };

    let vals: Vec<Vec<C>> = unique
        .par_iter()
        .map(|&(a, b)| {
            let (wx, wy) = (grid.omega_x(a), grid.omega_y(b));
            let rho = wx.hypot(wy);
            let g = (-p.s * rho * rho).exp();
            let col = column_values(p, case, approach, mode, grid, wx, wy, bases.get(&rho.to_bits()))?;
            Ok(col.into_iter().map(|v| v * g).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let lookup: HashMap<(i64, i64), usize> = unique.iter().enumerate().map(|(i, &pq)| (pq, i)).collect();
    Ok(points
        .iter()
        .map(|&pq| {
            let (key, flip) = canon(pq);
            let col = &vals[lookup[&key]];
            if flip {
                col.iter().map(|v| v.conj()).collect()
            } else {
                col.clone()
            }
        })
        .collect())
}

/// Frequency-domain kernel on the base lattice (no folding), Gaussian
/// factor applied.
pub fn kernel_hat_lattice(grid: &GridSpec, p: &DiffusionParams, approach: Approach) -> Result<Se2Field> {
    let case = p.validate(false)?;
    require_k1(p)?;
    let points = sampling::base_points(grid);
    let cols = fill_columns(grid, p, case, approach, KernelMode::Resolvent, &points)?;
    Ok(sampling::columns_to_field(grid, &points, &cols))
}

fn require_k1(p: &DiffusionParams) -> Result<()> {
    if p.k != 1 {
        return Err(Se2Error::InvalidParams("exact kernels support Gamma order k = 1 only".into()));
    }
    Ok(())
}

/// Spatial kernel: sample the ς-oversampled frequency lattice, apply
/// e^{−s|ω|²}, fold onto the base lattice, invert the CDFT and
/// DC-normalize.
pub fn sample_kernel(grid: &GridSpec, p: &DiffusionParams, approach: Approach) -> Result<Se2Field> {
    let case = p.validate(false)?;
    require_k1(p)?;
    let points = sampling::oversampled_points(grid);
    let cols = fill_columns(grid, p, case, approach, KernelMode::Resolvent, &points)?;
    sampling::fold_to_spatial(grid, &points, &cols)
}

/// Fundamental solution in the frequency domain (base lattice, Gaussian
/// factor applied). The ω = 0 column is a pole; it is filled by linear
/// extrapolation along the ω_x axis and its indices are reported.
#[derive(Debug, Clone)]
pub struct FundamentalField {
    pub field: Se2Field,
    pub flagged: Vec<usize>,
}

pub fn fundamental_solution(grid: &GridSpec, p: &DiffusionParams) -> Result<FundamentalField> {
    let mut q = *p;
    q.alpha = 0.0;
    let case = q.validate(true)?;
    if grid.p < 2 {
        return Err(Se2Error::InvalidParams("fundamental solution needs P ≥ 2".into()));
    }
    let points: Vec<(i64, i64)> = sampling::base_points(grid).into_iter().filter(|&pq| pq != (0, 0)).collect();
    let cols = fill_columns(grid, &q, case, Approach::ClosedForm, KernelMode::Fundamental, &points)?;
    let mut out = sampling::columns_to_field(grid, &points, &cols);
    let r = grid.r as i64;
    let mut flagged = Vec::new();
    for k in -r..=r {
        let v = 2.0 * out.get(k, 1, 0) - out.get(k, 2, 0);
        out.set(k, 0, 0, v);
        flagged.push(grid.index(k, 0, 0));
    }
    Ok(FundamentalField { field: out, flagged })
}
