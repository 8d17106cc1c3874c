//! Mathieu functions for complex parameters.
//!
//! Solutions of y″ + (a − 2q cos 2z) y = 0 in Floquet form
//! me_ν(z) = e^{iνz} Σ_ρ c_{2ρ} e^{2iρz}. The Floquet exponent comes from
//! the monodromy of the even fundamental solution, cos(πν) = y₁(π), and is
//! polished on the continued-fraction characteristic equation. Coefficients
//! follow from backward continued fractions on both sides of ρ = 0.
//!
//! Periodic solutions (ce_n, se_n) and their characteristic values come
//! from the Hill matrices in the Fourier cosine/sine bases.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::eig::{tridiag_eigen, TridiagEigen};
use crate::error::{Result, Se2Error};
use crate::ode;

type C = Complex64;

const I: C = C::new(0.0, 1.0);

/// Default coefficient truncation and continued-fraction depth.
pub const DEFAULT_N: usize = 32;
pub const DEFAULT_L: usize = 16;
const MAX_N: usize = 512;
const ODE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MathieuParams {
    pub a: C,
    pub q: C,
}

impl MathieuParams {
    pub fn new(a: C, q: C) -> Self {
        MathieuParams { a, q }
    }

    pub fn real(a: f64, q: f64) -> Self {
        MathieuParams { a: C::new(a, 0.0), q: C::new(q, 0.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    MePlus,
    MeMinus,
    Ce,
    Se,
    MePlusPrime,
    MeMinusPrime,
    CePrime,
    SePrime,
}

/// Put ν into the canonical branch: Im ν ≥ 0 and Re ν ∈ (−1, 1]
/// (Re ν ∈ [0, 1] when ν is real).
pub fn canonical_nu(nu: C) -> C {
    let mut v = if nu.im < 0.0 { -nu } else { nu };
    v.re -= 2.0 * (v.re / 2.0).round();
    if v.re <= -1.0 {
        v.re += 2.0;
    }
    if v.im.abs() < 1e-300 && v.re < 0.0 {
        v = -v;
    }
    v
}

/// True when ν lies within 1e−8 of an integer (periodic solution exists).
pub fn is_resonant(nu: C) -> bool {
    (nu - C::new(nu.re.round(), 0.0)).norm() < 1e-8
}

fn d_coef(p: &MathieuParams, nu: C, two_rho: f64) -> C {
    let s = nu + two_rho;
    (p.a - s * s) / p.q
}

/// Ratios f_l = c_{2l}/c_{2l−2} (positive side) and g_l = c_{−2l}/c_{−2l+2}
/// for l = 1..=depth, from backward continued fractions started at zero.
fn ratios(p: &MathieuParams, nu: C, depth: usize) -> Result<(Vec<C>, Vec<C>)> {
    ratios_from(p, nu, 0, depth)
}

/// Same ratios around the anchor index m: f_j = c_{2(m+j)}/c_{2(m+j−1)} and
/// g_j = c_{2(m−j)}/c_{2(m−j+1)}.
fn ratios_from(p: &MathieuParams, nu: C, m: i64, depth: usize) -> Result<(Vec<C>, Vec<C>)> {
    let mut f = vec![C::new(0.0, 0.0); depth + 2];
    let mut g = vec![C::new(0.0, 0.0); depth + 2];
    for l in (1..=depth).rev() {
        let df = d_coef(p, nu, 2.0 * (m + l as i64) as f64) - f[l + 1];
        let dg = d_coef(p, nu, 2.0 * (m - l as i64) as f64) - g[l + 1];
        f[l] = 1.0 / df;
        g[l] = 1.0 / dg;
        if !(f[l].norm() < 1e12) || !(g[l].norm() < 1e12) {
            return Err(Se2Error::Numerical(format!("continued fraction diverged at depth {l}")));
        }
    }
    Ok((f, g))
}

/// Residual of the central recursion c₂ − D₀c₀ + c₋₂ with c₀ = 1; zero
/// exactly at a Floquet exponent.
fn characteristic(p: &MathieuParams, nu: C, depth: usize) -> Result<C> {
    let (f, g) = ratios(p, nu, depth)?;
    Ok(f[1] + g[1] - d_coef(p, nu, 0.0))
}

/// Floquet exponent by monodromy: cos(πν) = y₁(π).
pub fn floquet_exponent_ode(p: &MathieuParams) -> Result<C> {
    if p.q == C::new(0.0, 0.0) {
        return Ok(canonical_nu(p.a.sqrt()));
    }
    let s = ode::fundamental(p.a, p.q, PI, ODE_TOL)?;
    Ok(canonical_nu(acos(s[0]) / PI))
}

/// Complex arccos without cancellation for large |w|: one of the roots
/// u = w ± √(w²−1) has |u| ≥ 1 and cos(−i log u) = (u + 1/u)/2 = w.
fn acos(w: C) -> C {
    let s = (w - 1.0).sqrt() * (w + 1.0).sqrt();
    let u = if (w + s).norm() >= (w - s).norm() { w + s } else { w - s };
    -I * u.ln()
}

/// Floquet exponent with Im ν ≥ 0, refined by a secant iteration on the
/// continued-fraction characteristic equation.
pub fn floquet_exponent(p: &MathieuParams) -> Result<C> {
    let nu0 = floquet_exponent_ode(p)?;
    if p.q == C::new(0.0, 0.0) {
        return Ok(nu0);
    }
    Ok(refine_nu(p, nu0, DEFAULT_N + DEFAULT_L).unwrap_or(nu0))
}

fn refine_nu(p: &MathieuParams, nu0: C, depth: usize) -> Option<C> {
    let scale = 1.0 + nu0.norm();
    let mut x0 = nu0;
    let mut x1 = nu0 + C::new(1e-7 * scale, 1e-7 * scale);
    let mut h0 = characteristic(p, x0, depth).ok()?;
    let mut h1 = characteristic(p, x1, depth).ok()?;
    for _ in 0..30 {
        let den = h1 - h0;
        if den.norm() == 0.0 {
            break;
        }
        let x2 = x1 - h1 * (x1 - x0) / den;
        if !(x2.re.is_finite() && x2.im.is_finite()) {
            return None;
        }
        x0 = x1;
        h0 = h1;
        x1 = x2;
        h1 = characteristic(p, x1, depth).ok()?;
        if (x1 - x0).norm() < 1e-15 * scale {
            break;
        }
    }
    if (x1 - nu0).norm() < 1e-5 * scale && h1.norm() <= h0.norm().max(1e-300) * 10.0 {
        Some(canonical_nu(x1))
    } else {
        None
    }
}

/// Coefficients c_{2ρ}, ρ ∈ [−n, n], ℓ2-normalised with c₀ real and
/// positive (unless c₀ is negligible). Fails on continued-fraction
/// divergence after three depth doublings.
pub fn coefficients(p: &MathieuParams, nu: C, n: usize, l: usize) -> Result<Vec<C>> {
    if n < 4 || l < 8 {
        return Err(Se2Error::InvalidParams("coefficients need N ≥ 4 and L ≥ 8".into()));
    }
    let mut out = vec![C::new(0.0, 0.0); 2 * n + 1];
    // the harmonic closest to solving (ν+2ρ)² = a dominates at small q
    let ni = n as i64;
    let anchor = (-ni..=ni)
        .min_by(|&x, &y| {
            let miss = |r: i64| ((nu + 2.0 * r as f64).powi(2) - p.a).norm();
            miss(x).total_cmp(&miss(y))
        })
        .unwrap();
    if p.q == C::new(0.0, 0.0) {
        out[(anchor + ni) as usize] = C::new(1.0, 0.0);
        return Ok(out);
    }
    // The recursion is started from the largest coefficient so that no
    // ratio passes through a near-cancelling D term. A second pass moves
    // the anchor when the first guess was not the peak.
    let first = coefficients_from(p, nu, n, l, anchor)?;
    let peak =
        first.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).map(|(i, _)| i as i64 - ni).unwrap();
    if peak == anchor {
        return Ok(first);
    }
    coefficients_from(p, nu, n, l, peak)
}

fn coefficients_from(p: &MathieuParams, nu: C, n: usize, l: usize, anchor: i64) -> Result<Vec<C>> {
    let ni = n as i64;
    let mut out = vec![C::new(0.0, 0.0); 2 * n + 1];
    let a = (anchor + ni) as usize;
    let reach = n + anchor.unsigned_abs() as usize;
    let mut depth_l = l;
    let mut last_err = None;
    for _ in 0..4 {
        match ratios_from(p, nu, anchor, reach + depth_l) {
            Ok((f, g)) => {
                out[a] = C::new(1.0, 0.0);
                for k in a + 1..=2 * n {
                    out[k] = f[k - a] * out[k - 1];
                }
                for k in (0..a).rev() {
                    out[k] = g[a - k] * out[k + 1];
                }
                // phase convention: c₀ real and positive when it is not negligible
                let c0 = out[n];
                let max = out.iter().fold(0.0f64, |m, c| m.max(c.norm()));
                let phase = if c0.norm() > 1e-8 * max { c0.conj() / c0.norm() } else { C::new(1.0, 0.0) };
                let norm = out.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                for c in &mut out {
                    *c *= phase / norm;
                }
                return Ok(out);
            }
            Err(e) => {
                last_err = Some(e);
                depth_l *= 2;
            }
        }
    }
    Err(last_err.unwrap_or_else(|| Se2Error::Numerical("coefficient recursion failed".into())))
}

/// A Floquet solution me_ν together with its parameters.
#[derive(Debug, Clone)]
pub struct MathieuSolution {
    pub params: MathieuParams,
    pub nu: C,
    /// c_{2ρ} stored at index ρ + n.
    pub coeffs: Vec<C>,
    pub n: usize,
    pub resonant: bool,
}

impl MathieuSolution {
    /// Solve with default sizes, doubling N until the outermost coefficients
    /// fall below 1e−12 of the largest.
    pub fn new(params: MathieuParams) -> Result<Self> {
        let nu = floquet_exponent(&params)?;
        MathieuSolution::with_nu(params, nu)
    }

    pub fn with_nu(params: MathieuParams, nu: C) -> Result<Self> {
        let mut n = DEFAULT_N;
        loop {
            let coeffs = coefficients(&params, nu, n, DEFAULT_L)?;
            let max = coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm()));
            let edge = coeffs[0].norm().max(coeffs[2 * n].norm());
            if edge <= 1e-12 * max || n >= MAX_N {
                if edge > 1e-12 * max {
                    return Err(Se2Error::Numerical(format!(
                        "Mathieu coefficients not decaying at N = {n} (a = {}, q = {})",
                        params.a, params.q
                    )));
                }
                return Ok(MathieuSolution { params, nu, coeffs, n, resonant: is_resonant(nu) });
            }
            n *= 2;
        }
    }

    pub fn coeff(&self, rho: i64) -> C {
        let idx = rho + self.n as i64;
        if idx < 0 || idx as usize >= self.coeffs.len() {
            C::new(0.0, 0.0)
        } else {
            self.coeffs[idx as usize]
        }
    }

    /// Periodic factor P(z) = Σ c_{2ρ} e^{2iρz} and its first two derivatives.
    pub fn periodic_with_derivs(&self, z: C) -> (C, C, C) {
        let n = self.n as i64;
        let w = (2.0 * I * z).exp();
        let mut pw = (-2.0 * I * z * n as f64).exp();
        let (mut p0, mut p1, mut p2) = (C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0));
        for (j, c) in self.coeffs.iter().enumerate() {
            let k = 2.0 * (j as i64 - n) as f64;
            let t = c * pw;
            p0 += t;
            p1 += t * I * k;
            p2 -= t * k * k;
            pw *= w;
        }
        (p0, p1, p2)
    }

    /// P(z) only (real argument fast path).
    pub fn periodic(&self, x: f64) -> C {
        let n = self.n as i64;
        let w = C::from_polar(1.0, 2.0 * x);
        let mut pw = C::from_polar(1.0, -2.0 * x * n as f64);
        let mut acc = C::new(0.0, 0.0);
        for c in &self.coeffs {
            acc += c * pw;
            pw *= w;
        }
        acc
    }

    /// me_ν(z), its derivative and second derivative.
    pub fn me_with_derivs(&self, z: C) -> (C, C, C) {
        let (p0, p1, p2) = self.periodic_with_derivs(z);
        let e = (I * self.nu * z).exp();
        let inu = I * self.nu;
        (e * p0, e * (inu * p0 + p1), e * (inu * inu * p0 + 2.0 * inu * p1 + p2))
    }

    pub fn eval(&self, z: C, kind: Kind) -> C {
        let plus = || self.me_with_derivs(z);
        let minus = || self.me_with_derivs(-z);
        match kind {
            Kind::MePlus => plus().0,
            Kind::MeMinus => minus().0,
            Kind::MePlusPrime => plus().1,
            Kind::MeMinusPrime => -minus().1,
            Kind::Ce => 0.5 * (plus().0 + minus().0),
            Kind::Se => (plus().0 - minus().0) / (2.0 * I),
            Kind::CePrime => 0.5 * (plus().1 - minus().1),
            Kind::SePrime => (plus().1 + minus().1) / (2.0 * I),
        }
    }

    /// Residual y″ + (a − 2q cos 2z) y of me_ν at z.
    pub fn ode_residual(&self, z: C) -> (C, C) {
        let (y, _, y2) = self.me_with_derivs(z);
        (y2 + (self.params.a - 2.0 * self.params.q * (2.0 * z).cos()) * y, y)
    }

    /// −(2i/μ)·se′_ν(0)·ce_ν(0): the θ-Wronskian F∂θG − G∂θF of
    /// F(θ) = me_{−ν}((φ−θ)/μ), G(θ) = me_ν((φ−θ)/μ).
    pub fn wronskian(&self, mu: f64) -> C {
        let ce0 = self.eval(C::new(0.0, 0.0), Kind::Ce);
        let sep0 = self.eval(C::new(0.0, 0.0), Kind::SePrime);
        -2.0 * I / mu * sep0 * ce0
    }
}

/// The four symmetry classes of 2π-periodic Mathieu functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PeriodicClass {
    /// ce_{2m}: cos(2kz), k ≥ 0
    CosEven,
    /// ce_{2m+1}: cos((2k+1)z)
    CosOdd,
    /// se_{2m+1}: sin((2k+1)z)
    SinOdd,
    /// se_{2m+2}: sin(2kz), k ≥ 1
    SinEven,
}

impl PeriodicClass {
    pub const ALL: [PeriodicClass; 4] =
        [PeriodicClass::CosEven, PeriodicClass::CosOdd, PeriodicClass::SinOdd, PeriodicClass::SinEven];

    /// z-harmonic of basis function i.
    pub fn harmonic(self, i: usize) -> usize {
        match self {
            PeriodicClass::CosEven => 2 * i,
            PeriodicClass::CosOdd | PeriodicClass::SinOdd => 2 * i + 1,
            PeriodicClass::SinEven => 2 * i + 2,
        }
    }

    pub fn is_cos(self) -> bool {
        matches!(self, PeriodicClass::CosEven | PeriodicClass::CosOdd)
    }

    /// Weight of basis function i: the constant term of the even cosine
    /// class is 1/√2 so that the Hill matrix is symmetric.
    pub fn basis_weight(self, i: usize) -> f64 {
        if self == PeriodicClass::CosEven && i == 0 {
            std::f64::consts::FRAC_1_SQRT_2
        } else {
            1.0
        }
    }

    /// Symmetric tridiagonal Hill matrix of size n: eigenvalues are the
    /// characteristic values a (cos classes) or b (sin classes).
    pub fn hill_matrix(self, q: C, n: usize) -> (Vec<C>, Vec<C>) {
        let mut diag: Vec<C> = (0..n).map(|i| C::new((self.harmonic(i) * self.harmonic(i)) as f64, 0.0)).collect();
        let mut off = vec![q; n.saturating_sub(1)];
        match self {
            PeriodicClass::CosEven => {
                if n > 1 {
                    off[0] = q * std::f64::consts::SQRT_2;
                }
            }
            PeriodicClass::CosOdd => diag[0] += q,
            PeriodicClass::SinOdd => diag[0] -= q,
            PeriodicClass::SinEven => {}
        }
        (diag, off)
    }
}

/// Eigen-decomposition of one Hill class, eigenpairs sorted by Re(a).
#[derive(Debug, Clone)]
pub struct HillFamily {
    pub class: PeriodicClass,
    pub q: C,
    pub size: usize,
    pub values: Vec<C>,
    /// vectors[k] holds the basis coefficients of eigenfunction k.
    pub vectors: Vec<Vec<C>>,
}

impl HillFamily {
    pub fn new(class: PeriodicClass, q: C, size: usize) -> Result<Self> {
        let (d, o) = class.hill_matrix(q, size);
        let eg: TridiagEigen = tridiag_eigen(&d, &o)?;
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&x, &y| eg.values[x].re.partial_cmp(&eg.values[y].re).unwrap_or(std::cmp::Ordering::Equal));
        Ok(HillFamily {
            class,
            q,
            size,
            values: order.iter().map(|&k| eg.values[k]).collect(),
            vectors: order.iter().map(|&k| eg.vector(k)).collect(),
        })
    }

    /// Value of eigenfunction k at z, normalised so that ∫ over a 2π
    /// period of its square equals π (bilinear, no conjugation).
    pub fn eval(&self, k: usize, z: f64) -> C {
        let v = &self.vectors[k];
        let mut acc = C::new(0.0, 0.0);
        for (i, c) in v.iter().enumerate() {
            let h = self.class.harmonic(i) as f64;
            let b = if self.class.is_cos() { (h * z).cos() } else { (h * z).sin() };
            acc += c * b * self.class.basis_weight(i);
        }
        acc
    }
}

/// Characteristic value a_n(q) of ce_n.
pub fn periodic_characteristic(n: usize, q: C) -> Result<C> {
    characteristic_in(if n % 2 == 0 { PeriodicClass::CosEven } else { PeriodicClass::CosOdd }, n / 2, q)
}

/// Characteristic value b_n(q) of se_n, n ≥ 1.
pub fn periodic_characteristic_b(n: usize, q: C) -> Result<C> {
    if n == 0 {
        return Err(Se2Error::InvalidParams("se_n needs n ≥ 1".into()));
    }
    if n % 2 == 1 {
        characteristic_in(PeriodicClass::SinOdd, n / 2, q)
    } else {
        characteristic_in(PeriodicClass::SinEven, n / 2 - 1, q)
    }
}

fn characteristic_in(class: PeriodicClass, m: usize, q: C) -> Result<C> {
    let mut size = (2 * m + 16).max((4.0 * q.norm().sqrt()) as usize + m + 16);
    let mut prev: Option<C> = None;
    while size <= MAX_N {
        let fam = HillFamily::new(class, q, size)?;
        let val = fam.values[m];
        let tail = fam.vectors[m][size - 1].norm();
        if let Some(p) = prev {
            if tail < 1e-14 && (val - p).norm() <= 1e-12 * (1.0 + val.norm()) {
                return Ok(val);
            }
        }
        prev = Some(val);
        size *= 2;
    }
    Err(Se2Error::Numerical(format!("characteristic value did not converge (q = {q})")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_to_zero_limits() {
        let nu = floquet_exponent(&MathieuParams::real(-1.0, 1e-12)).unwrap();
        assert!((nu - I).norm() < 1e-6, "{nu}");
        let nu = floquet_exponent(&MathieuParams::real(-4.0, 1e-12)).unwrap();
        assert!((nu - 2.0 * I).norm() < 1e-6, "{nu}");
        let sol = MathieuSolution::new(MathieuParams::real(-1.0, 0.0)).unwrap();
        let z = C::new(0.7, 0.0);
        assert!((sol.eval(z, Kind::MePlus) - (I * sol.nu * z).exp()).norm() < 1e-14);
    }

    #[test]
    fn large_monodromy_trace() {
        // cos(πν) ≈ 1.4e6 here; a naive arccos loses four digits
        let p = MathieuParams::real(-26.0, 12.5);
        let nu = floquet_exponent_ode(&p).unwrap();
        let sol = MathieuSolution::with_nu(p, nu).unwrap();
        for i in 0..64 {
            let z = C::new(-PI + i as f64 * PI / 32.0, 0.0);
            let (r, y) = sol.ode_residual(z);
            assert!(r.norm() < 1e-8 * y.norm().max(1.0));
        }
    }

    #[test]
    fn parity_at_origin() {
        let sol = MathieuSolution::new(MathieuParams::new(C::new(-2.0, 0.0), C::new(0.0, 5.0))).unwrap();
        assert!(sol.eval(C::new(0.0, 0.0), Kind::Se).norm() < 1e-14);
        assert!(sol.eval(C::new(0.0, 0.0), Kind::CePrime).norm() < 1e-12);
    }

    #[test]
    fn characteristic_small_q() {
        assert!((periodic_characteristic(0, C::new(0.0, 0.0)).unwrap()).norm() < 1e-14);
        assert!((periodic_characteristic(3, C::new(0.0, 0.0)).unwrap() - 9.0).norm() < 1e-12);
        let q = 0.01;
        let a0 = periodic_characteristic(0, C::new(q, 0.0)).unwrap();
        assert!((a0.re + q * q / 2.0).abs() < 1e-7, "{a0}");
    }

    #[test]
    fn characteristic_gives_integer_exponent() {
        for n in 0..4 {
            let q = C::new(1.3, 0.0);
            let a = periodic_characteristic(n, q).unwrap();
            let nu = floquet_exponent_ode(&MathieuParams::new(a, q)).unwrap();
            let d = (nu - C::new(nu.re.round(), 0.0)).norm();
            assert!(d < 1e-6 && (nu.re.round() as i64 - n as i64).rem_euclid(2) == 0, "n={n} ν={nu}");
        }
    }
}
