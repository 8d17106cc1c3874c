//! Error protocol, asymptotic formulas and comparison reports.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;

use crate::cdft;
use crate::error::{Result, Se2Error};
use crate::exact::{self, Approach};
use crate::fd_solver::{self, SchemeConfig};
use crate::field::{Domain, Se2Field};
use crate::fourier_solver;
use crate::grid::GridSpec;
use crate::group::{homogeneous_norm, GroupElement};
use crate::params::{Case, DiffusionParams};
use crate::stochastic::{self, TimeLaw, WalkConfig};

type C = Complex64;

/// Domain in which an error is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareDomain {
    Spatial,
    Fourier,
}

impl fmt::Display for CompareDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompareDomain::Spatial => "spatial",
            CompareDomain::Fourier => "fourier",
        })
    }
}

/// Relative ℓ_K error |exact − approx|/|exact| after normalization.
///
/// Spatial fields are compared after ℓ1 normalization of both. In the
/// Fourier domain both are transformed and DC-normalized so that
/// Σ_r Û(0, θ_r)Δθ = 1. Frequency-domain inputs are used as given (only
/// DC-normalized).
pub fn relative_error(exact: &Se2Field, approx: &Se2Field, k: u32, domain: CompareDomain) -> Result<f64> {
    exact.require_same_grid(approx)?;
    approx.require(exact.domain)?;
    if k == 0 {
        return Err(Se2Error::InvalidParams("norm index K must be ≥ 1".into()));
    }
    let (e, a) = match (domain, exact.domain) {
        (CompareDomain::Spatial, Domain::Spatial) => (exact.l1_normalize()?, approx.l1_normalize()?),
        (CompareDomain::Spatial, Domain::Frequency) => {
            return Err(Se2Error::InvalidParams("spatial comparison needs spatial fields".into()))
        }
        (CompareDomain::Fourier, Domain::Spatial) => {
            (cdft::cdft(exact)?.dc_normalize()?, cdft::cdft(approx)?.dc_normalize()?)
        }
        (CompareDomain::Fourier, Domain::Frequency) => (exact.dc_normalize()?, approx.dc_normalize()?),
    };
    let kf = k as f64;
    let num: f64 = e.data.iter().zip(&a.data).map(|(x, y)| (x - y).norm().powf(kf)).sum();
    let den: f64 = e.data.iter().map(|x| x.norm().powf(kf)).sum();
    if den == 0.0 {
        return Err(Se2Error::ZeroMass);
    }
    Ok((num / den).powf(1.0 / kf))
}

/// Whole-line resolvent of D33 R″ = (α + ρ²D11) R, the θ-profile of the
/// enhancement kernel near θ = φ when D33/D11 is small. `theta` is the
/// angle relative to the frequency direction.
pub fn asymptote_enhancement(rho: f64, theta: f64, p: &DiffusionParams) -> C {
    let lam = (rho * rho * p.d11 + p.alpha) / p.d33;
    C::new(p.alpha / (2.0 * p.d33 * lam.sqrt()) * (-lam.sqrt() * theta.abs()).exp(), 0.0)
}

/// α → 0 limit of [`asymptote_enhancement`] divided by α, to first order
/// in |θ|: 1/(2ρ√(D11D33)) − |θ|/(2D33). Pole of order one at ρ = 0.
pub fn asymptote_enhancement_fundamental(rho: f64, theta: f64, p: &DiffusionParams) -> C {
    C::new(1.0 / (2.0 * rho * (p.d11 * p.d33).sqrt()) - theta.abs() / (2.0 * p.d33), 0.0)
}

/// Completion counterpart: whole-line resolvent of D33 R″ = (α + iρ) R,
/// α/(2√(D33(α+iρ))) e^{−|θ|√((α+iρ)/D33)}. With α = 0 and the factor α
/// dropped this has a pole of order 1/2.
pub fn asymptote_completion(rho: f64, theta: f64, p: &DiffusionParams) -> C {
    let c = C::new(p.alpha, rho * p.a1);
    let source = if p.alpha > 0.0 { p.alpha } else { 1.0 };
    source / (2.0 * (c * p.d33).sqrt()) * (-(c / p.d33).sqrt() * theta.abs()).exp()
}

/// Admissible range of the constant in the Bessel-form asymptote.
pub const BESSEL_CONSTANT_RANGE: (f64, f64) = (0.5, 1.189_207_115_002_721);

/// Small-|g| asymptote of the Gamma-k kernel:
/// 2^{1−k}/(π D11 D33 (k−1)!) α^k (|g|C)^{k−2} K_{2−k}(|g| C √α),
/// with |g| the homogeneous norm.
pub fn gamma_kernel_asymptote(g: GroupElement, p: &DiffusionParams, c: f64) -> Result<f64> {
    let (lo, hi) = BESSEL_CONSTANT_RANGE;
    if !(lo..=hi).contains(&c) {
        return Err(Se2Error::InvalidParams(format!("constant C = {c} outside [{lo}, {hi}]")));
    }
    bessel_form(homogeneous_norm(g, p)?, p, c)
}

fn bessel_form(m: f64, p: &DiffusionParams, c: f64) -> Result<f64> {
    if p.k == 0 {
        return Err(Se2Error::InvalidParams("Gamma order k must be ≥ 1".into()));
    }
    if m == 0.0 {
        return Ok(if p.k >= 3 { bessel_form(1e-8, p, c)? } else { f64::INFINITY });
    }
    let k = p.k as i32;
    let fact: f64 = (1..p.k).map(|i| i as f64).product();
    let pre = 2f64.powi(1 - k) / (PI * p.d11 * p.d33 * fact) * p.alpha.powi(k);
    let order = (2 - k).unsigned_abs();
    let z = m * c * p.alpha.sqrt();
    Ok(pre * (m * c).powi(k - 2) * puruspe::Kn(order, z))
}

/// Least-squares fit of C (log-space, amplitude fixed by the formula) over
/// voxels with homogeneous norm in [r_min, r_max]. The search is not
/// restricted to the admissible range so that a miss is visible.
pub fn fit_bessel_constant(field: &Se2Field, p: &DiffusionParams, r_min: f64, r_max: f64) -> Result<f64> {
    field.require(Domain::Spatial)?;
    let g = &field.grid;
    let mut pts = Vec::new();
    for idx in 0..g.len() {
        let (r, a, b) = g.coords(idx);
        let m = homogeneous_norm(GroupElement::new(g.x(a), g.y(b), g.theta(r)), p)?;
        let v = field.data[idx].re;
        if m >= r_min && m <= r_max && v > 0.0 {
            pts.push((m, v.ln()));
        }
    }
    if pts.len() < 4 {
        return Err(Se2Error::InvalidParams("too few samples for the constant fit".into()));
    }
    let cost = |c: f64| -> f64 {
        pts.iter().map(|(m, lv)| (bessel_form(*m, p, c).map(f64::ln).unwrap_or(f64::INFINITY) - lv).powi(2)).sum()
    };
    // golden section on log C
    let (mut a, mut b) = ((0.01f64).ln(), (100.0f64).ln());
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c1 = b - gr * (b - a);
        let c2 = a + gr * (b - a);
        if cost(c1.exp()) < cost(c2.exp()) {
            b = c2;
        } else {
            a = c1;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// Kernel construction method used by reports and the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelMethod {
    Exact(Approach),
    /// Fourier band solver with truncation N (None: 2R).
    Fbt {
        n: Option<usize>,
    },
    FdExplicit {
        dt: f64,
    },
    FdImplicit {
        dt: f64,
    },
    MonteCarlo {
        paths: u64,
        dt: f64,
        seed: u64,
    },
}

impl fmt::Display for KernelMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelMethod::Exact(Approach::Series) => f.write_str("exact1"),
            KernelMethod::Exact(Approach::Unwrapped) => f.write_str("exact2"),
            KernelMethod::Exact(Approach::ClosedForm) => f.write_str("exact3"),
            KernelMethod::Fbt { .. } => f.write_str("fbt"),
            KernelMethod::FdExplicit { .. } => f.write_str("fd-explicit"),
            KernelMethod::FdImplicit { .. } => f.write_str("fd-implicit"),
            KernelMethod::MonteCarlo { .. } => f.write_str("mc"),
        }
    }
}

impl FromStr for KernelMethod {
    type Err = Se2Error;

    /// Method names with default settings; the command line overrides them.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact1" | "exact2" | "exact3" => Ok(KernelMethod::Exact(s.parse()?)),
            "fbt" => Ok(KernelMethod::Fbt { n: None }),
            "fd-explicit" => Ok(KernelMethod::FdExplicit { dt: 0.0 }),
            "fd-implicit" => Ok(KernelMethod::FdImplicit { dt: 0.0 }),
            "mc" => Ok(KernelMethod::MonteCarlo { paths: 1_000_000, dt: 0.02, seed: 1 }),
            _ => Err(Se2Error::InvalidParams(format!("unknown method '{s}'"))),
        }
    }
}

/// Explicit step used when none is given: 0.9 of the stencil's limit for
/// enhancement; for completion the diffusion sub-step 0.9·Δθ²/(2D33).
pub fn default_fd_step(grid: &GridSpec, p: &DiffusionParams) -> Result<f64> {
    match p.validate(false)? {
        Case::Enhancement => Ok(0.9 * fd_solver::von_neumann_limit(*grid, p)?),
        Case::Completion => Ok(0.9 * grid.dtheta().powi(2) / (2.0 * p.d33)),
    }
}

/// Build a spatial, DC-normalized kernel.
pub fn build_kernel(grid: &GridSpec, p: &DiffusionParams, method: KernelMethod) -> Result<Se2Field> {
    match method {
        KernelMethod::Exact(a) => exact::sample_kernel(grid, p, a),
        KernelMethod::Fbt { n } => fourier_solver::kernel_fbt(grid, p, n.unwrap_or(2 * grid.r)),
        KernelMethod::FdExplicit { dt } => {
            let dt = if dt > 0.0 { dt } else { default_fd_step(grid, p)? };
            fd_solver::resolvent_quadrature(*grid, p, &SchemeConfig::explicit(dt, 0), None)
        }
        KernelMethod::FdImplicit { dt } => {
            let dt = if dt > 0.0 { dt } else { 10.0 * default_fd_step(grid, p)? };
            fd_solver::resolvent_quadrature(*grid, p, &SchemeConfig::implicit(dt, 0), None)
        }
        KernelMethod::MonteCarlo { paths, dt, seed } => {
            let law = if p.k == 1 { TimeLaw::Exponential(p.alpha) } else { TimeLaw::Gamma { k: p.k, rate: p.alpha } };
            let cfg = WalkConfig::new(dt, paths, law, seed);
            stochastic::kernel_histogram(&cfg, p, grid)
        }
    }
}

/// One cell of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub case: Case,
    pub method: String,
    pub k: u32,
    pub domain: CompareDomain,
    /// relative error as a fraction
    pub value: f64,
    pub sigma: Option<f64>,
}

/// All four (K, domain) cells of every approximation against `exact`.
pub fn compare_report(case: Case, exact: &Se2Field, approx: &[(String, Se2Field)]) -> Result<Vec<ErrorReport>> {
    let mut rows = Vec::new();
    for (name, a) in approx {
        for domain in [CompareDomain::Spatial, CompareDomain::Fourier] {
            for k in [1, 2] {
                rows.push(ErrorReport {
                    case,
                    method: name.clone(),
                    k,
                    domain,
                    value: relative_error(exact, a, k, domain)?,
                    sigma: None,
                });
            }
        }
    }
    Ok(rows)
}

/// Error against the closed-form kernel as the Gaussian scale sweeps σ.
pub fn sigma_sweep(
    grid: &GridSpec,
    p: &DiffusionParams,
    sigmas: &[f64],
    methods: &[KernelMethod],
) -> Result<Vec<ErrorReport>> {
    let case = p.validate(false)?;
    let mut rows = Vec::new();
    for &s in sigmas {
        let q = p.with_sigma(s);
        let exact = exact::sample_kernel(grid, &q, Approach::ClosedForm)?;
        for &m in methods {
            let a = build_kernel(grid, &q, m)?;
            rows.push(ErrorReport {
                case,
                method: m.to_string(),
                k: 1,
                domain: CompareDomain::Spatial,
                value: relative_error(&exact, &a, 1, CompareDomain::Spatial)?,
                sigma: Some(s),
            });
        }
    }
    Ok(rows)
}

fn case_name(c: Case) -> &'static str {
    match c {
        Case::Enhancement => "enh",
        Case::Completion => "com",
    }
}

/// CSV with columns case, method, K, domain, error_pct (plus sigma_s when
/// the rows come from a sweep).
pub fn write_report_csv<W: Write>(rows: &[ErrorReport], out: W) -> Result<()> {
    let sweep = rows.iter().any(|r| r.sigma.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["case", "method", "K", "domain", "error_pct"];
    if sweep {
        header.push("sigma_s");
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            case_name(r.case).to_string(),
            r.method.clone(),
            r.k.to_string(),
            r.domain.to_string(),
            format!("{:.4}", 100.0 * r.value),
        ];
        if sweep {
            rec.push(r.sigma.map(|s| s.to_string()).unwrap_or_default());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Se2Error {
    Se2Error::Format(e.to_string())
}

/// Least-squares slope of log|value| against log ρ.
pub fn power_law_slope(samples: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = samples.iter().map(|(r, v)| (r.ln(), v.abs().ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}
