//! The roto-translation group SE(2) in (x, y, θ) coordinates.

use std::f64::consts::PI;

use crate::error::{Result, Se2Error};
use crate::params::DiffusionParams;

/// Wrap an angle to (−π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupElement {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl GroupElement {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        GroupElement { x, y, theta: wrap_angle(theta) }
    }

    pub fn identity() -> Self {
        GroupElement { x: 0.0, y: 0.0, theta: 0.0 }
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.theta.sin_cos();
        GroupElement::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.theta)
    }

    /// Exponential curve of c1·A1 + c2·A2 + c3·A3 evaluated at unit time.
    pub fn exp(c1: f64, c2: f64, c3: f64) -> Self {
        if c3.abs() < 1e-12 {
            // second-order expansion keeps the θ → 0 limit smooth
            let x = c1 - 0.5 * c2 * c3;
            let y = c2 + 0.5 * c1 * c3;
            return GroupElement::new(x, y, c3);
        }
        let s = c3.sin();
        let omc = 2.0 * (0.5 * c3).sin().powi(2);
        let x = (c1 * s - c2 * omc) / c3;
        let y = (c1 * omc + c2 * s) / c3;
        GroupElement::new(x, y, c3)
    }
}

/// (x, θ)(x′, θ′) = (x + R_θ x′, θ + θ′).
pub fn group_product(g: GroupElement, h: GroupElement) -> GroupElement {
    let (s, c) = g.theta.sin_cos();
    GroupElement::new(g.x + c * h.x - s * h.y, g.y + s * h.x + c * h.y, g.theta + h.theta)
}

/// Logarithmic coordinates (c1, c2, c3) with `GroupElement::exp(c1, c2, c3) == g`.
pub fn log_coordinates(g: GroupElement) -> (f64, f64, f64) {
    let half = 0.5 * g.theta;
    // (θ/2)·cot(θ/2), written so that it stays accurate as θ → 0
    let k = if half == 0.0 { 1.0 } else { half / half.tan() };
    (k * g.x + half * g.y, k * g.y - half * g.x, g.theta)
}

/// The weighted modulus sqrt((c1²/D11 + c3²/D33)² + c2²/(D11 D33)).
///
/// This has units of time; see [`homogeneous_norm`] for the length-like
/// quantity used in small-|g| power laws.
pub fn weighted_modulus(g: GroupElement, p: &DiffusionParams) -> Result<f64> {
    if p.d11 <= 0.0 || p.d33 <= 0.0 {
        return Err(Se2Error::InvalidParams("weighted modulus needs D11 > 0 and D33 > 0".into()));
    }
    let (c1, c2, c3) = log_coordinates(g);
    let inner = c1 * c1 / p.d11 + c3 * c3 / p.d33;
    Ok((inner * inner + c2 * c2 / (p.d11 * p.d33)).sqrt())
}

/// Square root of [`weighted_modulus`]: homogeneous of degree one under the
/// dilations (ξ, η, θ) ↦ (λξ, λ²η, λθ), so it scales like a distance.
pub fn homogeneous_norm(g: GroupElement, p: &DiffusionParams) -> Result<f64> {
    weighted_modulus(g, p).map(f64::sqrt)
}
