use crate::error::{Result, Se2Error};

/// Which of the two supported generators a parameter set describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Case {
    /// D = diag(D11, D22, D33), no convection.
    Enhancement,
    /// Mumford's direction process: a = (1, 0, 0), D = diag(0, 0, D33).
    Completion,
}

impl Case {
    /// Period multiplier of the angular Mathieu variable: the enhancement
    /// operator is π-periodic in φ − θ, the completion operator 2π-periodic.
    pub fn mu(self) -> f64 {
        match self {
            Case::Enhancement => 1.0,
            Case::Completion => 2.0,
        }
    }
}

/// Coefficients of Q = Σ −a_i A_i + D_ii A_i², plus the resolvent and
/// regularisation settings shared by every solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionParams {
    pub d11: f64,
    pub d22: f64,
    pub d33: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Decay rate of the exponential travelling time (1/time).
    pub alpha: f64,
    /// Gamma order of the travelling time.
    pub k: u32,
    /// Spatial Gaussian scale (length²): the input spike is G_s ∗ δ.
    pub s: f64,
    /// Evolution time for fixed-time kernels.
    pub t: f64,
}

impl DiffusionParams {
    pub fn enhancement(d11: f64, d33: f64, alpha: f64) -> Self {
        DiffusionParams { d11, d22: 0.0, d33, a1: 0.0, a2: 0.0, a3: 0.0, alpha, k: 1, s: 0.5, t: 0.0 }
    }

    pub fn completion(d33: f64, alpha: f64) -> Self {
        DiffusionParams { d11: 0.0, d22: 0.0, d33, a1: 1.0, a2: 0.0, a3: 0.0, alpha, k: 1, s: 0.5, t: 0.0 }
    }

    pub fn with_d22(mut self, d22: f64) -> Self {
        self.d22 = d22;
        self
    }

    pub fn with_s(mut self, s: f64) -> Self {
        self.s = s;
        self
    }

    /// Gaussian scale from a spatial standard deviation: s = σ²/2.
    pub fn with_sigma(self, sigma: f64) -> Self {
        self.with_s(0.5 * sigma * sigma)
    }

    pub fn with_k(mut self, k: u32) -> Self {
        self.k = k;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn sigma(&self) -> f64 {
        (2.0 * self.s).sqrt()
    }

    /// Classify a parameter set; errors when it matches neither case.
    pub fn case(&self) -> Result<Case> {
        let conv = self.a1 != 0.0 || self.a2 != 0.0 || self.a3 != 0.0;
        if !conv {
            Ok(Case::Enhancement)
        } else if self.a1 == 1.0 && self.a2 == 0.0 && self.a3 == 0.0 && self.d11 == 0.0 && self.d22 == 0.0 {
            Ok(Case::Completion)
        } else {
            Err(Se2Error::InvalidParams(format!(
                "unsupported generator: D=({},{},{}), a=({},{},{})",
                self.d11, self.d22, self.d33, self.a1, self.a2, self.a3
            )))
        }
    }

    /// Check the Hörmander-type conditions and basic ranges.
    ///
    /// `allow_fundamental` permits α = 0 (fundamental-solution mode).
    pub fn validate(&self, allow_fundamental: bool) -> Result<Case> {
        let bad = |m: &str| Err(Se2Error::InvalidParams(m.to_string()));
        for (name, v) in [("D11", self.d11), ("D22", self.d22), ("D33", self.d33)] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(&format!("{name} must be finite and ≥ 0"));
            }
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad("alpha must be finite and ≥ 0");
        }
        if self.alpha == 0.0 && !allow_fundamental {
            return bad("alpha must be > 0 for resolvent kernels");
        }
        if self.k == 0 {
            return bad("Gamma order k must be ≥ 1");
        }
        if !(self.s >= 0.0) {
            return bad("Gaussian scale s must be ≥ 0");
        }
        let case = self.case()?;
        match case {
            Case::Enhancement if self.d11 <= 0.0 || self.d33 <= 0.0 => bad("enhancement requires D11 > 0 and D33 > 0"),
            Case::Completion if self.d33 <= 0.0 => bad("completion requires D33 > 0"),
            _ => Ok(case),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        assert_eq!(DiffusionParams::enhancement(1.0, 0.05, 0.1).validate(false).unwrap(), Case::Enhancement);
        assert_eq!(DiffusionParams::completion(0.08, 0.01).validate(false).unwrap(), Case::Completion);
        assert!(DiffusionParams::enhancement(1.0, 0.0, 0.1).validate(false).is_err());
        assert!(DiffusionParams::enhancement(1.0, 0.05, 0.0).validate(false).is_err());
        assert!(DiffusionParams::enhancement(1.0, 0.05, 0.0).validate(true).is_ok());
        let mut p = DiffusionParams::completion(0.08, 0.01);
        p.a2 = 0.3;
        assert!(p.validate(false).is_err());
    }

    #[test]
    fn sigma_round_trip() {
        let p = DiffusionParams::enhancement(1.0, 0.05, 0.1).with_sigma(1.7);
        assert!((p.sigma() - 1.7).abs() < 1e-15);
    }
}
