use serde::{Deserialize, Serialize};

use crate::error::{Result, SsnError};

/// Exponent ceiling for Poisson terms; `e^700` is finite in `f64`.
pub const EXP_CLAMP: f64 = 700.0;

/// GLM with canonical link, identified by its cumulant function `Phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `Phi(t) = t^2 / 2`
    Ridge,
    /// `Phi(t) = ln(1 + e^t)`
    Logistic,
    /// `Phi(t) = e^t`
    Poisson,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Ridge => "ridge",
            Family::Logistic => "logistic",
            Family::Poisson => "poisson",
        }
    }

    pub fn phi(self, t: f64) -> f64 {
        match self {
            Family::Ridge => 0.5 * t * t,
            Family::Logistic => {
                if t > 0.0 {
                    t + (-t).exp().ln_1p()
                } else {
                    t.exp().ln_1p()
                }
            }
            Family::Poisson => t.min(EXP_CLAMP).exp(),
        }
    }

    pub fn dphi(self, t: f64) -> f64 {
        match self {
            Family::Ridge => t,
            Family::Logistic => sigmoid(t),
            Family::Poisson => t.min(EXP_CLAMP).exp(),
        }
    }

    pub fn d2phi(self, t: f64) -> f64 {
        match self {
            Family::Ridge => 1.0,
            Family::Logistic => sigmoid(t) * sigmoid(-t),
            Family::Poisson => t.min(EXP_CLAMP).exp(),
        }
    }

    /// Lower bound of `Phi''(a^T x)` over `||x|| <= radius` for a row of norm
    /// `row_norm`. Zero when no positive bound is available.
    pub fn d2phi_lower(self, row_norm: f64, radius: Option<f64>) -> f64 {
        match (self, radius) {
            (Family::Ridge, _) => 1.0,
            (Family::Logistic, Some(r)) => self.d2phi(row_norm * r),
            (Family::Logistic, None) => 0.0,
            (Family::Poisson, Some(r)) => (-row_norm * r).max(-EXP_CLAMP).exp(),
            (Family::Poisson, None) => 0.0,
        }
    }

    /// Upper bound of `Phi''(a^T x)` over `||x|| <= radius`.
    pub fn d2phi_upper(self, row_norm: f64, radius: Option<f64>) -> Result<f64> {
        match (self, radius) {
            (Family::Ridge, _) => Ok(1.0),
            (Family::Logistic, _) => Ok(0.25),
            (Family::Poisson, Some(r)) => Ok((row_norm * r).min(EXP_CLAMP).exp()),
            (Family::Poisson, None) => Err(SsnError::InvalidParameter {
                name: "radius",
                reason: "Poisson curvature bounds need a domain radius".into(),
            }),
        }
    }

    /// Whether global curvature bounds exist without a domain radius.
    pub fn needs_radius(self) -> bool {
        matches!(self, Family::Poisson)
    }

    pub fn check_label(self, row: usize, b: f64) -> Result<()> {
        let ok = match self {
            Family::Ridge => b.is_finite(),
            Family::Logistic => b == 0.0 || b == 1.0,
            Family::Poisson => b >= 0.0 && b.fract() == 0.0 && b.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(SsnError::InvalidLabel {
                row,
                label: b,
                family: self.name(),
            })
        }
    }
}

impl std::str::FromStr for Family {
    type Err = SsnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ridge" | "rr" | "linear" => Ok(Family::Ridge),
            "logistic" | "lr" => Ok(Family::Logistic),
            "poisson" | "pr" => Ok(Family::Poisson),
            other => Err(SsnError::InvalidParameter {
                name: "family",
                reason: format!("unknown family `{other}`"),
            }),
        }
    }
}

/// Logistic function evaluated without overflow on either tail.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_tails_are_finite() {
        for t in [-1e4, -800.0, -30.0, 0.0, 30.0, 800.0, 1e4] {
            let f = Family::Logistic;
            assert!(f.phi(t).is_finite());
            assert!((0.0..=1.0).contains(&f.dphi(t)));
            assert!(f.d2phi(t) >= 0.0 && f.d2phi(t) <= 0.25);
        }
        assert_eq!(Family::Logistic.phi(1e4), 1e4);
        assert!((Family::Logistic.phi(0.0) - std::f64::consts::LN_2).abs() < 1e-16);
    }

    #[test]
    fn poisson_clamps() {
        assert!(Family::Poisson.phi(1e6).is_finite());
        assert_eq!(Family::Poisson.dphi(1e6), EXP_CLAMP.exp());
    }

    #[test]
    fn labels() {
        assert!(Family::Logistic.check_label(0, 0.5).is_err());
        assert!(Family::Poisson.check_label(0, 2.0).is_ok());
        assert!(Family::Poisson.check_label(0, -1.0).is_err());
        assert!(Family::Poisson.check_label(0, 1.5).is_err());
        assert!(Family::Ridge.check_label(0, -3.25).is_ok());
    }

    #[test]
    fn curvature_bounds_bracket_phi2() {
        let r = 1.5;
        for f in [Family::Ridge, Family::Logistic, Family::Poisson] {
            let norm = 0.8;
            for s in [-1.0, -0.3, 0.0, 0.6, 1.0] {
                let t = s * norm * r;
                let lo = f.d2phi_lower(norm, Some(r));
                let hi = f.d2phi_upper(norm, Some(r)).unwrap();
                assert!(lo <= f.d2phi(t) + 1e-15 && f.d2phi(t) <= hi + 1e-15);
            }
        }
    }
}
