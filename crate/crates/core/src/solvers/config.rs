use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, invalid, Result, SsnError};
use crate::linesearch::LineSearchParams;
use crate::linsolve::InexactnessSpec;
use crate::model::ConditionEstimates;
use crate::sampling::Replacement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    /// Hessian sub-sampling, lemma-sized samples.
    SsnHessian,
    /// Hessian sub-sampling with an eigenvalue floor.
    SsnSpectral,
    /// Hessian sub-sampling with a ridge shift.
    SsnRidge,
    /// Hessian and gradient sub-sampling with the sigma stop rule.
    SsnFull,
    Gd,
    Agd,
    Bfgs,
    Lbfgs { memory: usize },
    Newton,
}

impl Variant {
    pub fn name(&self) -> String {
        match self {
            Variant::SsnHessian => "ssn-hessian".into(),
            Variant::SsnSpectral => "ssn-spectral".into(),
            Variant::SsnRidge => "ssn-ridge".into(),
            Variant::SsnFull => "ssn-full".into(),
            Variant::Gd => "gd".into(),
            Variant::Agd => "agd".into(),
            Variant::Bfgs => "bfgs".into(),
            Variant::Lbfgs { memory } => format!("lbfgs:{memory}"),
            Variant::Newton => "newton".into(),
        }
    }

    pub fn is_subsampled(&self) -> bool {
        matches!(
            self,
            Variant::SsnHessian | Variant::SsnSpectral | Variant::SsnRidge | Variant::SsnFull
        )
    }

    /// Whether the variant needs curvature constants to run.
    pub fn needs_estimates(&self) -> bool {
        self.is_subsampled() || matches!(self, Variant::Gd | Variant::Agd)
    }
}

impl std::str::FromStr for Variant {
    type Err = SsnError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let (head, arg) = match lower.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (lower.as_str(), None),
        };
        let v = match head {
            "ssn-hessian" | "ssn-h" => Variant::SsnHessian,
            "ssn-spectral" | "ssn-s" => Variant::SsnSpectral,
            "ssn-ridge" | "ssn-r" => Variant::SsnRidge,
            "ssn-full" | "ssn-hg" => Variant::SsnFull,
            "gd" => Variant::Gd,
            "agd" => Variant::Agd,
            "bfgs" => Variant::Bfgs,
            "lbfgs" | "l-bfgs" => {
                let memory = match arg {
                    Some(a) => a
                        .parse()
                        .map_err(|_| invalid("solver", format!("bad L-BFGS memory `{a}`")))?,
                    None => 10,
                };
                return Ok(Variant::Lbfgs { memory });
            }
            "newton" => Variant::Newton,
            other => return Err(invalid("solver", format!("unknown solver `{other}`"))),
        };
        if arg.is_some() {
            return Err(invalid("solver", format!("`{head}` takes no argument")));
        }
        Ok(v)
    }
}

/// How a per-iteration sample size is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum SampleSizing {
    /// From the concentration lemma with the configured `eps` and `delta`.
    Lemma,
    /// `ceil(fraction * n)`.
    Fraction(f64),
    Count(usize),
}

impl SampleSizing {
    fn validate(&self, name: &'static str) -> Result<()> {
        match *self {
            SampleSizing::Lemma => Ok(()),
            SampleSizing::Fraction(f) if f > 0.0 && f <= 1.0 => Ok(()),
            SampleSizing::Fraction(f) => Err(invalid(name, format!("fraction {f} must lie in (0, 1]"))),
            SampleSizing::Count(0) => Err(invalid(name, "count must be >= 1")),
            SampleSizing::Count(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Eps2Schedule {
    Constant,
    /// `eps2_k = rho2 * eps2_{k-1}`
    Geometric { rho2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub variant: Variant,
    /// Hessian-lemma accuracy for the Hessian-only variants.
    pub eps: f64,
    /// Hessian-lemma accuracy when the gradient is also sampled.
    pub eps1: f64,
    /// Initial gradient accuracy when the gradient is sampled.
    pub eps2: f64,
    pub delta: f64,
    pub line_search: LineSearchParams,
    /// Inexact solves when set; exact Cholesky otherwise.
    pub inexact: Option<InexactnessSpec>,
    /// Regularization added on top of the floor (spectral) or used as the shift (ridge).
    pub lambda_user: f64,
    /// Stop multiplier; the smallest value with a guarantee when unset.
    pub sigma: Option<f64>,
    pub eps2_schedule: Eps2Schedule,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
    pub replacement: Replacement,
    pub hessian_sample: SampleSizing,
    pub gradient_sample: SampleSizing,
    /// Fixed step for gradient descent; `1/K` when unset.
    pub gd_step: Option<f64>,
    /// Wall-clock budget in seconds.
    pub time_limit: Option<f64>,
    /// Also record `lambda_min` of every sampled Hessian and the full
    /// gradient norm of gradient-sampled runs. Excluded from timings.
    pub diagnostics: bool,
    pub estimates: Option<ConditionEstimates>,
    /// Ball radius for curvature bounds; defaults to `2 ||x0|| + 1` where one is needed.
    pub radius: Option<f64>,
    pub record_iterates: bool,
    /// Redraws allowed when a sampled Hessian is not positive definite.
    pub resample_retries: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            variant: Variant::SsnHessian,
            eps: 0.5,
            eps1: 0.5,
            eps2: 1e-3,
            delta: 0.1,
            line_search: LineSearchParams::default(),
            inexact: None,
            lambda_user: 0.0,
            sigma: None,
            eps2_schedule: Eps2Schedule::Constant,
            max_iters: 100,
            grad_tol: 1e-8,
            seed: 0,
            replacement: Replacement::Without,
            hessian_sample: SampleSizing::Lemma,
            gradient_sample: SampleSizing::Lemma,
            gd_step: None,
            time_limit: None,
            diagnostics: false,
            estimates: None,
            radius: None,
            record_iterates: false,
            resample_retries: 3,
        }
    }
}

impl SolverConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_open_unit("eps", self.eps)?;
        check_open_unit("eps1", self.eps1)?;
        check_open_unit("eps2", self.eps2)?;
        check_open_unit("delta", self.delta)?;
        self.line_search.validate()?;
        if let Some(spec) = &self.inexact {
            spec.validate()?;
        }
        if !(self.lambda_user >= 0.0 && self.lambda_user.is_finite()) {
            return Err(invalid("lambda", format!("{} must be finite and >= 0", self.lambda_user)));
        }
        if let Some(s) = self.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(invalid("sigma", format!("{s} must be finite and >= 0")));
            }
        }
        if let Eps2Schedule::Geometric { rho2 } = self.eps2_schedule {
            check_open_unit("rho2", rho2)?;
        }
        if !(self.grad_tol >= 0.0) {
            return Err(invalid("grad_tol", format!("{} must be >= 0", self.grad_tol)));
        }
        self.hessian_sample.validate("hessian_sample")?;
        self.gradient_sample.validate("gradient_sample")?;
        if let Some(step) = self.gd_step {
            if !(step > 0.0 && step.is_finite()) {
                return Err(invalid("gd_step", format!("{step} must be finite and > 0")));
            }
        }
        if let Some(t) = self.time_limit {
            if !(t > 0.0) {
                return Err(invalid("time_limit", format!("{t} must be > 0")));
            }
        }
        if let Some(r) = self.radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid("radius", format!("{r} must be finite and > 0")));
            }
        }
        match self.variant {
            Variant::SsnFull if self.eps1 > 0.5 => {
                Err(invalid("eps1", format!("{} must be <= 1/2 with gradient sampling", self.eps1)))
            }
            Variant::Lbfgs { memory: 0 } => Err(invalid("memory", "L-BFGS memory must be >= 1")),
            Variant::SsnRidge if self.lambda_user == 0.0 && self.hessian_sample != SampleSizing::Lemma => {
                log::warn!("ridge shift of zero with a non-lemma sample may meet singular Hessians");
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in [
            Variant::SsnHessian,
            Variant::SsnSpectral,
            Variant::SsnRidge,
            Variant::SsnFull,
            Variant::Gd,
            Variant::Agd,
            Variant::Bfgs,
            Variant::Lbfgs { memory: 7 },
            Variant::Newton,
        ] {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("lbfgs".parse::<Variant>().unwrap(), Variant::Lbfgs { memory: 10 });
        assert!("sgd".parse::<Variant>().is_err());
        assert!("gd:3".parse::<Variant>().is_err());
    }

    #[test]
    fn validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let mut c = SolverConfig::new(Variant::SsnFull);
        c.eps1 = 0.6;
        assert!(c.validate().is_err());
        let c = SolverConfig {
            hessian_sample: SampleSizing::Fraction(1.5),
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = SolverConfig {
            inexact: Some(InexactnessSpec {
                theta1: 1.5,
                theta2: 0.5,
                max_iters: 10,
            }),
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = SolverConfig {
            variant: Variant::Lbfgs { memory: 5 },
            hessian_sample: SampleSizing::Fraction(0.2),
            eps2_schedule: Eps2Schedule::Geometric { rho2: 0.5 },
            ..Default::default()
        };
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<SolverConfig>(&s).unwrap(), c);
        let partial: SolverConfig = serde_json::from_str(r#"{"variant":{"kind":"gd"},"seed":4}"#).unwrap();
        assert_eq!(partial.variant, Variant::Gd);
        assert_eq!(partial.seed, 4);
    }
}
