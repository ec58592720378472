use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sampling::Replacement;

/// Curvature constants of a finite-sum objective.
///
/// `K_i` bound each component Hessian, `gamma` and `big_k` bound the Hessian
/// of the full objective from below and above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEstimates {
    pub gamma: f64,
    pub big_k: f64,
    pub per_component_k: Vec<f64>,
    /// Prefix sums of `K_i` sorted in decreasing order; `prefix[q]` is the
    /// sum of the `q` largest.
    prefix: Vec<f64>,
    pub strongly_convex: bool,
    /// Hessian-Lipschitz constant, supplied by the user when known.
    pub lipschitz_l: Option<f64>,
    /// Radius of the ball the bounds were computed over, if any.
    pub radius: Option<f64>,
}

impl ConditionEstimates {
    pub fn new(per_component_k: Vec<f64>, gamma: f64, big_k: f64) -> Result<Self> {
        if per_component_k.is_empty() {
            return Err(invalid("per_component_k", "must be non-empty"));
        }
        if per_component_k.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
            return Err(invalid("per_component_k", "entries must be finite and >= 0"));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(invalid("gamma", format!("{gamma} must be finite and >= 0")));
        }
        if !(big_k.is_finite() && big_k >= gamma) {
            return Err(invalid("big_k", format!("{big_k} must be finite and >= gamma = {gamma}")));
        }
        let mut sorted = per_component_k.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut prefix = Vec::with_capacity(sorted.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for k in sorted {
            acc += k;
            prefix.push(acc);
        }
        Ok(Self {
            gamma,
            big_k,
            per_component_k,
            prefix,
            strongly_convex: gamma > 0.0,
            lipschitz_l: None,
            radius: None,
        })
    }

    /// Same, with `K` taken as the mean of the `K_i` (always a valid bound).
    pub fn from_components(per_component_k: Vec<f64>, gamma: f64) -> Result<Self> {
        let mean = per_component_k.iter().sum::<f64>() / per_component_k.len().max(1) as f64;
        Self::new(per_component_k, gamma, mean.max(gamma))
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz_l = Some(l);
        self
    }

    pub fn with_radius(mut self, r: Option<f64>) -> Self {
        self.radius = r;
        self
    }

    pub fn n(&self) -> usize {
        self.per_component_k.len()
    }

    /// Mean of the `q` largest `K_i`; `q` is clamped to `[1, n]`.
    pub fn khat(&self, q: usize) -> f64 {
        let q = q.clamp(1, self.n());
        self.prefix[q] / q as f64
    }

    pub fn kappa(&self) -> f64 {
        self.big_k / self.gamma
    }

    pub fn kappa_q(&self, q: usize) -> f64 {
        self.khat(q) / self.gamma
    }

    pub fn kappa1(&self) -> f64 {
        self.kappa_q(1)
    }

    /// Sampling condition number for a sample of `size` drawn in `mode`.
    pub fn kappa_tilde(&self, mode: Replacement, size: usize) -> f64 {
        match mode {
            Replacement::With => self.kappa1(),
            Replacement::Without => self.kappa_q(size),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_example() {
        let c = ConditionEstimates::from_components(vec![4.0, 2.0, 2.0, 2.0], 1.0).unwrap();
        assert_eq!(c.kappa1(), 4.0);
        assert_eq!(c.khat(2), 3.0);
        assert_eq!(c.kappa_tilde(Replacement::Without, 2), 3.0);
        assert_eq!(c.kappa_tilde(Replacement::With, 2), 4.0);
        assert_eq!(c.khat(4), 2.5);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ConditionEstimates::new(vec![], 1.0, 1.0).is_err());
        assert!(ConditionEstimates::new(vec![1.0], 2.0, 1.0).is_err());
        assert!(ConditionEstimates::new(vec![-1.0], 0.0, 1.0).is_err());
        let flat = ConditionEstimates::new(vec![1.0], 0.0, 1.0).unwrap();
        assert!(!flat.strongly_convex);
        assert!(flat.kappa().is_infinite());
    }

    proptest! {
        #[test]
        fn kappa_monotone_in_q(ks in prop::collection::vec(0.01f64..100.0, 1..40), gamma in 0.001f64..0.01) {
            let c = ConditionEstimates::from_components(ks.clone(), gamma).unwrap();
            let n = ks.len();
            prop_assert!(c.kappa() <= c.kappa_q(n) * (1.0 + 1e-12));
            for q in 1..=n {
                for r in q..=n {
                    prop_assert!(c.kappa() <= c.kappa_q(r) * (1.0 + 1e-12));
                    prop_assert!(c.kappa_q(r) <= c.kappa_q(q) * (1.0 + 1e-12));
                }
            }
        }
    }
}
