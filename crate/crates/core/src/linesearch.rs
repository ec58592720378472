//! Armijo backtracking over the grid `alpha_hat * shrink^j`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, invalid, Result, SsnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchParams {
    pub beta: f64,
    pub alpha_hat: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self {
            beta: 0.25,
            alpha_hat: 1.0,
            shrink: 0.5,
            max_backtracks: 60,
        }
    }
}

impl LineSearchParams {
    pub fn validate(&self) -> Result<()> {
        check_open_unit("beta", self.beta)?;
        check_open_unit("shrink", self.shrink)?;
        if !(self.alpha_hat >= 1.0 && self.alpha_hat.is_finite()) {
            return Err(invalid("alpha_hat", format!("{} must be finite and >= 1", self.alpha_hat)));
        }
        if self.max_backtracks == 0 {
            return Err(invalid("max_backtracks", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub alpha: f64,
    /// Number of objective evaluations spent.
    pub trials: usize,
    /// Objective value at the accepted point.
    pub value: f64,
}

/// Largest grid step with `F(x + alpha p) <= F(x) + alpha beta p^T g_used`.
///
/// Trial points where `value_fn` fails with a non-finite value are rejected
/// like any other failed test.
pub fn armijo<F>(
    mut value_fn: F,
    x: &DVector<f64>,
    fx: f64,
    p: &DVector<f64>,
    g_used: &DVector<f64>,
    params: &LineSearchParams,
) -> Result<Step>
where
    F: FnMut(&DVector<f64>) -> Result<f64>,
{
    params.validate()?;
    if x.len() != p.len() || p.len() != g_used.len() {
        return Err(SsnError::DimensionMismatch {
            expected: x.len(),
            got: p.len(),
        });
    }
    let slope = p.dot(g_used);
    if !(slope < 0.0) {
        return Err(SsnError::NotDescent(slope));
    }
    let mut alpha = params.alpha_hat;
    let mut last_value = f64::NAN;
    for j in 0..params.max_backtracks {
        let trial = x + p * alpha;
        match value_fn(&trial) {
            Ok(v) => {
                last_value = v;
                if v <= fx + alpha * params.beta * slope {
                    return Ok(Step {
                        alpha,
                        trials: j + 1,
                        value: v,
                    });
                }
            }
            Err(SsnError::NonFinite(_)) => last_value = f64::NAN,
            Err(e) => return Err(e),
        }
        alpha *= params.shrink;
    }
    Err(SsnError::LineSearchFailed {
        trials: params.max_backtracks,
        last_alpha: alpha / params.shrink,
        last_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(v: f64) -> DVector<f64> {
        DVector::from_vec(vec![v])
    }

    fn quad(k: f64) -> impl Fn(&DVector<f64>) -> Result<f64> {
        move |x| Ok(0.5 * k * x[0] * x[0])
    }

    #[test]
    fn newton_step_on_quadratic_is_accepted() {
        let params = LineSearchParams::default();
        let s = armijo(quad(1.0), &scalar(2.0), 2.0, &scalar(-2.0), &scalar(2.0), &params).unwrap();
        assert_eq!(s.alpha, 1.0);
        assert_eq!(s.trials, 1);
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn gradient_step_on_stiff_quadratic() {
        let params = LineSearchParams {
            beta: 0.5,
            ..Default::default()
        };
        let s = armijo(quad(100.0), &scalar(1.0), 50.0, &scalar(-100.0), &scalar(100.0), &params).unwrap();
        assert_eq!(s.alpha, 0.0078125);
        assert_eq!(s.trials, 8);
    }

    #[test]
    fn rejects_ascent_and_reports_failure() {
        let params = LineSearchParams::default();
        assert!(matches!(
            armijo(quad(1.0), &scalar(1.0), 0.5, &scalar(1.0), &scalar(1.0), &params),
            Err(SsnError::NotDescent(_))
        ));
        // lying gradient: claims descent where F increases
        let params = LineSearchParams {
            max_backtracks: 5,
            ..Default::default()
        };
        let r = armijo(|_| Ok(10.0), &scalar(1.0), 0.5, &scalar(-1.0), &scalar(1.0), &params);
        assert!(matches!(r, Err(SsnError::LineSearchFailed { trials: 5, .. })));
    }

    #[test]
    fn non_finite_trials_are_rejected() {
        let f = |x: &DVector<f64>| {
            if x[0] < -0.5 {
                Err(SsnError::NonFinite("objective value"))
            } else {
                Ok(0.5 * x[0] * x[0])
            }
        };
        let s = armijo(f, &scalar(1.0), 0.5, &scalar(-4.0), &scalar(1.0), &LineSearchParams::default()).unwrap();
        assert!(s.alpha <= 0.375);
    }

    #[test]
    fn parameter_validation() {
        for bad in [
            LineSearchParams { beta: 1.0, ..Default::default() },
            LineSearchParams { alpha_hat: 0.5, ..Default::default() },
            LineSearchParams { shrink: 0.0, ..Default::default() },
            LineSearchParams { max_backtracks: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    proptest! {
        #[test]
        fn accepted_step_is_armijo_and_near_supremum(
            k in 0.01f64..1e4,
            x0 in -10.0f64..10.0,
            scale in 0.01f64..100.0,
            beta in 0.01f64..0.99,
            alpha_hat in 1.0f64..4.0,
        ) {
            prop_assume!(x0.abs() > 1e-3);
            let x = scalar(x0);
            let g = scalar(k * x0);
            let p = scalar(-scale * k * x0);
            let fx = 0.5 * k * x0 * x0;
            let params = LineSearchParams { beta, alpha_hat, ..Default::default() };
            let s = armijo(quad(k), &x, fx, &p, &g, &params).unwrap();
            let slope = p.dot(&g);
            let fnew = 0.5 * k * (x0 + s.alpha * p[0]).powi(2);
            prop_assert!(fnew <= fx + s.alpha * beta * slope);
            prop_assert!(s.alpha <= alpha_hat);
            // on a 1-D quadratic the feasible set is alpha <= 2(1 - beta)/(scale k)
            let sup = (2.0 * (1.0 - beta) / (scale * k)).min(alpha_hat);
            prop_assert!(s.alpha >= 0.5 * sup * (1.0 - 1e-12));
        }
    }
}
