//! Closed-form convergence constants: rate factors, step-size floors,
//! inexactness thresholds and local iteration counts.

use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, invalid, Result, SsnError};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RatePrediction {
    /// Contraction `F_{k+1} - F* <= (1 - rho)(F_k - F*)`.
    pub rho: f64,
    /// Guaranteed lower bound on the accepted step size.
    pub alpha_floor: f64,
    pub theta1_max: Option<f64>,
    pub sigma_min: Option<f64>,
    pub k_local: Option<u64>,
    pub q1: Option<f64>,
    pub q2: Option<f64>,
}

fn check_at_least_one(name: &'static str, v: f64) -> Result<()> {
    if v >= 1.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("{v} must be finite and >= 1")))
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("{v} must be finite and > 0")))
    }
}

fn check_nonneg(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("{v} must be finite and >= 0")))
    }
}

fn check_unit_closed_open(name: &'static str, v: f64) -> Result<()> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(name, format!("{v} must lie in [0, 1)")))
    }
}

/// Exact-solve Hessian sub-sampling with lemma-sized samples.
pub fn rate_alg1(beta: f64, eps: f64, kappa: f64, kappa_tilde: f64, alpha: f64) -> Result<RatePrediction> {
    check_open_unit("beta", beta)?;
    check_open_unit("eps", eps)?;
    check_at_least_one("kappa", kappa)?;
    check_at_least_one("kappa_tilde", kappa_tilde)?;
    check_positive("alpha", alpha)?;
    Ok(RatePrediction {
        rho: 2.0 * alpha * beta / kappa_tilde,
        alpha_floor: 2.0 * (1.0 - beta) * (1.0 - eps) / kappa,
        ..Default::default()
    })
}

/// `sqrt((1 - eps) / (4 kappa_tilde))`
pub fn alg1_theta1_threshold(eps: f64, kappa_tilde: f64) -> f64 {
    ((1.0 - eps) / (4.0 * kappa_tilde)).sqrt()
}

/// Inexact-solve variant; the rate switches formula at the `theta1` threshold.
pub fn rate_alg1_inexact(
    beta: f64,
    eps: f64,
    theta1: f64,
    theta2: f64,
    kappa: f64,
    kappa_tilde: f64,
    alpha: f64,
) -> Result<RatePrediction> {
    check_open_unit("beta", beta)?;
    check_open_unit("eps", eps)?;
    check_unit_closed_open("theta1", theta1)?;
    check_unit_closed_open("theta2", theta2)?;
    check_at_least_one("kappa", kappa)?;
    check_at_least_one("kappa_tilde", kappa_tilde)?;
    check_positive("alpha", alpha)?;
    let threshold = alg1_theta1_threshold(eps, kappa_tilde);
    let rho = if theta1 <= threshold {
        alpha * beta / kappa_tilde
    } else {
        alg1_inexact_loose_rho(beta, eps, theta1, theta2, kappa_tilde, alpha)
    };
    Ok(RatePrediction {
        rho,
        alpha_floor: 2.0 * (1.0 - theta2) * (1.0 - beta) * (1.0 - eps) / kappa,
        theta1_max: Some(threshold),
        ..Default::default()
    })
}

/// Rate for `theta1` above the threshold:
/// `2 (1 - theta2)(1 - theta1)^2 (1 - eps) alpha beta / kappa_tilde^2`.
pub fn alg1_inexact_loose_rho(beta: f64, eps: f64, theta1: f64, theta2: f64, kappa_tilde: f64, alpha: f64) -> f64 {
    2.0 * (1.0 - theta2) * (1.0 - theta1).powi(2) * (1.0 - eps) * alpha * beta / (kappa_tilde * kappa_tilde)
}

/// Spectral floor with arbitrary sample size.
pub fn rate_spectral(
    beta: f64,
    theta2: f64,
    lambda: f64,
    big_k: f64,
    khat: f64,
    gamma: f64,
    alpha: f64,
) -> Result<RatePrediction> {
    check_open_unit("beta", beta)?;
    check_unit_closed_open("theta2", theta2)?;
    check_positive("lambda", lambda)?;
    check_positive("K", big_k)?;
    check_positive("Khat", khat)?;
    check_nonneg("gamma", gamma)?;
    check_positive("alpha", alpha)?;
    let m = khat.max(lambda);
    Ok(RatePrediction {
        rho: alpha * beta * gamma / m,
        alpha_floor: 2.0 * (1.0 - theta2) * (1.0 - beta) * lambda / big_k,
        theta1_max: Some(0.5 * (lambda / m).sqrt()),
        ..Default::default()
    })
}

/// Coefficient `c` in `F_{k+1} <= F_k - c ||grad F||^2` under the spectral floor.
pub fn spectral_decrease_coeff(alpha: f64, beta: f64, khat: f64, lambda: f64) -> f64 {
    alpha * beta / (2.0 * khat.max(lambda))
}

/// Step floor of the spectral floor when the sample follows the Hessian lemma.
pub fn spectral_lemma_alpha_floor(beta: f64, theta2: f64, eps: f64, kappa: f64) -> f64 {
    2.0 * (1.0 - theta2) * (1.0 - beta) * (1.0 - eps) / kappa
}

/// Ridge shift with arbitrary sample size. `lambda = 0` gives a zero
/// `theta1` budget, which forces exact solves.
pub fn rate_ridge(
    beta: f64,
    theta2: f64,
    lambda: f64,
    big_k: f64,
    khat: f64,
    gamma: f64,
    alpha: f64,
) -> Result<RatePrediction> {
    check_open_unit("beta", beta)?;
    check_unit_closed_open("theta2", theta2)?;
    check_nonneg("lambda", lambda)?;
    check_positive("K", big_k)?;
    check_positive("Khat", khat)?;
    check_nonneg("gamma", gamma)?;
    check_positive("alpha", alpha)?;
    Ok(RatePrediction {
        rho: alpha * beta * gamma / (khat + lambda),
        alpha_floor: 2.0 * (1.0 - theta2) * (1.0 - beta) * lambda / big_k,
        theta1_max: Some(0.5 * (lambda / (big_k + lambda)).sqrt()),
        ..Default::default()
    })
}

pub fn ridge_decrease_coeff(alpha: f64, beta: f64, khat: f64, lambda: f64) -> f64 {
    alpha * beta / (2.0 * (khat + lambda))
}

/// `theta1` budget of the ridge shift when the sample follows the Hessian lemma.
pub fn ridge_lemma_theta1(eps: f64, gamma: f64, lambda: f64, khat: f64) -> f64 {
    0.5 * (((1.0 - eps) * gamma + lambda) / (khat + lambda)).sqrt()
}

pub fn ridge_lemma_alpha_floor(beta: f64, theta2: f64, eps: f64, gamma: f64, lambda: f64, big_k: f64) -> f64 {
    2.0 * (1.0 - theta2) * (1.0 - beta) * ((1.0 - eps) * gamma + lambda) / big_k
}

/// Hessian and gradient sub-sampling. With `inexact = false` the thetas are ignored.
#[allow(clippy::too_many_arguments)]
pub fn rate_alg4(
    beta: f64,
    eps1: f64,
    theta1: f64,
    theta2: f64,
    kappa: f64,
    kappa_tilde: f64,
    alpha: f64,
    inexact: bool,
) -> Result<RatePrediction> {
    check_open_unit("beta", beta)?;
    check_open_unit("eps1", eps1)?;
    check_at_least_one("kappa", kappa)?;
    check_at_least_one("kappa_tilde", kappa_tilde)?;
    check_positive("alpha", alpha)?;
    if !inexact {
        return Ok(RatePrediction {
            rho: 8.0 * alpha * beta / (9.0 * kappa_tilde),
            alpha_floor: (1.0 - beta) * (1.0 - eps1) / kappa,
            sigma_min: Some(4.0 * kappa_tilde / (1.0 - beta)),
            ..Default::default()
        });
    }
    check_unit_closed_open("theta1", theta1)?;
    check_unit_closed_open("theta2", theta2)?;
    let threshold = alg1_theta1_threshold(eps1, kappa_tilde);
    let rho = if theta1 <= threshold {
        4.0 * alpha * beta / (9.0 * kappa_tilde)
    } else {
        8.0 * alpha * beta * (1.0 - theta2) * (1.0 - theta1).powi(2) * (1.0 - eps1) / (9.0 * kappa_tilde * kappa_tilde)
    };
    Ok(RatePrediction {
        rho,
        alpha_floor: (1.0 - theta2) * (1.0 - beta) * (1.0 - eps1) / kappa,
        theta1_max: Some(threshold),
        sigma_min: Some(4.0 * kappa_tilde / ((1.0 - theta1) * (1.0 - theta2) * (1.0 - beta))),
        ..Default::default()
    })
}

/// `1 - 2 eps - 2 (1 - eps) beta`, the margin shared by the local-rate constants.
fn local_margin(eps: f64, beta: f64) -> f64 {
    1.0 - 2.0 * eps - 2.0 * (1.0 - eps) * beta
}

/// Largest `eps2` keeping `q1` and `q2` real.
pub fn eps2_discriminant_bound(eps1: f64, beta: f64, kappa_tilde: f64, gamma: f64, lipschitz: f64) -> f64 {
    3.0 * (1.0 - eps1).sqrt() * gamma * gamma * local_margin(eps1, beta).powi(2)
        / (8.0 * lipschitz * kappa_tilde.sqrt())
}

/// Roots `(q1, q2)` bracketing the sub-sampled gradient norms for which the
/// unit step passes the Armijo test.
pub fn q1_q2(eps1: f64, eps2: f64, beta: f64, kappa_tilde: f64, gamma: f64, lipschitz: f64) -> Result<(f64, f64)> {
    check_open_unit("eps1", eps1)?;
    check_open_unit("beta", beta)?;
    check_nonneg("eps2", eps2)?;
    check_at_least_one("kappa_tilde", kappa_tilde)?;
    check_positive("gamma", gamma)?;
    check_positive("L", lipschitz)?;
    let q = 3.0 * (1.0 - eps1) * gamma * gamma * local_margin(eps1, beta);
    if !(q > 0.0) {
        return Err(invalid(
            "eps1",
            format!("1 - 2 eps1 - 2 (1 - eps1) beta = {:e} must be positive", local_margin(eps1, beta)),
        ));
    }
    let shift = 24.0 * (1.0 - eps1).powf(1.5) * gamma * gamma * lipschitz * eps2 * kappa_tilde.sqrt();
    let disc = q * q - shift;
    if disc < 0.0 {
        return Err(SsnError::NegativeDiscriminant {
            eps2,
            bound: eps2_discriminant_bound(eps1, beta, kappa_tilde, gamma, lipschitz),
        });
    }
    let root = disc.sqrt();
    // (q - root) rewritten as shift / (q + root) to avoid cancellation
    let q1 = shift / (2.0 * lipschitz * (q + root));
    let q2 = (q + root) / (2.0 * lipschitz);
    Ok((q1, q2))
}

/// Inputs to the local iteration counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalInputs {
    /// `F(x0) - F*`
    pub f0_gap: f64,
    pub lipschitz: f64,
    pub gamma: f64,
    pub big_k: f64,
    pub kappa: f64,
    pub kappa1: f64,
    pub kappa_tilde: f64,
    pub beta: f64,
    /// `eps` for Hessian-only sampling, `eps1` otherwise.
    pub eps: f64,
    /// Initial `eps2`; used only with gradient sampling.
    pub eps2: f64,
    pub rho0: f64,
    pub rho1: f64,
    /// Used only with gradient sampling.
    pub rho2: f64,
}

/// Largest admissible `eps` for the local-rate statements.
pub fn local_eps_bound(beta: f64, rho0: f64, kappa1: f64) -> f64 {
    ((1.0 - 2.0 * beta) / (2.0 * (1.0 - beta))).min(rho0 / (4.0 * (1.0 + rho0) * kappa1.sqrt()))
}

fn check_local_common(i: &LocalInputs) -> Result<()> {
    check_positive("F0 gap", i.f0_gap)?;
    check_positive("L", i.lipschitz)?;
    check_positive("gamma", i.gamma)?;
    check_positive("K", i.big_k)?;
    check_at_least_one("kappa", i.kappa)?;
    check_at_least_one("kappa1", i.kappa1)?;
    check_at_least_one("kappa_tilde", i.kappa_tilde)?;
    check_open_unit("eps", i.eps)?;
    let bound = local_eps_bound(i.beta, i.rho0, i.kappa1);
    if i.eps > bound {
        return Err(invalid("eps", format!("{} exceeds the local-rate bound {bound:e}", i.eps)));
    }
    Ok(())
}

fn log_ratio_count(numer: f64, contraction: f64) -> Result<u64> {
    if !(contraction > 0.0 && contraction < 1.0) {
        return Err(invalid("rate", format!("contraction {contraction} must lie in (0, 1)")));
    }
    let k = numer.ln() / (1.0 - contraction).ln();
    Ok(if k <= 0.0 { 0 } else { k.ceil() as u64 })
}

/// Iterations after which Hessian-only sub-sampling with unit steps enters
/// its problem-independent linear phase.
pub fn local_iteration_count_alg1(i: &LocalInputs) -> Result<u64> {
    check_local_common(i)?;
    if !(i.beta > 0.0 && i.beta < 0.5) {
        return Err(invalid("beta", format!("{} must lie in (0, 1/2)", i.beta)));
    }
    if !(0.0 < i.rho0 && i.rho0 < i.rho1 && i.rho1 < 1.0) {
        return Err(invalid("rho", "need 0 < rho0 < rho1 < 1"));
    }
    let e = i.eps;
    let numer = 2.0 * (1.0 - e).powi(2) * i.gamma.powi(4) * (i.rho1 - i.rho0).powi(2) * local_margin(e, i.beta).powi(2)
        / (i.big_k * i.lipschitz * i.lipschitz * i.f0_gap);
    let contraction = 4.0 * i.beta * (1.0 - i.beta) * (1.0 - e) / (i.kappa_tilde * i.kappa);
    log_ratio_count(numer, contraction)
}

/// Largest initial `eps2` admitted by the gradient-sampled local statement.
pub fn local_eps2_bound(i: &LocalInputs) -> f64 {
    let c = 2.0 * (i.rho2 - (i.rho0 + i.rho1)) * (1.0 - i.eps) * i.gamma / i.lipschitz;
    (1.0 - i.eps) * i.gamma * i.rho1 * local_margin(i.eps, i.beta).powi(2) * c / (6.0 * i.lipschitz * i.kappa_tilde.sqrt())
}

/// Same for Hessian and gradient sub-sampling; returns the count with `q1`, `q2`.
pub fn local_iteration_count_alg4(i: &LocalInputs) -> Result<RatePrediction> {
    check_local_common(i)?;
    if !(i.beta > 0.0 && i.beta <= 0.5) {
        return Err(invalid("beta", format!("{} must lie in (0, 1/2]", i.beta)));
    }
    for (name, r) in [("rho0", i.rho0), ("rho1", i.rho1), ("rho2", i.rho2)] {
        check_open_unit(name, r)?;
    }
    if !(i.rho0 + i.rho1 < i.rho2) {
        return Err(invalid("rho", "need rho0 + rho1 < rho2"));
    }
    let bound = local_eps2_bound(i);
    if !(i.eps2 > 0.0 && i.eps2 <= bound) {
        return Err(invalid("eps2", format!("{} must lie in (0, {bound:e}]", i.eps2)));
    }
    let (q1, q2) = q1_q2(i.eps, i.eps2, i.beta, i.kappa_tilde, i.gamma, i.lipschitz)?;
    let gap = i.rho2 - (i.rho0 + i.rho1);
    let numer = 2.0 * gap * gap * q2 * q2 / (9.0 * i.big_k * i.f0_gap);
    let contraction = 8.0 * i.beta * (1.0 - i.beta) * (1.0 - i.eps) / (9.0 * i.kappa * i.kappa_tilde);
    Ok(RatePrediction {
        k_local: Some(log_ratio_count(numer, contraction)?),
        q1: Some(q1),
        q2: Some(q2),
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn alg1_spot_values() {
        let floor = rate_alg1(0.25, 0.5, 2.0, 2.0, 1.0).unwrap().alpha_floor;
        assert_eq!(floor, 0.375);
        let r = rate_alg1(0.25, 0.5, 2.0, 2.0, floor).unwrap();
        assert_eq!((r.alpha_floor, r.rho), (0.375, 0.09375));
        let r = rate_alg1(0.5 - 1e-12, 0.5, 7.0, 7.0, 1.0).unwrap();
        assert!((r.rho - 1.0 / 7.0).abs() < 1e-12);
        assert!(rate_alg1(1e-9, 0.5, 2.0, 2.0, 1.0).unwrap().rho < 1e-8);
        assert!(rate_alg1(0.25, 0.5, 0.5, 2.0, 1.0).is_err());
    }

    #[test]
    fn alg1_inexact_values() {
        let r = rate_alg1_inexact(0.25, 0.5, 0.1, 0.5, 2.0, 2.0, 1.0).unwrap();
        assert_eq!(r.theta1_max, Some(0.25));
        assert_eq!(r.rho, 0.25 / 2.0);
        let near = rate_alg1_inexact(0.25, 0.5, 0.1, 1.0 - 1e-12, 2.0, 2.0, 1.0).unwrap();
        assert!(near.alpha_floor < 1e-11);
        // the loose formula at the boundary is never better than the tight one
        for kt in [1.0, 2.0, 10.0, 1e3] {
            for eps in [0.1, 0.5, 0.9] {
                let th = alg1_theta1_threshold(eps, kt);
                let tight = 0.3 * 0.25 / kt;
                let loose = alg1_inexact_loose_rho(0.25, eps, th, 0.0, kt, 0.3);
                assert!(loose <= tight);
            }
        }
        assert!(rate_alg1_inexact(0.25, 0.5, 1.0, 0.5, 2.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn regularized_values() {
        let r = rate_spectral(0.3, 0.5, 4.0, 10.0, 4.0, 0.5, 1.0).unwrap();
        assert_eq!(r.rho, 0.3 * 0.5 / 4.0);
        assert_eq!(r.theta1_max, Some(0.5));
        let r = rate_ridge(0.3, 0.5, 0.0, 10.0, 4.0, 0.5, 1.0).unwrap();
        assert_eq!(r.theta1_max, Some(0.0));
        assert_eq!(r.alpha_floor, 0.0);
        let r = rate_ridge(0.3, 0.5, 2.0, 10.0, 4.0, 0.5, 0.5).unwrap();
        assert!((r.rho - 0.5 * 0.3 * 0.5 / 6.0).abs() < 1e-15);
        assert!((r.theta1_max.unwrap() - 0.5 * (2.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!((ridge_lemma_theta1(0.5, 2.0, 1.0, 7.0) - 0.25).abs() < 1e-15);
        assert!((ridge_lemma_alpha_floor(0.5, 0.5, 0.5, 2.0, 1.0, 4.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn alg4_values() {
        let r = rate_alg4(0.25, 0.5, 0.0, 0.0, 2.0, 2.0, 1.0, false).unwrap();
        assert!((r.sigma_min.unwrap() - 32.0 / 3.0).abs() < 1e-14);
        let r = rate_alg4(0.5, 0.5, 0.0, 0.0, 1.0, 1.0, 1.0, false).unwrap();
        assert!((r.rho - 4.0 / 9.0).abs() < 1e-15);
        // loose inexact case at theta = 0 equals (1 - eps1) * exact / kappa_tilde
        for (kt, e) in [(3.0, 0.2), (50.0, 0.4), (2.0, 0.05)] {
            let exact = rate_alg4(0.3, e, 0.0, 0.0, kt, kt, 0.7, false).unwrap().rho;
            let loose = 8.0 * 0.7 * 0.3 * (1.0 - e) / (9.0 * kt * kt);
            assert!((loose - (1.0 - e) * exact / kt).abs() < 1e-15);
        }
        let r = rate_alg4(0.25, 0.5, 0.5, 0.5, 2.0, 2.0, 1.0, true).unwrap();
        assert!((r.sigma_min.unwrap() - 4.0 * 2.0 / (0.5 * 0.5 * 0.75)).abs() < 1e-12);
    }

    #[test]
    fn q_roots() {
        let (q1, q2) = q1_q2(0.1, 0.0, 0.2, 4.0, 0.5, 2.0).unwrap();
        assert_eq!(q1, 0.0);
        let margin: f64 = 1.0 - 0.2 - 2.0 * 0.9 * 0.2;
        assert!((q2 - 3.0 * 0.9 * 0.25 * margin / 2.0).abs() < 1e-15);
        let bound = eps2_discriminant_bound(0.1, 0.2, 4.0, 0.5, 2.0);
        assert!(q1_q2(0.1, bound * 0.999, 0.2, 4.0, 0.5, 2.0).is_ok());
        assert!(matches!(
            q1_q2(0.1, bound * 1.01, 0.2, 4.0, 0.5, 2.0),
            Err(SsnError::NegativeDiscriminant { .. })
        ));
        let mut last = (0.0, f64::INFINITY);
        for j in 0..=20 {
            let e2 = bound * j as f64 / 20.0;
            let (a, b) = q1_q2(0.1, e2, 0.2, 4.0, 0.5, 2.0).unwrap();
            assert!(a >= last.0 && b <= last.1 && a <= b * (1.0 + 1e-12));
            last = (a, b);
        }
    }

    fn local_inputs() -> LocalInputs {
        LocalInputs {
            f0_gap: 10.0,
            lipschitz: 1.0,
            gamma: 0.1,
            big_k: 1.0,
            kappa: 10.0,
            kappa1: 20.0,
            kappa_tilde: 20.0,
            beta: 0.25,
            eps: 0.005,
            eps2: 0.0,
            rho0: 0.2,
            rho1: 0.3,
            rho2: 0.9,
        }
    }

    #[test]
    fn local_counts() {
        let i = local_inputs();
        let k = local_iteration_count_alg1(&i).unwrap();
        // independent evaluation of the log ratio
        let numer = 2.0 * 0.995f64.powi(2) * 1e-4 * 0.01 * (1.0 - 0.01 - 2.0 * 0.995 * 0.25f64).powi(2) / 10.0;
        let den = (1.0 - 4.0 * 0.25 * 0.75 * 0.995 / 200.0f64).ln();
        assert_eq!(k, (numer.ln() / den).ceil() as u64);
        let mut j = i;
        j.eps = 0.5;
        assert!(local_iteration_count_alg1(&j).is_err());
        let mut j = i;
        j.eps2 = local_eps2_bound(&i) * 0.5;
        let r = local_iteration_count_alg4(&j).unwrap();
        assert!(r.k_local.unwrap() > 0);
        assert!(r.q1.unwrap() < r.q2.unwrap());
        j.eps2 = local_eps2_bound(&i) * 2.0;
        assert!(local_iteration_count_alg4(&j).is_err());
    }

    proptest! {
        #[test]
        fn rates_lie_in_unit_interval(
            beta in 0.01f64..0.49,
            eps in 0.01f64..0.99,
            kappa in 1.0f64..1e6,
            extra in 1.0f64..100.0,
            a in 0.0f64..1.0,
            t1 in 0.0f64..0.99,
            t2 in 0.0f64..0.99,
        ) {
            let kt = kappa * extra;
            let floor = rate_alg1(beta, eps, kappa, kt, 1.0).unwrap().alpha_floor;
            let alpha = floor + a * (1.0 - floor).max(0.0);
            let r = rate_alg1(beta, eps, kappa, kt, alpha).unwrap();
            prop_assert!(r.rho > 0.0 && r.rho < 1.0);
            let r = rate_alg1_inexact(beta, eps, t1, t2, kappa, kt, alpha).unwrap();
            prop_assert!(r.rho > 0.0 && r.rho < 1.0);
            for inexact in [false, true] {
                let r = rate_alg4(beta, eps, t1, t2, kappa, kt, alpha, inexact).unwrap();
                prop_assert!(r.rho > 0.0 && r.rho < 1.0);
            }
            let gamma = 1.0;
            let khat = kappa * extra;
            let r = rate_spectral(beta, t2, 0.5 + a, kappa, khat, gamma, alpha).unwrap();
            prop_assert!(r.rho > 0.0 && r.rho < 1.0);
            let r = rate_ridge(beta, t2, a, kappa, khat, gamma, alpha).unwrap();
            prop_assert!(r.rho > 0.0 && r.rho < 1.0);
        }
    }
}
