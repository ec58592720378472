//! Sub-sampled Newton drivers.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Eps2Schedule, SampleSizing, SolverConfig, Variant};
use super::trace::{RunDiagnostics, StopFlag, Trace, TraceRecord};
use super::Recorder;
use crate::error::{invalid, Result, SsnError};
use crate::linesearch::armijo;
use crate::linsolve::{solve_exact, solve_inexact, InexactnessSpec};
use crate::model::{ConditionEstimates, FiniteSum};
use crate::regularize::{min_eigenvalue, ridge, spectral_floor_with, symmetric_eigen};
use crate::sampling::{
    draw, gradient_sample_size, hessian_sample_size, subsampled_gradient, subsampled_hessian, Replacement,
    SampleSet,
};
use crate::theory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Regularizer {
    None,
    Spectral,
    Ridge,
}

/// Curvature constants from the config, or computed from the model.
pub fn resolve_estimates<M: FiniteSum + ?Sized>(
    model: &M,
    cfg: &SolverConfig,
    x0: &DVector<f64>,
) -> Result<ConditionEstimates> {
    if let Some(e) = &cfg.estimates {
        if e.n() != model.n() {
            return Err(SsnError::DimensionMismatch {
                expected: model.n(),
                got: e.n(),
            });
        }
        return Ok(e.clone());
    }
    let radius = cfg
        .radius
        .or_else(|| model.needs_radius().then(|| 2.0 * x0.norm() + 1.0));
    model.curvature_constants(radius)
}

fn resolve_size(sizing: SampleSizing, n: usize, lemma: impl FnOnce() -> Result<usize>) -> Result<usize> {
    Ok(match sizing {
        SampleSizing::Lemma => lemma()?,
        SampleSizing::Fraction(f) => ((f * n as f64).ceil() as usize).max(1),
        SampleSizing::Count(c) => c,
    })
}

/// Draws a sample; sizes past `n` (or equal to `n` without replacement)
/// become the full index set.
fn draw_sample(n: usize, size: usize, mode: Replacement, rng: &mut ChaCha8Rng) -> Result<SampleSet> {
    if size > n {
        log::info!("sample size {size} exceeds n = {n}; using all components");
        return Ok(SampleSet::full(n));
    }
    if size == n && mode == Replacement::Without {
        return Ok(SampleSet::full(n));
    }
    draw(n, size, mode, rng)
}

pub(crate) struct Direction {
    pub p: DVector<f64>,
    pub residual_ratio: Option<f64>,
    pub descent_ratio: Option<f64>,
    pub cg_iterations: Option<usize>,
}

pub(crate) fn newton_direction(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    inexact: Option<&InexactnessSpec>,
) -> Result<Direction> {
    match inexact {
        None => Ok(Direction {
            p: solve_exact(h, &-g)?,
            residual_ratio: None,
            descent_ratio: None,
            cg_iterations: None,
        }),
        Some(spec) => {
            let s = solve_inexact(h, g, spec)?;
            Ok(Direction {
                p: s.direction,
                residual_ratio: Some(s.check.residual_ratio),
                descent_ratio: Some(s.check.descent_ratio),
                cg_iterations: Some(s.cg_iterations),
            })
        }
    }
}

fn rate_diagnostics(
    cfg: &SolverConfig,
    est: &ConditionEstimates,
    reg: Option<Regularizer>,
    kappa_tilde: f64,
    khat: f64,
) -> Option<theory::RatePrediction> {
    let beta = cfg.line_search.beta;
    let (t1, t2) = cfg.inexact.map_or((0.0, 0.0), |s| (s.theta1, s.theta2));
    let kappa = est.kappa();
    let r = match reg {
        Some(Regularizer::None) => match cfg.inexact {
            None => theory::rate_alg1(beta, cfg.eps, kappa, kappa_tilde, 1.0)
                .and_then(|r| theory::rate_alg1(beta, cfg.eps, kappa, kappa_tilde, r.alpha_floor)),
            Some(_) => theory::rate_alg1_inexact(beta, cfg.eps, t1, t2, kappa, kappa_tilde, 1.0)
                .and_then(|r| theory::rate_alg1_inexact(beta, cfg.eps, t1, t2, kappa, kappa_tilde, r.alpha_floor)),
        },
        Some(Regularizer::Spectral) => {
            let lam = cfg.lambda_user.max(est.gamma * (1.0 - cfg.eps));
            theory::rate_spectral(beta, t2, lam, est.big_k, khat, est.gamma, 1.0)
                .and_then(|r| theory::rate_spectral(beta, t2, lam, est.big_k, khat, est.gamma, r.alpha_floor))
        }
        Some(Regularizer::Ridge) => theory::rate_ridge(beta, t2, cfg.lambda_user, est.big_k, khat, est.gamma, 1.0)
            .and_then(|r| {
                theory::rate_ridge(beta, t2, cfg.lambda_user, est.big_k, khat, est.gamma, r.alpha_floor.max(1e-300))
            }),
        None => theory::rate_alg4(beta, cfg.eps1, t1, t2, kappa, kappa_tilde, 1.0, cfg.inexact.is_some())
            .and_then(|r| {
                theory::rate_alg4(beta, cfg.eps1, t1, t2, kappa, kappa_tilde, r.alpha_floor, cfg.inexact.is_some())
            }),
    };
    r.ok()
}

fn check_x0<M: FiniteSum + ?Sized>(model: &M, x0: &DVector<f64>) -> Result<()> {
    if x0.len() != model.dim() {
        return Err(SsnError::DimensionMismatch {
            expected: model.dim(),
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(SsnError::NonFinite("starting point"));
    }
    Ok(())
}

/// Hessian sub-sampling without regularization. Needs strong convexity.
pub fn run_ssn_hessian<M: FiniteSum + ?Sized>(model: &M, cfg: &SolverConfig, x0: &DVector<f64>) -> Result<Trace> {
    run_hessian_sampled(model, cfg, x0, Regularizer::None, "ssn-hessian")
}

/// Hessian sub-sampling with eigenvalues floored at
/// `max(lambda_min(H), 0) + lambda_user`.
pub fn run_ssn_spectral<M: FiniteSum + ?Sized>(model: &M, cfg: &SolverConfig, x0: &DVector<f64>) -> Result<Trace> {
    run_hessian_sampled(model, cfg, x0, Regularizer::Spectral, "ssn-spectral")
}

/// Hessian sub-sampling with `H + lambda_user I`.
pub fn run_ssn_ridge<M: FiniteSum + ?Sized>(model: &M, cfg: &SolverConfig, x0: &DVector<f64>) -> Result<Trace> {
    run_hessian_sampled(model, cfg, x0, Regularizer::Ridge, "ssn-ridge")
}

fn hessian_setup<M: FiniteSum + ?Sized>(
    model: &M,
    cfg: &SolverConfig,
    x0: &DVector<f64>,
    reg: Regularizer,
) -> Result<(ConditionEstimates, usize, f64, RunDiagnostics)> {
    let n = model.n();
    let p_dim = model.dim();
    let est = resolve_estimates(model, cfg, x0)?;
    if reg == Regularizer::None && !est.strongly_convex {
        return Err(invalid(
            "estimates",
            "Hessian sub-sampling without regularization needs gamma > 0; use the spectral or ridge variant",
        ));
    }
    if cfg.hessian_sample == SampleSizing::Lemma && !est.strongly_convex {
        return Err(invalid("hessian_sample", "lemma sizing needs gamma > 0; give a fraction or count"));
    }
    let size_h = resolve_size(cfg.hessian_sample, n, || {
        hessian_sample_size(est.kappa1(), cfg.eps, cfg.delta, p_dim)
    })?;
    let effective = size_h.min(n);
    let kappa_tilde = if cfg.replacement == Replacement::With && size_h <= n {
        est.kappa_tilde(Replacement::With, effective)
    } else {
        est.kappa_tilde(Replacement::Without, effective)
    };
    let khat = est.khat(effective);
    let mut diag = RunDiagnostics {
        gamma: Some(est.gamma),
        big_k: Some(est.big_k),
        kappa: est.strongly_convex.then(|| est.kappa()),
        kappa_tilde: est.strongly_convex.then_some(kappa_tilde),
        khat: Some(khat),
        nominal_sample_h: Some(size_h),
        ..Default::default()
    };
    if est.strongly_convex {
        diag.rate = rate_diagnostics(cfg, &est, Some(reg), kappa_tilde, khat);
    }
    if cfg.hessian_sample != SampleSizing::Lemma {
        diag.notes.push("Hessian sample size set directly, not from the lemma".into());
    }

    Ok((est, size_h, kappa_tilde, diag))
}

fn run_hessian_sampled<M: FiniteSum + ?Sized>(
    model: &M,
    cfg: &SolverConfig,
    x0: &DVector<f64>,
    reg: Regularizer,
    name: &str,
) -> Result<Trace> {
    cfg.validate()?;
    check_x0(model, x0)?;
    let n = model.n();
    let (est, size_h, kappa_tilde, diag) = hessian_setup(model, cfg, x0, reg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rec = Recorder::new(name, cfg.record_iterates, diag);
    let mut x = x0.clone();
    let mut f = model.value(&x)?;
    for k in 0.. {
        let g = match model.gradient(&x) {
            Ok(g) => g,
            Err(e) => return Ok(rec.fail(k, f, &x, e)),
        };
        let gn = g.norm();
        let mut r = TraceRecord::at(k, f, gn, rec.watch.nanos());
        r.grad_norm_full = Some(gn);
        if let Some(flag) = rec.should_stop(cfg, k, gn) {
            r.stopped = Some(flag);
            rec.push(r, &x);
            return Ok(rec.finish(x, flag, None));
        }

        let mut attempts = 0;
        let dir = loop {
            let step = (|| -> Result<Option<Direction>> {
                let s = draw_sample(n, size_h, cfg.replacement, &mut rng)?;
                r.sample_h = s.len();
                let h = subsampled_hessian(model, &x, &s)?;
                let hreg = match reg {
                    Regularizer::None => {
                        if cfg.diagnostics {
                            rec.watch.pause();
                            r.min_eig_h = Some(min_eigenvalue(&h)?);
                            rec.watch.resume();
                        }
                        r.theta1_budget = cfg
                            .inexact
                            .map(|_| theory::alg1_theta1_threshold(cfg.eps, kappa_tilde));
                        h
                    }
                    Regularizer::Spectral => {
                        let eig = symmetric_eigen(&h)?;
                        let lmin = eig.eigenvalues.min();
                        let lam = lmin.max(0.0) + cfg.lambda_user;
                        r.min_eig_h = Some(lmin);
                        r.lambda_applied = Some(lam);
                        r.theta1_budget = Some(if lam > 0.0 {
                            0.5 * (lam / lam.max(est.khat(s.len()))).sqrt()
                        } else {
                            0.0
                        });
                        if lam <= 0.0 {
                            return Ok(None);
                        }
                        spectral_floor_with(&h, &eig, lam)?.matrix
                    }
                    Regularizer::Ridge => {
                        if cfg.diagnostics {
                            rec.watch.pause();
                            r.min_eig_h = Some(min_eigenvalue(&h)?);
                            rec.watch.resume();
                        }
                        let lam = cfg.lambda_user;
                        r.lambda_applied = Some(lam);
                        r.theta1_budget = Some(0.5 * (lam / (est.big_k + lam)).sqrt());
                        ridge(&h, lam)?.matrix
                    }
                };
                match newton_direction(&hreg, &g, cfg.inexact.as_ref()) {
                    Ok(d) => Ok(Some(d)),
                    Err(SsnError::NotPositiveDefinite(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })();
            match step {
                Ok(Some(d)) => break d,
                Ok(None) if attempts < cfg.resample_retries => {
                    attempts += 1;
                    log::debug!("sampled Hessian not positive definite; redraw {attempts}");
                }
                Ok(None) => {
                    let e = SsnError::NotPositiveDefinite(format!(
                        "sampled Hessian singular after {} draws; use the spectral or ridge variant, or a larger sample",
                        attempts + 1
                    ));
                    r.stopped = Some(StopFlag::Error);
                    rec.push(r, &x);
                    return Ok(rec.finish(x, StopFlag::Error, Some(e.to_string())));
                }
                Err(e) => {
                    r.stopped = Some(StopFlag::Error);
                    rec.push(r, &x);
                    return Ok(rec.finish(x, StopFlag::Error, Some(e.to_string())));
                }
            }
        };
        r.residual_ratio = dir.residual_ratio;
        r.descent_ratio = dir.descent_ratio;
        r.cg_iterations = dir.cg_iterations;
        r.sample_g = n;
        let step = match armijo(|y| model.value(y), &x, f, &dir.p, &g, &cfg.line_search) {
            Ok(s) => s,
            Err(e) => {
                r.stopped = Some(StopFlag::Error);
                rec.push(r, &x);
                return Ok(rec.finish(x, StopFlag::Error, Some(e.to_string())));
            }
        };
        r.alpha = step.alpha;
        rec.push(r, &x);
        x.axpy(step.alpha, &dir.p, 1.0);
        f = step.value;
    }
    unreachable!("the iteration loop only exits by returning")
}

fn full_setup<M: FiniteSum + ?Sized>(
    model: &M,
    cfg: &SolverConfig,
    x0: &DVector<f64>,
) -> Result<(ConditionEstimates, usize, f64, RunDiagnostics)> {
    let n = model.n();
    let p_dim = model.dim();
    let est = resolve_estimates(model, cfg, x0)?;
    if !est.strongly_convex {
        return Err(invalid("estimates", "gradient and Hessian sub-sampling needs gamma > 0"));
    }
    let size_h = resolve_size(cfg.hessian_sample, n, || {
        hessian_sample_size(est.kappa1(), cfg.eps1, cfg.delta, p_dim)
    })?;
    let effective = size_h.min(n);
    let kappa_tilde = if cfg.replacement == Replacement::With && size_h <= n {
        est.kappa_tilde(Replacement::With, effective)
    } else {
        est.kappa_tilde(Replacement::Without, effective)
    };
    let rate = rate_diagnostics(cfg, &est, None, kappa_tilde, est.khat(effective));
    let sigma_min = rate.and_then(|r| r.sigma_min);
    let sigma = match (cfg.sigma, sigma_min) {
        (Some(s), Some(m)) => {
            if s < m {
                log::warn!("sigma = {s} is below {m}, the smallest value with a stop guarantee");
            }
            s
        }
        (Some(s), None) => s,
        (None, Some(m)) => m,
        (None, None) => return Err(invalid("sigma", "could not derive a default; set it explicitly")),
    };
    let mut diag = RunDiagnostics {
        gamma: Some(est.gamma),
        big_k: Some(est.big_k),
        kappa: Some(est.kappa()),
        kappa_tilde: Some(kappa_tilde),
        khat: Some(est.khat(effective)),
        nominal_sample_h: Some(size_h),
        sigma: Some(sigma),
        rate,
        notes: Vec::new(),
    };
    if cfg.hessian_sample != SampleSizing::Lemma || cfg.gradient_sample != SampleSizing::Lemma {
        diag.notes.push("sample sizes set directly, not from the lemmas".into());
    }

    Ok((est, size_h, kappa_tilde, diag))
}

/// Curvature constants and rate predictions a sub-sampled run would record,
/// computed without iterating.
pub fn predict_diagnostics<M: FiniteSum + ?Sized>(
    model: &M,
    cfg: &SolverConfig,
    x0: &DVector<f64>,
) -> Result<RunDiagnostics> {
    cfg.validate()?;
    check_x0(model, x0)?;
    let setup = match cfg.variant {
        Variant::SsnHessian => hessian_setup(model, cfg, x0, Regularizer::None)?,
        Variant::SsnSpectral => hessian_setup(model, cfg, x0, Regularizer::Spectral)?,
        Variant::SsnRidge => hessian_setup(model, cfg, x0, Regularizer::Ridge)?,
        Variant::SsnFull => full_setup(model, cfg, x0)?,
        other => return Err(invalid("variant", format!("{} has no rate prediction", other.name()))),
    };
    Ok(setup.3)
}

/// Hessian and gradient sub-sampling with the `sigma * eps2` stop rule.
pub fn run_ssn_full<M: FiniteSum + ?Sized>(model: &M, cfg: &SolverConfig, x0: &DVector<f64>) -> Result<Trace> {
    cfg.validate()?;
    check_x0(model, x0)?;
    let n = model.n();
    let (_, size_h, kappa_tilde, diag) = full_setup(model, cfg, x0)?;
    let sigma = diag.sigma.unwrap_or_default();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rec = Recorder::new("ssn-full", cfg.record_iterates, diag);
    let mut x = x0.clone();
    let mut f = model.value(&x)?;
    let mut eps2 = cfg.eps2;
    for k in 0.. {
        let outcome = (|| -> Result<(TraceRecord, DVector<f64>)> {
            let mut r = TraceRecord::at(k, f, 0.0, rec.watch.nanos());
            r.eps2 = Some(eps2);
            let bound = model.gradient_norm_bound(&x)?;
            r.bound_saturated = bound.saturated;
            let size_g = resolve_size(cfg.gradient_sample, n, || {
                gradient_sample_size(bound.value.max(f64::MIN_POSITIVE), eps2, cfg.delta)
            })?;
            let sg = draw_sample(n, size_g, cfg.replacement, &mut rng)?;
            r.sample_g = sg.len();
            let g = if sg.len() == n && sg.mode() == Replacement::Without {
                model.gradient(&x)?
            } else {
                subsampled_gradient(model, &x, &sg)?
            };
            r.grad_norm_used = g.norm();
            if cfg.diagnostics {
                rec.watch.pause();
                r.grad_norm_full = Some(model.gradient(&x)?.norm());
                rec.watch.resume();
            }
            Ok((r, g))
        })();
        let (mut r, g) = match outcome {
            Ok(v) => v,
            Err(e) => return Ok(rec.fail(k, f, &x, e)),
        };
        let gn = r.grad_norm_used;
        if gn < sigma * eps2 {
            r.stopped = Some(StopFlag::SigmaStop);
            rec.push(r, &x);
            return Ok(rec.finish(x, StopFlag::SigmaStop, None));
        }
        if let Some(flag) = rec.should_stop(cfg, k, gn) {
            r.stopped = Some(flag);
            rec.push(r, &x);
            return Ok(rec.finish(x, flag, None));
        }
        let dir = (|| -> Result<Direction> {
            let mut attempts = 0;
            loop {
                let s = draw_sample(n, size_h, cfg.replacement, &mut rng)?;
                r.sample_h = s.len();
                let h = subsampled_hessian(model, &x, &s)?;
                if cfg.diagnostics {
                    rec.watch.pause();
                    r.min_eig_h = Some(min_eigenvalue(&h)?);
                    rec.watch.resume();
                }
                match newton_direction(&h, &g, cfg.inexact.as_ref()) {
                    Err(SsnError::NotPositiveDefinite(_)) if attempts < cfg.resample_retries => attempts += 1,
                    Err(SsnError::NotPositiveDefinite(m)) => {
                        return Err(SsnError::NotPositiveDefinite(format!(
                            "{m}; sampled Hessian singular after {} draws",
                            attempts + 1
                        )))
                    }
                    other => return other,
                }
            }
        })();
        let dir = match dir {
            Ok(d) => d,
            Err(e) => {
                r.stopped = Some(StopFlag::Error);
                rec.push(r, &x);
                return Ok(rec.finish(x, StopFlag::Error, Some(e.to_string())));
            }
        };
        r.residual_ratio = dir.residual_ratio;
        r.descent_ratio = dir.descent_ratio;
        r.cg_iterations = dir.cg_iterations;
        r.theta1_budget = cfg
            .inexact
            .map(|_| theory::alg1_theta1_threshold(cfg.eps1, kappa_tilde));
        let step = match armijo(|y| model.value(y), &x, f, &dir.p, &g, &cfg.line_search) {
            Ok(s) => s,
            Err(e) => {
                r.stopped = Some(StopFlag::Error);
                rec.push(r, &x);
                return Ok(rec.finish(x, StopFlag::Error, Some(e.to_string())));
            }
        };
        r.alpha = step.alpha;
        rec.push(r, &x);
        x.axpy(step.alpha, &dir.p, 1.0);
        f = step.value;
        if let Eps2Schedule::Geometric { rho2 } = cfg.eps2_schedule {
            eps2 *= rho2;
        }
    }
    unreachable!("the iteration loop only exits by returning")
}
