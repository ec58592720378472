//! Reference optimizers: gradient descent, Nesterov acceleration,
//! BFGS, L-BFGS and full Newton.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::config::{SolverConfig, Variant};
use super::ssn::{newton_direction, resolve_estimates};
use super::trace::{RunDiagnostics, StopFlag, Trace, TraceRecord};
use super::Recorder;
use crate::error::{invalid, Result, SsnError};
use crate::linesearch::armijo;
use crate::model::FiniteSum;

/// Curvature-pair acceptance threshold, relative to `||s|| ||y||`.
const CURVATURE_EPS: f64 = 1e-12;

fn diverged(f: f64, f0: f64) -> bool {
    !f.is_finite() || f - f0 > 9.0 * f0.abs()
}

pub fn run_baseline<M: FiniteSum + ?Sized>(model: &M, cfg: &SolverConfig, x0: &DVector<f64>) -> Result<Trace> {
    cfg.validate()?;
    if x0.len() != model.dim() {
        return Err(SsnError::DimensionMismatch {
            expected: model.dim(),
            got: x0.len(),
        });
    }
    match cfg.variant {
        Variant::Gd => run_gd(model, cfg, x0),
        Variant::Agd => run_agd(model, cfg, x0),
        Variant::Bfgs => run_quasi_newton(model, cfg, x0, None),
        Variant::Lbfgs { memory } => run_quasi_newton(model, cfg, x0, Some(memory)),
        Variant::Newton => run_newton(model, cfg, x0),
        other => Err(invalid("variant", format!("{} is not a baseline", other.name()))),
    }
}

fn fixed_step<M: FiniteSum + ?Sized>(
    model: &M,
    cfg: &SolverConfig,
    x0: &DVector<f64>,
) -> Result<(f64, RunDiagnostics, Option<f64>)> {
    let mut diag = RunDiagnostics::default();
    let est = match (cfg.gd_step, cfg.variant) {
        (Some(_), Variant::Gd) => None,
        _ => Some(resolve_estimates(model, cfg, x0)?),
    };
    if let Some(e) = &est {
        diag.gamma = Some(e.gamma);
        diag.big_k = Some(e.big_k);
        diag.kappa = e.strongly_convex.then(|| e.kappa());
    }
    let step = match (cfg.gd_step, &est) {
        (Some(s), _) => s,
        (None, Some(e)) => 1.0 / e.big_k,
        (None, None) => unreachable!("estimates are resolved whenever no step is given"),
    };
    let kappa = est.filter(|e| e.strongly_convex).map(|e| e.kappa());
    Ok((step, diag, kappa))
}

fn run_gd<M: FiniteSum + ?Sized>(model: &M, cfg: &SolverConfig, x0: &DVector<f64>) -> Result<Trace> {
    let (step, diag, _) = fixed_step(model, cfg, x0)?;
    let n = model.n();
    let mut rec = Recorder::new("gd", cfg.record_iterates, diag);
    let mut x = x0.clone();
    let mut f = model.value(&x)?;
    let f0 = f;
    for k in 0.. {
        let g = match model.gradient(&x) {
            Ok(g) => g,
            Err(e) => return Ok(rec.fail(k, f, &x, e)),
        };
        let gn = g.norm();
        let mut r = TraceRecord::at(k, f, gn, rec.watch.nanos());
        r.grad_norm_full = Some(gn);
        r.sample_g = n;
        if let Some(flag) = rec.should_stop(cfg, k, gn) {
            r.stopped = Some(flag);
            rec.push(r, &x);
            return Ok(rec.finish(x, flag, None));
        }
        let next = &x - &g * step;
        let fn_ = model.value(&next).unwrap_or(f64::INFINITY);
        if diverged(fn_, f0) {
            r.stopped = Some(StopFlag::Diverged);
            rec.push(r, &x);
            return Ok(rec.finish(x, StopFlag::Diverged, Some("objective blew up".into())));
        }
        r.alpha = step;
        rec.push(r, &x);
        x = next;
        f = fn_;
    }
    unreachable!("the iteration loop only exits by returning")
}

/// Nesterov acceleration with function-value restart, so values never increase.
fn run_agd<M: FiniteSum + ?Sized>(model: &M, cfg: &SolverConfig, x0: &DVector<f64>) -> Result<Trace> {
    let (step, diag, kappa) = fixed_step(model, cfg, x0)?;
    let n = model.n();
    let strongly_convex_momentum = kappa.map(|k| (k.sqrt() - 1.0) / (k.sqrt() + 1.0));
    let mut rec = Recorder::new("agd", cfg.record_iterates, diag);
    let mut x = x0.clone();
    let mut x_prev = x0.clone();
    let mut f = model.value(&x)?;
    let f0 = f;
    let mut t = 1.0f64;
    for k in 0.. {
        // the gradient at x only drives the stop test unless a restart needs it
        rec.watch.pause();
        let g = model.gradient(&x);
        rec.watch.resume();
        let g = match g {
            Ok(g) => g,
            Err(e) => return Ok(rec.fail(k, f, &x, e)),
        };
        let gn = g.norm();
        let mut r = TraceRecord::at(k, f, gn, rec.watch.nanos());
        r.grad_norm_full = Some(gn);
        r.sample_g = n;
        if let Some(flag) = rec.should_stop(cfg, k, gn) {
            r.stopped = Some(flag);
            rec.push(r, &x);
            return Ok(rec.finish(x, flag, None));
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mu = strongly_convex_momentum.unwrap_or((t - 1.0) / t_next);
        let y = &x + (&x - &x_prev) * mu;
        let trial = model.gradient(&y).map(|gy| &y - gy * step);
        let mut next = None;
        if let Ok(cand) = trial {
            if let Ok(v) = model.value(&cand) {
                if v <= f {
                    next = Some((cand, v));
                    t = t_next;
                }
            }
        }
        let restarted = next.is_none();
        let (cand, v) = match next {
            Some(c) => c,
            None => {
                t = 1.0;
                let cand = &x - &g * step;
                let v = model.value(&cand).unwrap_or(f64::INFINITY);
                (cand, v)
            }
        };
        if diverged(v, f0) {
            r.stopped = Some(StopFlag::Diverged);
            rec.push(r, &x);
            return Ok(rec.finish(x, StopFlag::Diverged, Some("objective blew up".into())));
        }
        if v > f {
            r.stopped = Some(StopFlag::Error);
            rec.push(r, &x);
            return Ok(rec.finish(x, StopFlag::Error, Some("no decrease at working precision".into())));
        }
        r.alpha = step;
        rec.push(r, &x);
        x_prev = std::mem::replace(&mut x, cand);
        if restarted {
            x_prev = x.clone();
        }
        f = v;
    }
    unreachable!("the iteration loop only exits by returning")
}

/// BFGS on the dense inverse Hessian when `memory` is `None`, L-BFGS otherwise.
fn run_quasi_newton<M: FiniteSum + ?Sized>(
    model: &M,
    cfg: &SolverConfig,
    x0: &DVector<f64>,
    memory: Option<usize>,
) -> Result<Trace> {
    let n = model.n();
    let p = model.dim();
    let name = match memory {
        None => "bfgs".to_string(),
        Some(m) => format!("lbfgs:{m}"),
    };
    let mut rec = Recorder::new(&name, cfg.record_iterates, RunDiagnostics::default());
    let mut x = x0.clone();
    let mut f = model.value(&x)?;
    let f0 = f;
    let mut g = model.gradient(&x)?;
    let mut hinv: Option<DMatrix<f64>> = None;
    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    for k in 0.. {
        let gn = g.norm();
        let mut r = TraceRecord::at(k, f, gn, rec.watch.nanos());
        r.grad_norm_full = Some(gn);
        r.sample_g = n;
        if let Some(flag) = rec.should_stop(cfg, k, gn) {
            r.stopped = Some(flag);
            rec.push(r, &x);
            return Ok(rec.finish(x, flag, None));
        }
        let mut dir = match memory {
            None => -(hinv.as_ref().map_or_else(|| g.clone(), |h| h * &g)),
            Some(_) => -two_loop(&g, &pairs),
        };
        if !(dir.dot(&g) < 0.0) {
            hinv = None;
            pairs.clear();
            dir = -&g;
        }
        let step = match armijo(|y| model.value(y), &x, f, &dir, &g, &cfg.line_search) {
            Ok(s) => s,
            Err(e) => {
                r.stopped = Some(StopFlag::Error);
                rec.push(r, &x);
                return Ok(rec.finish(x, StopFlag::Error, Some(e.to_string())));
            }
        };
        if diverged(step.value, f0) {
            r.stopped = Some(StopFlag::Diverged);
            rec.push(r, &x);
            return Ok(rec.finish(x, StopFlag::Diverged, Some("objective blew up".into())));
        }
        let s = &dir * step.alpha;
        let next = &x + &s;
        let g_next = match model.gradient(&next) {
            Ok(v) => v,
            Err(e) => {
                r.alpha = step.alpha;
                rec.push(r, &x);
                return Ok(rec.fail(k + 1, step.value, &next, e));
            }
        };
        let y = &g_next - &g;
        let sy = s.dot(&y);
        if sy > CURVATURE_EPS * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            match memory {
                None => {
                    let h = hinv.get_or_insert_with(|| DMatrix::identity(p, p) * (sy / y.norm_squared()));
                    let hy = &*h * &y;
                    let yhy = y.dot(&hy);
                    h.ger(-rho, &s, &hy, 1.0);
                    h.ger(-rho, &hy, &s, 1.0);
                    h.ger(rho * rho * yhy + rho, &s, &s, 1.0);
                }
                Some(m) => {
                    if pairs.len() == m {
                        pairs.pop_front();
                    }
                    pairs.push_back((s.clone(), y, rho));
                }
            }
        }
        r.alpha = step.alpha;
        rec.push(r, &x);
        x = next;
        f = step.value;
        g = g_next;
    }
    unreachable!("the iteration loop only exits by returning")
}

fn two_loop(g: &DVector<f64>, pairs: &VecDeque<(DVector<f64>, DVector<f64>, f64)>) -> DVector<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, y, 1.0);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        q *= s.dot(y) / y.norm_squared();
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * y.dot(&q);
        q.axpy(a - b, s, 1.0);
    }
    q
}

/// Full-Hessian Newton with exact solves and Armijo steps.
pub fn run_newton<M: FiniteSum + ?Sized>(model: &M, cfg: &SolverConfig, x0: &DVector<f64>) -> Result<Trace> {
    let n = model.n();
    let mut rec = Recorder::new("newton", cfg.record_iterates, RunDiagnostics::default());
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
        r.sample_g = n;
        if let Some(flag) = rec.should_stop(cfg, k, gn) {
            r.stopped = Some(flag);
            rec.push(r, &x);
            return Ok(rec.finish(x, flag, None));
        }
        r.sample_h = n;
        let step = model
            .hessian(&x)
            .and_then(|h| newton_direction(&h, &g, None))
            .and_then(|d| armijo(|y| model.value(y), &x, f, &d.p, &g, &cfg.line_search).map(|s| (d.p, s)));
        let (p, step) = match step {
            Ok(v) => v,
            Err(e) => {
                r.stopped = Some(StopFlag::Error);
                rec.push(r, &x);
                return Ok(rec.finish(x, StopFlag::Error, Some(e.to_string())));
            }
        };
        r.alpha = step.alpha;
        rec.push(r, &x);
        x.axpy(step.alpha, &p, 1.0);
        f = step.value;
    }
    unreachable!("the iteration loop only exits by returning")
}
