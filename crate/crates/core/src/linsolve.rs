//! Exact and inexact Newton directions.
//!
//! The inexact contract on a direction `p` for the system `H p = -g` is
//! `||H p + g|| <= theta1 ||g||` together with `p^T g <= -(1 - theta2) p^T H p`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SsnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InexactnessSpec {
    pub theta1: f64,
    pub theta2: f64,
    pub max_iters: usize,
}

impl InexactnessSpec {
    pub const DEFAULT_MAX_ITERS: usize = 1000;

    pub fn new(theta1: f64, theta2: f64) -> Result<Self> {
        let s = Self {
            theta1,
            theta2,
            max_iters: Self::DEFAULT_MAX_ITERS,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("theta1", self.theta1), ("theta2", self.theta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(invalid(name, format!("{v} must lie in [0, 1)")));
            }
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters", "must be >= 1"));
        }
        Ok(())
    }
}

/// Cholesky solve of `H p = rhs` with up to three rounds of iterative refinement.
///
/// Fails with `NotPositiveDefinite` when a pivot falls below
/// `1e-12 max(1, max_i H_ii)`.
pub fn solve_exact(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if !h.is_square() || h.nrows() != rhs.len() {
        return Err(SsnError::DimensionMismatch {
            expected: h.nrows(),
            got: rhs.len(),
        });
    }
    if h.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
        return Err(SsnError::NonFinite("linear system"));
    }
    let scale = h.diagonal().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let chol = h
        .clone()
        .cholesky()
        .ok_or_else(|| SsnError::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    let l = chol.l_dirty();
    let min_pivot = (0..h.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot <= 1e-12 * scale {
        return Err(SsnError::NotPositiveDefinite(format!(
            "smallest pivot {min_pivot:e} below tolerance {:e}",
            1e-12 * scale
        )));
    }
    let mut p = chol.solve(rhs);
    let target = 1e-12 * rhs.norm();
    for _ in 0..3 {
        let r = rhs - h * &p;
        if r.norm() <= target {
            break;
        }
        p += chol.solve(&r);
    }
    Ok(p)
}

/// Conjugate-gradient iterates for `H p = -g` from `p = 0`.
pub struct ConjugateGradient<'a> {
    h: &'a DMatrix<f64>,
    p: DVector<f64>,
    r: DVector<f64>,
    d: DVector<f64>,
    rr: f64,
    iterations: usize,
    broke_down: bool,
}

impl<'a> ConjugateGradient<'a> {
    pub fn new(h: &'a DMatrix<f64>, g: &DVector<f64>) -> Self {
        let r = -g;
        let rr = r.norm_squared();
        Self {
            h,
            p: DVector::zeros(g.len()),
            d: r.clone(),
            r,
            rr,
            iterations: 0,
            broke_down: false,
        }
    }

    pub fn iterate(&self) -> &DVector<f64> {
        &self.p
    }

    /// Recursively updated residual `-g - H p`.
    pub fn residual(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Whether a non-positive curvature direction stopped the iteration.
    pub fn broke_down(&self) -> bool {
        self.broke_down
    }

    /// Advances one step. Returns false once no further progress is possible.
    pub fn step(&mut self) -> bool {
        if self.broke_down || self.rr == 0.0 {
            return false;
        }
        let hd = self.h * &self.d;
        let curv = self.d.dot(&hd);
        if !(curv > 0.0) || !curv.is_finite() {
            self.broke_down = true;
            return false;
        }
        let a = self.rr / curv;
        self.p.axpy(a, &self.d, 1.0);
        self.r.axpy(-a, &hd, 1.0);
        let rr_new = self.r.norm_squared();
        let b = rr_new / self.rr;
        self.rr = rr_new;
        self.d *= b;
        self.d += &self.r;
        self.iterations += 1;
        true
    }

    /// Replaces the recursive residual with the true one.
    fn refresh_residual(&mut self, g: &DVector<f64>) {
        self.r = -(self.h * &self.p) - g;
        self.rr = self.r.norm_squared();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InexactCheck {
    pub ok: bool,
    /// `||H p + g|| / ||g||`
    pub residual_ratio: f64,
    /// `-p^T g / p^T H p`; condition (b) reads `descent_ratio >= 1 - theta2`.
    pub descent_ratio: f64,
}

/// Relative residual accepted as round-off, matching the accuracy of [`solve_exact`].
pub const RESIDUAL_SLACK: f64 = 1e-10;

pub fn verify_inexact(h: &DMatrix<f64>, g: &DVector<f64>, p: &DVector<f64>, spec: &InexactnessSpec) -> InexactCheck {
    let hp = h * p;
    let res = (&hp + g).norm();
    let gn = g.norm();
    let residual_ratio = if gn > 0.0 {
        res / gn
    } else if res == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let php = p.dot(&hp);
    let pg = p.dot(g);
    let descent_ratio = if php != 0.0 { -pg / php } else { f64::NAN };
    let ok = res <= (spec.theta1 + RESIDUAL_SLACK) * gn && pg <= -(1.0 - spec.theta2) * php;
    InexactCheck {
        ok,
        residual_ratio,
        descent_ratio,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InexactSolve {
    pub direction: DVector<f64>,
    pub cg_iterations: usize,
    pub check: InexactCheck,
    /// Set when CG hit its limit and the exact factorization was used.
    pub fell_back: bool,
}

/// Direction satisfying the inexact contract for `H p = -g`.
///
/// CG runs from zero and stops at the first iterate passing both checks;
/// `theta1 = 0` goes straight to the exact solve, and exhausting
/// `max_iters` falls back to it.
pub fn solve_inexact(h: &DMatrix<f64>, g: &DVector<f64>, spec: &InexactnessSpec) -> Result<InexactSolve> {
    spec.validate()?;
    if h.nrows() != g.len() || !h.is_square() {
        return Err(SsnError::DimensionMismatch {
            expected: h.nrows(),
            got: g.len(),
        });
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(SsnError::NonFinite("gradient"));
    }
    let exact = |iters: usize, fell_back: bool| -> Result<InexactSolve> {
        let direction = solve_exact(h, &-g).map_err(|e| {
            if fell_back {
                SsnError::InexactSolveFailed(format!("CG stalled after {iters} iterations and {e}"))
            } else {
                e
            }
        })?;
        let check = verify_inexact(h, g, &direction, spec);
        Ok(InexactSolve {
            direction,
            cg_iterations: iters,
            check,
            fell_back,
        })
    };
    if spec.theta1 == 0.0 {
        return exact(0, false);
    }
    let gn = g.norm();
    if gn == 0.0 {
        return Ok(InexactSolve {
            direction: DVector::zeros(g.len()),
            cg_iterations: 0,
            check: verify_inexact(h, g, &DVector::zeros(g.len()), spec),
            fell_back: false,
        });
    }
    let tol = spec.theta1 * gn;
    let mut cg = ConjugateGradient::new(h, g);
    while cg.iterations() < spec.max_iters {
        if !cg.step() {
            break;
        }
        if cg.residual().norm() <= tol {
            let check = verify_inexact(h, g, cg.iterate(), spec);
            if check.ok {
                return Ok(InexactSolve {
                    direction: cg.iterate().clone(),
                    cg_iterations: cg.iterations(),
                    check,
                    fell_back: false,
                });
            }
            cg.refresh_residual(g);
        }
    }
    log::debug!("CG did not meet the inexactness contract in {} iterations; exact fallback", cg.iterations());
    exact(cg.iterations(), true)
}
