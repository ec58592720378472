//! Finite-sum objectives `F(x) = (1/n) sum_i f_i(x)` and their GLM instances.
//!
//! Every component carries the full ridge penalty,
//! `f_i(x) = Phi(a_i^T x) - b_i a_i^T x + (reg/2) ||x||^2`,
//! so sub-sampled quantities are plain means over components.

mod curvature;
mod dataset;
mod family;

pub use curvature::ConditionEstimates;
pub use dataset::{symmetrize, CsrMatrix, Dataset, Design};
pub use family::{sigmoid, Family, EXP_CLAMP};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SsnError};
use crate::regularize::symmetric_eigenvalues;

/// Above this dimension the data Gram spectrum is not computed and
/// `gamma` falls back to the penalty weight.
pub const EXACT_GAMMA_MAX_DIM: usize = 2000;

/// Upper bound `G(x)` on every component gradient norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientBound {
    pub value: f64,
    /// Set when the analytic bound overflowed and was replaced by the cap.
    pub saturated: bool,
}

/// A finite-sum objective with per-component derivatives.
pub trait FiniteSum: Sync {
    /// Number of components.
    fn n(&self) -> usize;
    /// Dimension of the iterate.
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> Result<f64>;
    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn component_gradient(&self, i: usize, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// Mean of the component gradients listed in `indices` (repeats count).
    fn sample_gradient(&self, indices: &[usize], x: &DVector<f64>) -> Result<DVector<f64>> {
        if indices.is_empty() {
            return Err(SsnError::EmptySample);
        }
        let mut g = DVector::zeros(self.dim());
        for &i in indices {
            g += self.component_gradient(i, x)?;
        }
        Ok(g / indices.len() as f64)
    }

    /// Mean of the component Hessians listed in `indices`, accumulated in list order.
    fn component_hessian_accumulate(&self, indices: &[usize], x: &DVector<f64>) -> Result<DMatrix<f64>>;

    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let all: Vec<usize> = (0..self.n()).collect();
        self.component_hessian_accumulate(&all, x)
    }

    fn gradient_norm_bound(&self, x: &DVector<f64>) -> Result<GradientBound>;

    /// Global curvature constants, over the ball of `radius` when given.
    fn curvature_constants(&self, radius: Option<f64>) -> Result<ConditionEstimates>;

    /// Curvature constants of the objective at the point `x` only.
    fn local_curvature(&self, x: &DVector<f64>) -> Result<ConditionEstimates>;

    /// Whether `curvature_constants` needs a radius to produce finite bounds.
    fn needs_radius(&self) -> bool {
        false
    }
}

/// Regularized negative log-likelihood of a canonical-link GLM.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Glm {
    data: Dataset,
    family: Family,
    reg: f64,
    row_norms: Vec<f64>,
    bounds: BoundConstants,
    bound_cap: f64,
}

/// Data-only maxima behind the `G(x)` estimates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct BoundConstants {
    max_row_norm: f64,
    /// `max_i |b_i| ||a_i||`
    max_label_row: f64,
    /// `max_i (||a_i||^2 + reg)`
    max_row_sq_reg: f64,
    /// `max_i (1 + |b_i|) ||a_i||`
    max_logistic_row: f64,
    /// `max_i ||a_i|| e^{||a_i||^2 / 2}`, possibly infinite
    max_poisson_row: f64,
}

impl Glm {
    pub fn new(data: Dataset, family: Family, reg: f64) -> Result<Self> {
        if !(reg.is_finite() && reg >= 0.0) {
            return Err(invalid("reg", format!("{reg} must be finite and >= 0")));
        }
        for (i, &b) in data.labels().iter().enumerate() {
            family.check_label(i, b)?;
        }
        let n = data.n();
        let row_norms: Vec<f64> = (0..n).map(|i| data.design().row_norm_sq(i).sqrt()).collect();
        let mut c = BoundConstants {
            max_row_norm: 0.0,
            max_label_row: 0.0,
            max_row_sq_reg: reg,
            max_logistic_row: 0.0,
            max_poisson_row: 0.0,
        };
        for (i, &a) in row_norms.iter().enumerate() {
            let b = data.label(i).abs();
            c.max_row_norm = c.max_row_norm.max(a);
            c.max_label_row = c.max_label_row.max(b * a);
            c.max_row_sq_reg = c.max_row_sq_reg.max(a * a + reg);
            c.max_logistic_row = c.max_logistic_row.max((1.0 + b) * a);
            c.max_poisson_row = c.max_poisson_row.max(a * (0.5 * a * a).exp());
        }
        Ok(Self {
            data,
            family,
            reg,
            row_norms,
            bounds: c,
            bound_cap: 1e300,
        })
    }

    /// Cap applied when the `G(x)` estimate overflows.
    pub fn with_bound_cap(mut self, cap: f64) -> Self {
        self.bound_cap = cap;
        self
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.row_norms[i]
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.data.p() {
            return Err(SsnError::DimensionMismatch {
                expected: self.data.p(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.data.n() {
            return Err(SsnError::IndexOutOfRange { index: i, n: self.data.n() });
        }
        Ok(())
    }

    pub fn component_value(&self, i: usize, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        self.check_index(i)?;
        let t = self.data.design().row_dot(i, x);
        let v = self.family.phi(t) - self.data.label(i) * t + 0.5 * self.reg * x.norm_squared();
        finite(v, "component value")
    }

    /// `(sum_j w_j a_j a_j^T) / m + reg I` for the given rows and curvature weights.
    fn gram_plus_reg(&self, rows: &[usize], weights: &[f64], m: usize) -> DMatrix<f64> {
        let scaled: Vec<f64> = weights.iter().map(|w| w / m as f64).collect();
        let mut h = self.data.design().weighted_gram(rows, &scaled);
        for d in 0..h.nrows() {
            h[(d, d)] += self.reg;
        }
        h
    }

    fn eigen_range(&self, rows: &[usize], weights: &[f64]) -> Result<(f64, f64)> {
        let h = self.gram_plus_reg(rows, weights, self.data.n());
        let ev = symmetric_eigenvalues(&h)?;
        Ok((ev.min(), ev.max()))
    }
}

fn finite(v: f64, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(SsnError::NonFinite(what))
    }
}

fn finite_vec(v: DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    if v.iter().all(|e| e.is_finite()) {
        Ok(v)
    } else {
        Err(SsnError::NonFinite(what))
    }
}

impl FiniteSum for Glm {
    fn n(&self) -> usize {
        self.data.n()
    }

    fn dim(&self) -> usize {
        self.data.p()
    }

    fn value(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        let t = self.data.design().mul_vec(x);
        let b = self.data.labels();
        let mut acc = 0.0;
        for i in 0..t.len() {
            acc += self.family.phi(t[i]) - b[i] * t[i];
        }
        let v = acc / self.n() as f64 + 0.5 * self.reg * x.norm_squared();
        finite(v, "objective value")
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let t = self.data.design().mul_vec(x);
        let b = self.data.labels();
        let n = self.n() as f64;
        let r = DVector::from_fn(t.len(), |i, _| (self.family.dphi(t[i]) - b[i]) / n);
        let mut g = self.data.design().tr_mul_vec(&r);
        g.axpy(self.reg, x, 1.0);
        finite_vec(g, "gradient")
    }

    fn component_gradient(&self, i: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        self.check_index(i)?;
        let design = self.data.design();
        let t = design.row_dot(i, x);
        let mut g = x * self.reg;
        design.add_row_scaled(i, self.family.dphi(t) - self.data.label(i), &mut g);
        finite_vec(g, "component gradient")
    }

    fn sample_gradient(&self, indices: &[usize], x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        if indices.is_empty() {
            return Err(SsnError::EmptySample);
        }
        let design = self.data.design();
        let m = indices.len() as f64;
        let mut g = DVector::zeros(self.dim());
        for &i in indices {
            self.check_index(i)?;
            let t = design.row_dot(i, x);
            design.add_row_scaled(i, (self.family.dphi(t) - self.data.label(i)) / m, &mut g);
        }
        g.axpy(self.reg, x, 1.0);
        finite_vec(g, "sub-sampled gradient")
    }

    fn component_hessian_accumulate(&self, indices: &[usize], x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        if indices.is_empty() {
            return Err(SsnError::EmptySample);
        }
        let design = self.data.design();
        let mut w = Vec::with_capacity(indices.len());
        for &i in indices {
            self.check_index(i)?;
            w.push(self.family.d2phi(design.row_dot(i, x)));
        }
        let h = self.gram_plus_reg(indices, &w, indices.len());
        if h.iter().all(|v| v.is_finite()) {
            Ok(h)
        } else {
            Err(SsnError::NonFinite("sub-sampled Hessian"))
        }
    }

    fn gradient_norm_bound(&self, x: &DVector<f64>) -> Result<GradientBound> {
        self.check_dim(x)?;
        let c = &self.bounds;
        let xn = x.norm();
        let raw = match self.family {
            Family::Ridge => xn * c.max_row_sq_reg + c.max_label_row,
            Family::Logistic => self.reg * xn + c.max_logistic_row,
            Family::Poisson => {
                self.reg * xn + (0.5 * xn * xn).exp() * c.max_poisson_row + c.max_label_row
            }
        };
        if raw.is_finite() && raw <= self.bound_cap {
            Ok(GradientBound {
                value: raw,
                saturated: false,
            })
        } else {
            log::warn!("gradient bound overflowed; saturating at {:e}", self.bound_cap);
            Ok(GradientBound {
                value: self.bound_cap,
                saturated: true,
            })
        }
    }

    fn curvature_constants(&self, radius: Option<f64>) -> Result<ConditionEstimates> {
        if let Some(r) = radius {
            if !(r.is_finite() && r >= 0.0) {
                return Err(invalid("radius", format!("{r} must be finite and >= 0")));
            }
        }
        let n = self.n();
        let mut upper = Vec::with_capacity(n);
        let mut lower = Vec::with_capacity(n);
        for &a in &self.row_norms {
            upper.push(self.family.d2phi_upper(a, radius)?);
            lower.push(self.family.d2phi_lower(a, radius));
        }
        let per_k: Vec<f64> = upper
            .iter()
            .zip(&self.row_norms)
            .map(|(c, a)| c * a * a + self.reg)
            .collect();
        let (gamma, big_k) = if self.dim() <= EXACT_GAMMA_MAX_DIM {
            let rows: Vec<usize> = (0..n).collect();
            let (_, k_max) = self.eigen_range(&rows, &upper)?;
            let gamma = if lower.iter().all(|w| *w == 0.0) {
                self.reg
            } else {
                let (g_min, _) = self.eigen_range(&rows, &lower)?;
                g_min.max(self.reg)
            };
            (gamma, k_max)
        } else {
            (self.reg, per_k.iter().sum::<f64>() / n as f64)
        };
        // rounding can push the exact Gram bound a hair past the mean of K_i
        let mean_k = per_k.iter().sum::<f64>() / n as f64;
        let big_k = big_k.min(mean_k).max(gamma);
        Ok(ConditionEstimates::new(per_k, gamma, big_k)?.with_radius(radius))
    }

    fn local_curvature(&self, x: &DVector<f64>) -> Result<ConditionEstimates> {
        self.check_dim(x)?;
        let design = self.data.design();
        let n = self.n();
        let w: Vec<f64> = (0..n).map(|i| self.family.d2phi(design.row_dot(i, x))).collect();
        let per_k: Vec<f64> = w
            .iter()
            .zip(&self.row_norms)
            .map(|(c, a)| c * a * a + self.reg)
            .collect();
        let rows: Vec<usize> = (0..n).collect();
        let (gamma, big_k) = self.eigen_range(&rows, &w)?;
        let mean_k = per_k.iter().sum::<f64>() / n as f64;
        let gamma = gamma.max(self.reg);
        ConditionEstimates::new(per_k, gamma, big_k.min(mean_k).max(gamma))
    }

    fn needs_radius(&self) -> bool {
        self.family.needs_radius()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    fn glm(rows: &[f64], p: usize, b: &[f64], family: Family, reg: f64) -> Glm {
        let n = b.len();
        let a = DMatrix::from_row_slice(n, p, rows);
        Glm::new(Dataset::from_dense(a, DVector::from_column_slice(b)).unwrap(), family, reg).unwrap()
    }

    #[test]
    fn value_examples() {
        let x0 = DVector::zeros(2);
        let m = glm(&[1.0, 0.0], 2, &[0.0], Family::Ridge, 0.0);
        assert_eq!(m.value(&x0).unwrap(), 0.0);
        let m = glm(&[1.0, 0.0], 2, &[1.0], Family::Logistic, 0.0);
        assert!((m.value(&x0).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let m = glm(&[1.0, 0.0], 2, &[0.0], Family::Poisson, 0.5);
        let x = DVector::from_vec(vec![1.0, 0.0]);
        assert!((m.value(&x).unwrap() - 2.968281).abs() < 1e-6);
    }

    #[test]
    fn gradient_examples() {
        let m = glm(&[1.0, 0.0, 0.0, 1.0], 2, &[1.0, 0.0], Family::Logistic, 0.0);
        let g = m.gradient(&DVector::zeros(2)).unwrap();
        assert!((g - DVector::from_vec(vec![-0.25, 0.25])).norm() < 1e-15);
        let gi = m.component_gradient(0, &DVector::zeros(2)).unwrap();
        assert!((gi - DVector::from_vec(vec![-0.5, 0.0])).norm() < 1e-15);
        let m = glm(&[2.0, 0.0], 2, &[2.0], Family::Ridge, 0.0);
        let gi = m.component_gradient(0, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(gi, DVector::zeros(2));
        assert!(matches!(
            m.component_gradient(1, &DVector::zeros(2)),
            Err(SsnError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn hessian_examples() {
        let m = glm(&[1.0, 0.0, 0.0, 1.0], 2, &[1.0, 0.0], Family::Logistic, 0.0);
        let h = m.component_hessian_accumulate(&[0], &DVector::zeros(2)).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 0.0]));
        assert!(matches!(
            m.component_hessian_accumulate(&[], &DVector::zeros(2)),
            Err(SsnError::EmptySample)
        ));
    }

    #[test]
    fn ridge_optimum_has_zero_gradient() {
        let rows = [1.0, 2.0, -1.0, 0.5, 3.0, 1.0, 0.0, -2.0];
        let b = [1.0, -0.5, 2.0, 0.25];
        let reg = 0.3;
        let m = glm(&rows, 2, &b, Family::Ridge, reg);
        let a = DMatrix::from_row_slice(4, 2, &rows);
        let bv = DVector::from_column_slice(&b);
        let lhs = a.transpose() * &a / 4.0 + DMatrix::identity(2, 2) * reg;
        let rhs = a.transpose() * bv / 4.0;
        let x = lhs.cholesky().unwrap().solve(&rhs);
        assert!(m.gradient(&x).unwrap().norm() < 1e-14);
    }

    #[test]
    fn bounds_examples() {
        // unit rows, logistic, reg 0
        let m = glm(&[1.0, 0.0, 0.0, 1.0, 0.6, 0.8], 2, &[1.0, 0.0, 1.0], Family::Logistic, 0.0);
        let g = m.gradient_norm_bound(&DVector::from_vec(vec![3.0, -4.0])).unwrap();
        assert!((g.value - 2.0).abs() < 1e-15);
        // ridge at zero: max_i |b_i| ||a_i||
        let m = glm(&[1.0, 0.0, 0.0, 2.0], 2, &[3.0, -2.0], Family::Ridge, 0.1);
        let g = m.gradient_norm_bound(&DVector::zeros(2)).unwrap();
        assert_eq!(g.value, 4.0);
        // Poisson overflow saturates
        let m = glm(&[1.0, 0.0], 2, &[1.0], Family::Poisson, 0.0).with_bound_cap(1e10);
        let g = m.gradient_norm_bound(&DVector::from_vec(vec![100.0, 0.0])).unwrap();
        assert!(g.saturated && g.value == 1e10);
    }

    #[test]
    fn orthonormal_ridge_constants() {
        let m = glm(&[1.0, 0.0, 0.0, 1.0], 2, &[0.0, 0.0], Family::Ridge, 0.5);
        let c = m.curvature_constants(None).unwrap();
        assert!(c.per_component_k.iter().all(|k| (k - 1.5).abs() < 1e-15));
        // (1/n) A^T A = I/2, plus reg
        assert!(rel(c.gamma, 1.0) < 1e-12);
        assert!(rel(c.big_k, 1.0) < 1e-12);
    }

    #[test]
    fn logistic_gamma_defaults_to_reg() {
        let m = glm(&[1.0, 0.0, 0.0, 1.0], 2, &[0.0, 1.0], Family::Logistic, 0.01);
        let c = m.curvature_constants(None).unwrap();
        assert_eq!(c.gamma, 0.01);
        let c = m.curvature_constants(Some(1.0)).unwrap();
        assert!(c.gamma > 0.01);
        let flat = glm(&[1.0, 0.0, 2.0, 0.0], 2, &[0.0, 1.0], Family::Ridge, 0.0);
        assert!(!flat.curvature_constants(None).unwrap().strongly_convex);
    }

    #[test]
    fn poisson_needs_radius() {
        let m = glm(&[1.0, 0.0, 0.0, 1.0], 2, &[0.0, 2.0], Family::Poisson, 0.0);
        assert!(m.needs_radius());
        assert!(m.curvature_constants(None).is_err());
        let c = m.curvature_constants(Some(1.0)).unwrap();
        assert!((c.per_component_k[0] - 1f64.exp()).abs() < 1e-12);
        assert!(c.gamma > 0.0);
    }

    #[test]
    fn rejects_invalid_labels_and_reg() {
        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        let d = Dataset::from_dense(a, DVector::from_vec(vec![0.5])).unwrap();
        assert!(Glm::new(d.clone(), Family::Logistic, 0.0).is_err());
        assert!(Glm::new(d, Family::Ridge, -1.0).is_err());
    }
}
