//! Lemma-driven sample sizes and uniform index sampling.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, invalid, Result, SsnError};
use crate::model::FiniteSum;
use crate::regularize::min_eigenvalue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Replacement {
    With,
    Without,
}

impl std::str::FromStr for Replacement {
    type Err = SsnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with" => Ok(Replacement::With),
            "without" => Ok(Replacement::Without),
            other => Err(invalid("replacement", format!("`{other}` is not one of with|without"))),
        }
    }
}

/// An index multiset drawn from `0..source_n`, stored in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    indices: Vec<usize>,
    mode: Replacement,
    source_n: usize,
}

impl SampleSet {
    /// The whole population `0..n`, each index once.
    pub fn full(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
            mode: Replacement::Without,
            source_n: n,
        }
    }

    pub fn from_indices(mut indices: Vec<usize>, mode: Replacement, source_n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(SsnError::EmptySample);
        }
        indices.sort_unstable();
        if let Some(&bad) = indices.iter().find(|&&i| i >= source_n) {
            return Err(SsnError::IndexOutOfRange { index: bad, n: source_n });
        }
        if mode == Replacement::Without && indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("indices", "repeated index in a without-replacement sample"));
        }
        Ok(Self {
            indices,
            mode,
            source_n,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn mode(&self) -> Replacement {
        self.mode
    }

    pub fn source_n(&self) -> usize {
        self.source_n
    }
}

fn ceil_to_count(v: f64) -> usize {
    if v >= usize::MAX as f64 {
        usize::MAX
    } else {
        v.ceil().max(1.0) as usize
    }
}

/// `ceil(2 kappa1 ln(p/delta) / eps^2)`: enough samples for the sub-sampled
/// Hessian to keep `lambda_min >= (1 - eps) gamma` with probability `1 - delta`.
pub fn hessian_sample_size(kappa1: f64, eps: f64, delta: f64, p: usize) -> Result<usize> {
    check_open_unit("eps", eps)?;
    check_open_unit("delta", delta)?;
    if !(kappa1 >= 1.0 && kappa1.is_finite()) {
        return Err(invalid("kappa1", format!("{kappa1} must be finite and >= 1")));
    }
    if p == 0 {
        return Err(invalid("p", "dimension must be >= 1"));
    }
    Ok(ceil_to_count(hessian_sample_bound(kappa1, eps, delta, p)))
}

/// The unrounded Hessian bound.
pub fn hessian_sample_bound(kappa1: f64, eps: f64, delta: f64, p: usize) -> f64 {
    2.0 * kappa1 * (p as f64 / delta).ln() / (eps * eps)
}

/// `ceil((G/eps)^2 (1 + sqrt(8 ln(1/delta)))^2)`: enough samples for the
/// sub-sampled gradient to lie within `eps` of the full one with
/// probability `1 - delta`.
pub fn gradient_sample_size(g: f64, eps: f64, delta: f64) -> Result<usize> {
    if !(g > 0.0) {
        return Err(invalid("G", format!("{g} must be positive")));
    }
    if !(eps > 0.0) {
        return Err(invalid("eps", format!("{eps} must be positive")));
    }
    check_open_unit("delta", delta)?;
    Ok(ceil_to_count(gradient_sample_bound(g, eps, delta)))
}

pub fn gradient_sample_bound(g: f64, eps: f64, delta: f64) -> f64 {
    let t = 1.0 + (8.0 * (1.0 / delta).ln()).sqrt();
    (g / eps).powi(2) * t * t
}

/// Clamps a requested size to `n`. With replacement the request is honoured
/// unless `clamp_with` is set. Returns the size and whether it was clamped.
pub fn clamp_size(requested: usize, n: usize, mode: Replacement, clamp_with: bool) -> (usize, bool) {
    let must_clamp = mode == Replacement::Without || clamp_with;
    if must_clamp && requested > n {
        log::info!("sample size {requested} exceeds n = {n}; clamped");
        (n, true)
    } else {
        (requested.max(1), false)
    }
}

/// Uniform sample of `size` indices from `0..n`.
///
/// Without replacement this is a partial Fisher-Yates shuffle over a sparse
/// swap table; with replacement, `size` independent uniform picks.
pub fn draw<R: Rng + ?Sized>(n: usize, size: usize, mode: Replacement, rng: &mut R) -> Result<SampleSet> {
    if size == 0 {
        return Err(SsnError::EmptySample);
    }
    if n == 0 {
        return Err(invalid("n", "population is empty"));
    }
    let mut indices = Vec::with_capacity(size);
    match mode {
        Replacement::With => {
            for _ in 0..size {
                indices.push(rng.random_range(0..n));
            }
        }
        Replacement::Without => {
            if size > n {
                return Err(invalid(
                    "size",
                    format!("cannot draw {size} distinct indices from {n}"),
                ));
            }
            if size == n {
                indices.extend(0..n);
            } else {
                let mut swapped: HashMap<usize, usize> = HashMap::with_capacity(2 * size);
                for i in 0..size {
                    let j = rng.random_range(i..n);
                    let vj = *swapped.get(&j).unwrap_or(&j);
                    let vi = *swapped.get(&i).unwrap_or(&i);
                    swapped.insert(j, vi);
                    indices.push(vj);
                }
            }
        }
    }
    indices.sort_unstable();
    Ok(SampleSet {
        indices,
        mode,
        source_n: n,
    })
}

fn check_source<M: FiniteSum + ?Sized>(model: &M, sample: &SampleSet) -> Result<()> {
    if sample.source_n != model.n() {
        return Err(SsnError::DimensionMismatch {
            expected: model.n(),
            got: sample.source_n,
        });
    }
    Ok(())
}

/// Mean of the sampled component Hessians.
pub fn subsampled_hessian<M: FiniteSum + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    sample: &SampleSet,
) -> Result<DMatrix<f64>> {
    check_source(model, sample)?;
    model.component_hessian_accumulate(&sample.indices, x)
}

/// Mean of the sampled component gradients.
pub fn subsampled_gradient<M: FiniteSum + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    sample: &SampleSet,
) -> Result<DVector<f64>> {
    check_source(model, sample)?;
    model.sample_gradient(&sample.indices, x)
}

/// Outcome of repeatedly drawing a lemma-sized sample and checking its event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaFrequency {
    pub sample_size: usize,
    pub resamples: usize,
    pub failures: usize,
    /// Bound the event is checked against.
    pub threshold: f64,
    pub delta: f64,
}

impl LemmaFrequency {
    pub fn frequency(&self) -> f64 {
        self.failures as f64 / self.resamples as f64
    }

    pub fn passes(&self, margin: f64) -> bool {
        self.frequency() <= self.delta + margin
    }
}

fn resample_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

fn count_failures(resamples: usize, fail: impl Fn(usize) -> Result<bool> + Sync + Send) -> Result<usize> {
    if resamples == 0 {
        return Err(invalid("resamples", "must be >= 1"));
    }
    let flags = (0..resamples).into_par_iter().map(fail).collect::<Result<Vec<bool>>>()?;
    Ok(flags.into_iter().filter(|&f| f).count())
}

/// Frequency of `lambda_min(H_S) < (1 - eps) gamma` at `x`, where `gamma` and
/// `kappa1` are the curvature constants of the objective at `x` and `|S|`
/// comes from [`hessian_sample_size`].
pub fn hessian_lemma_frequency<M: FiniteSum + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    eps: f64,
    delta: f64,
    resamples: usize,
    mode: Replacement,
    seed: u64,
) -> Result<LemmaFrequency> {
    let est = model.local_curvature(x)?;
    let size = hessian_sample_size(est.kappa1(), eps, delta, model.dim())?;
    let (size, _) = clamp_size(size, model.n(), mode, false);
    let threshold = (1.0 - eps) * est.gamma;
    let failures = count_failures(resamples, |r| {
        let s = draw(model.n(), size, mode, &mut resample_rng(seed, r))?;
        Ok(min_eigenvalue(&subsampled_hessian(model, x, &s)?)? < threshold)
    })?;
    Ok(LemmaFrequency {
        sample_size: size,
        resamples,
        failures,
        threshold,
        delta,
    })
}

/// Frequency of `||grad F(x) - g_S|| > eps` with `|S|` from
/// [`gradient_sample_size`] and `G` the largest component gradient norm at `x`.
pub fn gradient_lemma_frequency<M: FiniteSum + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    eps: f64,
    delta: f64,
    resamples: usize,
    mode: Replacement,
    seed: u64,
) -> Result<LemmaFrequency> {
    let mut g_max = 0.0f64;
    for i in 0..model.n() {
        g_max = g_max.max(model.component_gradient(i, x)?.norm());
    }
    let size = gradient_sample_size(g_max, eps, delta)?;
    let (size, _) = clamp_size(size, model.n(), mode, false);
    let full = model.gradient(x)?;
    let failures = count_failures(resamples, |r| {
        let s = draw(model.n(), size, mode, &mut resample_rng(seed, r))?;
        Ok((subsampled_gradient(model, x, &s)? - &full).norm() > eps)
    })?;
    Ok(LemmaFrequency {
        sample_size: size,
        resamples,
        failures,
        threshold: eps,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dataset, Family, Glm};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn hessian_size_examples() {
        assert_eq!(hessian_sample_size(2.0, 0.5, 0.1, 10).unwrap(), 74);
        assert_eq!(hessian_sample_size(1.0, 0.5, 0.1, 10).unwrap(), 37);
        let a = hessian_sample_bound(3.0, 0.4, 0.1, 10);
        let b = hessian_sample_bound(3.0, 0.2, 0.1, 10);
        assert!((b / a - 4.0).abs() < 1e-12);
        assert!(hessian_sample_size(1.0, 1.0, 0.1, 10).is_err());
        assert!(hessian_sample_size(1.0, 0.5, 0.0, 10).is_err());
        assert!(hessian_sample_size(0.5, 0.5, 0.1, 10).is_err());
    }

    #[test]
    fn gradient_size_examples() {
        assert_eq!(gradient_sample_size(1.0, 0.5, 0.1).unwrap(), 113);
        let a = gradient_sample_bound(1.0, 0.3, 0.2);
        let b = gradient_sample_bound(2.0, 0.3, 0.2);
        assert!((b / a - 4.0).abs() < 1e-12);
        let near_one = gradient_sample_bound(1.0, 0.5, 1.0 - 1e-15);
        assert!((near_one - 4.0).abs() < 1e-5);
        assert_eq!(gradient_sample_size(1.0, 0.5, 1.0 - 1e-15).unwrap(), 5);
        assert!(gradient_sample_size(0.0, 0.5, 0.1).is_err());
        assert!(gradient_sample_size(-1.0, 0.5, 0.1).is_err());
    }

    #[test]
    fn exhaustive_draw_is_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = draw(5, 5, Replacement::Without, &mut rng).unwrap();
        assert_eq!(s.indices(), &[0, 1, 2, 3, 4]);
        assert!(draw(5, 6, Replacement::Without, &mut rng).is_err());
        assert!(draw(5, 0, Replacement::With, &mut rng).is_err());
    }

    #[test]
    fn clamping() {
        assert_eq!(clamp_size(10, 5, Replacement::Without, false), (5, true));
        assert_eq!(clamp_size(10, 5, Replacement::With, false), (10, false));
        assert_eq!(clamp_size(10, 5, Replacement::With, true), (5, true));
        assert_eq!(clamp_size(3, 5, Replacement::Without, false), (3, false));
    }

    #[test]
    fn from_indices_validates() {
        assert!(SampleSet::from_indices(vec![1, 1], Replacement::Without, 3).is_err());
        assert!(SampleSet::from_indices(vec![3], Replacement::With, 3).is_err());
        let s = SampleSet::from_indices(vec![2, 0, 2], Replacement::With, 3).unwrap();
        assert_eq!(s.indices(), &[0, 2, 2]);
    }

    #[test]
    fn lemma_suites_are_deterministic_and_bounded() {
        let n = 400;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = nalgebra::DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(n, |_, _| f64::from(rng.random_bool(0.5)));
        let m = Glm::new(Dataset::from_dense(a, b).unwrap(), Family::Logistic, 0.05).unwrap();
        let x = DVector::from_vec(vec![0.1, 0.2, -0.3]);
        for mode in [Replacement::With, Replacement::Without] {
            let h = hessian_lemma_frequency(&m, &x, 0.5, 0.2, 50, mode, 1).unwrap();
            assert_eq!(h, hessian_lemma_frequency(&m, &x, 0.5, 0.2, 50, mode, 1).unwrap());
            assert!(h.passes(0.1), "{h:?}");
            let g = gradient_lemma_frequency(&m, &x, 0.5, 0.2, 50, mode, 1).unwrap();
            assert!(g.passes(0.1), "{g:?}");
        }
        assert!(gradient_lemma_frequency(&m, &x, 0.5, 0.2, 0, Replacement::With, 1).is_err());
    }

    #[test]
    fn full_and_singleton_samples() {
        let a = nalgebra::DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -1.0, 2.0, 0.3, 0.3]);
        let b = DVector::from_vec(vec![1.0, 0.0, 1.0]);
        let m = Glm::new(Dataset::from_dense(a, b).unwrap(), Family::Logistic, 0.1).unwrap();
        let x = DVector::from_vec(vec![0.2, -0.7]);
        let full = SampleSet::full(3);
        assert!((subsampled_gradient(&m, &x, &full).unwrap() - m.gradient(&x).unwrap()).norm() < 1e-12);
        assert_eq!(subsampled_hessian(&m, &x, &full).unwrap(), m.hessian(&x).unwrap());
        let single = SampleSet::from_indices(vec![1], Replacement::Without, 3).unwrap();
        let g1 = subsampled_gradient(&m, &x, &single).unwrap();
        assert!((g1 - m.component_gradient(1, &x).unwrap()).norm() < 1e-15);
        let h = subsampled_hessian(&m, &x, &single).unwrap();
        assert!((&h - h.transpose()).norm() < 1e-12);
        let wrong = SampleSet::full(4);
        assert!(subsampled_hessian(&m, &x, &wrong).is_err());
    }

    proptest! {
        #[test]
        fn draws_are_deterministic_and_valid(seed in any::<u64>(), n in 1usize..200, frac in 0.01f64..1.0, with in any::<bool>()) {
            let size = ((n as f64 * frac).ceil() as usize).max(1);
            let mode = if with { Replacement::With } else { Replacement::Without };
            let a = draw(n, size, mode, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = draw(n, size, mode, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), size);
            prop_assert!(a.indices().iter().all(|&i| i < n));
            if mode == Replacement::Without {
                prop_assert!(a.indices().windows(2).all(|w| w[0] < w[1]));
            }
        }

        #[test]
        fn sizes_non_increasing_in_eps_and_delta(e1 in 0.01f64..0.99, e2 in 0.01f64..0.99, d1 in 0.01f64..0.99, d2 in 0.01f64..0.99) {
            let (elo, ehi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let (dlo, dhi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(hessian_sample_size(5.0, ehi, dlo, 10).unwrap() <= hessian_sample_size(5.0, elo, dlo, 10).unwrap());
            prop_assert!(hessian_sample_size(5.0, elo, dhi, 10).unwrap() <= hessian_sample_size(5.0, elo, dlo, 10).unwrap());
            prop_assert!(gradient_sample_size(1.5, ehi, dlo).unwrap() <= gradient_sample_size(1.5, elo, dlo).unwrap());
            prop_assert!(gradient_sample_size(1.5, elo, dhi).unwrap() <= gradient_sample_size(1.5, elo, dlo).unwrap());
        }
    }
}
