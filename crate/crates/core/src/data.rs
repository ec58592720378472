//! Synthetic GLM datasets with a prescribed Gram condition number, and
//! svmlight / CSV input and output.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SsnError};
use crate::model::{sigmoid, CsrMatrix, Dataset, Design, Family, EXACT_GAMMA_MAX_DIM};
use crate::regularize::symmetric_eigenvalues;

/// Designs at or below this fill fraction are stored sparse.
pub const SPARSE_DENSITY_MAX: f64 = 0.3;

/// Largest Poisson log-mean used when drawing labels.
const POISSON_LOG_MEAN_MAX: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    /// Probability that a design entry is non-zero.
    pub density: f64,
    /// Target condition number of `(1/n) A^T A`.
    pub condition_target: f64,
    pub family: Family,
    pub seed: u64,
    /// Standard deviation of the planted margins `a_i^T x*`.
    pub signal: f64,
    /// Gaussian label noise for ridge data.
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            p: 10,
            density: 1.0,
            condition_target: 1.0,
            family: Family::Logistic,
            seed: 0,
            signal: 1.0,
            noise: 0.1,
        }
    }
}

impl SyntheticSpec {
    pub fn new(n: usize, p: usize, family: Family) -> Self {
        Self {
            n,
            p,
            family,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(invalid("p", "need at least one feature"));
        }
        if self.p > self.n {
            return Err(invalid(
                "p",
                format!("{} features exceed {} rows; the Gram matrix would be singular", self.p, self.n),
            ));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(invalid("density", format!("{} must lie in (0, 1]", self.density)));
        }
        if !(self.condition_target >= 1.0 && self.condition_target.is_finite()) {
            return Err(invalid(
                "condition_target",
                format!("{} must be finite and >= 1", self.condition_target),
            ));
        }
        if !(self.signal >= 0.0 && self.signal.is_finite()) {
            return Err(invalid("signal", format!("{} must be finite and >= 0", self.signal)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(invalid("noise", format!("{} must be finite and >= 0", self.noise)));
        }
        Ok(())
    }
}

/// Generation record stored next to a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub spec: SyntheticSpec,
    /// Condition number of the generated Gram matrix, when `p` is small
    /// enough to eigensolve.
    pub measured_condition: Option<f64>,
    pub measured_density: f64,
    pub planted: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub meta: DatasetMeta,
}

/// Extreme eigenvalues of `(1/n) A^T A` and their ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GramSpectrum {
    pub min: f64,
    pub max: f64,
    pub condition: f64,
}

pub fn gram_spectrum(data: &Dataset) -> Result<GramSpectrum> {
    spectrum_of(&data.gram())
}

fn spectrum_of(gram: &DMatrix<f64>) -> Result<GramSpectrum> {
    let eig = symmetric_eigenvalues(gram)?;
    let min = eig.min();
    let max = eig.max();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    Ok(GramSpectrum { min, max, condition })
}

/// Geometric ladder `c r^{-j/(p-1)}` summing to one, so rows have unit mean squared norm.
fn eigen_ladder(p: usize, log_ratio: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..p)
        .map(|j| {
            let t = if p > 1 { j as f64 / (p - 1) as f64 } else { 0.0 };
            (-log_ratio * t).exp()
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut z = DMatrix::<f64>::from_fn(n, p, |_, _| rng.sample(StandardNormal));
    let sparse = spec.density < 1.0;
    if sparse {
        let keep = Bernoulli::new(spec.density).map_err(|e| invalid("density", e.to_string()))?;
        for v in z.iter_mut() {
            if !keep.sample(&mut rng) {
                *v = 0.0;
            }
        }
        for j in 0..p {
            if z.column(j).iter().all(|&v| v == 0.0) {
                return Err(invalid(
                    "density",
                    format!("column {j} drew no non-zero entries; raise density or n"),
                ));
            }
        }
    }

    let target_log = spec.condition_target.ln();
    let (a, ladder) = if sparse {
        shape_sparse(&z, target_log, spec.condition_target)?
    } else {
        shape_dense(z, target_log)?
    };

    let planted: Vec<f64> = ladder
        .iter()
        .map(|&l| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            sign * spec.signal / (p as f64 * l).sqrt()
        })
        .collect();
    let xs = DVector::from_column_slice(&planted);
    let margins = &a * &xs;
    let labels = draw_labels(spec, &margins, &mut rng)?;

    let dataset = pack(&a, labels)?;
    let measured_condition = if p <= EXACT_GAMMA_MAX_DIM {
        Some(gram_spectrum(&dataset)?.condition)
    } else {
        None
    };
    let meta = DatasetMeta {
        spec: spec.clone(),
        measured_condition,
        measured_density: dataset.density(),
        planted,
    };
    Ok(Synthetic { dataset, meta })
}

/// Whitens `z` so its Gram is the identity, then scales columns by the ladder.
fn shape_dense(z: DMatrix<f64>, target_log: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = z.nrows() as f64;
    let g = z.tr_mul(&z) / n;
    let chol = g
        .cholesky()
        .ok_or_else(|| SsnError::NotPositiveDefinite("raw design Gram matrix".into()))?;
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(z.ncols(), z.ncols()))
        .ok_or_else(|| SsnError::NotPositiveDefinite("raw design Gram matrix".into()))?;
    let ladder = eigen_ladder(z.ncols(), target_log);
    let mut w = l_inv.transpose();
    for (j, &l) in ladder.iter().enumerate() {
        w.column_mut(j).scale_mut(l.sqrt());
    }
    Ok((z * w, ladder))
}

/// Column scaling only, so zero patterns survive; the ladder steepness is
/// bisected until the measured condition number meets the target.
fn shape_sparse(z: &DMatrix<f64>, target_log: f64, target: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = z.nrows() as f64;
    let p = z.ncols();
    let g0 = z.tr_mul(z) / n;
    let diag: Vec<f64> = (0..p).map(|j| g0[(j, j)]).collect();
    let scaled_gram = |ladder: &[f64]| {
        DMatrix::from_fn(p, p, |r, c| {
            g0[(r, c)] * (ladder[r] * ladder[c] / (diag[r] * diag[c])).sqrt()
        })
    };
    let cond_at = |log_ratio: f64| -> Result<f64> {
        Ok(spectrum_of(&scaled_gram(&eigen_ladder(p, log_ratio)))?.condition)
    };

    let floor = cond_at(0.0)?;
    let log_ratio = if floor >= target {
        if floor > 2.0 * target {
            return Err(invalid(
                "condition_target",
                format!("a design with this zero pattern has condition at least {floor:.3}"),
            ));
        }
        0.0
    } else {
        let mut lo = 0.0;
        let mut hi = target_log.max(1e-3);
        while cond_at(hi)? < target {
            lo = hi;
            hi *= 2.0;
            if hi > 1e3 {
                return Err(invalid("condition_target", "ladder search diverged"));
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let c = cond_at(mid)?;
            if (c.ln() - target_log).abs() < 1e-3 {
                lo = mid;
                hi = mid;
                break;
            }
            if c < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let ladder = eigen_ladder(p, log_ratio);
    let mut a = z.clone();
    for (j, &l) in ladder.iter().enumerate() {
        a.column_mut(j).scale_mut((l / diag[j]).sqrt());
    }
    Ok((a, ladder))
}

/// Point with independent `N(0, 1/p)` entries.
pub fn random_point(p: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (p.max(1) as f64).sqrt();
    DVector::from_fn(p, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn draw_labels(spec: &SyntheticSpec, margins: &DVector<f64>, rng: &mut ChaCha8Rng) -> Result<DVector<f64>> {
    let mut b = DVector::zeros(margins.len());
    for (i, &t) in margins.iter().enumerate() {
        b[i] = match spec.family {
            Family::Ridge => {
                let e: f64 = rng.sample(StandardNormal);
                t + spec.noise * e
            }
            Family::Logistic => f64::from(rng.random_bool(sigmoid(t))),
            Family::Poisson => {
                let mean = t.min(POISSON_LOG_MEAN_MAX).exp();
                let d = Poisson::new(mean).map_err(|e| invalid("signal", e.to_string()))?;
                d.sample(rng).round()
            }
        };
    }
    Ok(b)
}

/// Stores sparse when at most [`SPARSE_DENSITY_MAX`] of the entries are non-zero.
fn pack(a: &DMatrix<f64>, labels: DVector<f64>) -> Result<Dataset> {
    let nnz = a.iter().filter(|&&v| v != 0.0).count();
    let density = nnz as f64 / (a.nrows() * a.ncols()) as f64;
    if density > SPARSE_DENSITY_MAX {
        return Dataset::from_dense(a.clone(), labels);
    }
    let rows = (0..a.nrows())
        .map(|i| {
            a.row(i)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(j, &v)| (j, v))
                .collect()
        })
        .collect();
    Dataset::new(Design::Sparse(CsrMatrix::from_rows(rows, a.ncols())?), labels)
}

fn pack_rows(rows: Vec<Vec<(usize, f64)>>, labels: Vec<f64>, p: usize) -> Result<Dataset> {
    if rows.is_empty() {
        return Err(SsnError::EmptyDataset);
    }
    let labels = DVector::from_vec(labels);
    let csr = CsrMatrix::from_rows(rows, p)?;
    let n = labels.len();
    let density = csr.nnz() as f64 / (n * p) as f64;
    let design = Design::Sparse(csr);
    if density > SPARSE_DENSITY_MAX {
        Dataset::new(design.densify(), labels)
    } else {
        Dataset::new(design, labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Svmlight,
    Csv,
}

impl Format {
    /// `.csv` files are CSV, everything else svmlight.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Svmlight,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = SsnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svmlight" | "libsvm" | "svm" => Ok(Format::Svmlight),
            "csv" => Ok(Format::Csv),
            other => Err(invalid("format", format!("unknown format `{other}`"))),
        }
    }
}

pub fn load_dataset(path: &Path, format: Format) -> Result<Dataset> {
    let file = File::open(path)?;
    match format {
        Format::Svmlight => read_svmlight(file, None),
        Format::Csv => read_csv(file),
    }
}

pub fn save_dataset(data: &Dataset, path: &Path, format: Format) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        Format::Svmlight => write_svmlight(data, &mut w)?,
        Format::Csv => write_csv(data, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> SsnError {
    SsnError::Parse {
        line,
        message: message.into(),
    }
}

/// Reads `label idx:value ...` lines with 1-based indices. `p` is the largest
/// index seen unless `n_features` asks for more.
pub fn read_svmlight<R: Read>(reader: R, n_features: Option<usize>) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut p = n_features.unwrap_or(0);
    for (ln, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = ln + 1;
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut tokens = body.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad label `{label_tok}`")))?;
        if !label.is_finite() {
            return Err(parse_err(line_no, "label is not finite"));
        }
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(line_no, format!("expected index:value, got `{tok}`")))?;
            if idx == "qid" {
                continue;
            }
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad feature index `{idx}`")))?;
            if idx == 0 {
                return Err(parse_err(line_no, "feature indices start at 1"));
            }
            if idx <= last {
                return Err(parse_err(line_no, format!("feature index {idx} is not increasing")));
            }
            last = idx;
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad feature value `{val}`")))?;
            if !val.is_finite() {
                return Err(parse_err(line_no, format!("feature {idx} is not finite")));
            }
            row.push((idx - 1, val));
        }
        p = p.max(last);
        rows.push(row);
        labels.push(label);
    }
    if p == 0 && !rows.is_empty() {
        return Err(parse_err(1, "no features in file"));
    }
    pack_rows(rows, labels, p)
}

/// Reads `label,a_1,...,a_p` lines; blank lines and `#` comments are skipped.
pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (ln, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = ln + 1;
        let line = line?;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let mut values = Vec::new();
        for (col, field) in body.split(',').enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line_no, format!("column {}: bad number `{}`", col + 1, field.trim())))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, format!("column {} is not finite", col + 1)));
            }
            values.push(v);
        }
        if values.len() < 2 {
            return Err(parse_err(line_no, "need a label and at least one feature"));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(parse_err(line_no, format!("expected {w} columns, got {}", values.len())))
            }
            _ => {}
        }
        labels.push(values[0]);
        rows.push(
            values[1..]
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(j, &v)| (j, v))
                .collect(),
        );
    }
    pack_rows(rows, labels, width.map_or(0, |w| w - 1))
}

pub fn write_svmlight<W: Write>(data: &Dataset, w: &mut W) -> Result<()> {
    for i in 0..data.n() {
        write!(w, "{}", data.label(i))?;
        for (j, v) in data.design().row_entries(i) {
            if v != 0.0 {
                write!(w, " {}:{}", j + 1, v)?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_csv<W: Write>(data: &Dataset, w: &mut W) -> Result<()> {
    let p = data.p();
    let mut dense = vec![0.0; p];
    for i in 0..data.n() {
        dense.iter_mut().for_each(|v| *v = 0.0);
        for (j, v) in data.design().row_entries(i) {
            dense[j] = v;
        }
        write!(w, "{}", data.label(i))?;
        for v in &dense {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
