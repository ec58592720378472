use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsnError};

/// Compressed sparse row storage for a design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from per-row `(column, value)` lists. Columns within
    /// a row are sorted and duplicates summed; explicit zeros are dropped.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, n_cols: usize) -> Result<Self> {
        let n_rows = rows.len();
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let start = indices.len();
            for (c, v) in row {
                if c >= n_cols {
                    return Err(SsnError::IndexOutOfRange { index: c, n: n_cols });
                }
                if indices.len() > start && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            // drop zeros that survived summation
            let mut w = start;
            for r in start..indices.len() {
                if values[r] != 0.0 {
                    indices[w] = indices[r];
                    values[w] = values[r];
                    w += 1;
                }
            }
            indices.truncate(w);
            values.truncate(w);
            indptr.push(indices.len());
        }
        Ok(Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }
}

/// Row-major view over the covariates `a_i`.
///
/// Dense data is held transposed (`p x n`) so each row `a_i` is a contiguous
/// column of the stored matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Design {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
}

impl Design {
    /// Wraps an `n x p` dense matrix whose rows are the covariates.
    pub fn dense_from_rows(a: &DMatrix<f64>) -> Self {
        Design::Dense(a.transpose())
    }

    pub fn n_rows(&self) -> usize {
        match self {
            Design::Dense(at) => at.ncols(),
            Design::Sparse(m) => m.n_rows,
        }
    }

    pub fn n_cols(&self) -> usize {
        match self {
            Design::Dense(at) => at.nrows(),
            Design::Sparse(m) => m.n_cols,
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            Design::Dense(at) => at.iter().filter(|v| **v != 0.0).count(),
            Design::Sparse(m) => m.nnz(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Design::Sparse(_))
    }

    /// Entries of row `i` as `(column, value)` pairs, zeros skipped.
    pub fn row_entries(&self, i: usize) -> Vec<(usize, f64)> {
        match self {
            Design::Dense(at) => at
                .column(i)
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(c, v)| (c, *v))
                .collect(),
            Design::Sparse(m) => {
                let (idx, val) = m.row(i);
                idx.iter().copied().zip(val.iter().copied()).collect()
            }
        }
    }

    /// The dense `n x p` matrix.
    pub fn to_dense_rows(&self) -> DMatrix<f64> {
        match self {
            Design::Dense(at) => at.transpose(),
            Design::Sparse(m) => {
                let mut a = DMatrix::zeros(m.n_rows, m.n_cols);
                for i in 0..m.n_rows {
                    let (idx, val) = m.row(i);
                    for (&c, &v) in idx.iter().zip(val) {
                        a[(i, c)] = v;
                    }
                }
                a
            }
        }
    }

    pub fn densify(&self) -> Design {
        match self {
            Design::Dense(_) => self.clone(),
            Design::Sparse(_) => Design::dense_from_rows(&self.to_dense_rows()),
        }
    }

    pub fn row_dot(&self, i: usize, x: &DVector<f64>) -> f64 {
        match self {
            Design::Dense(at) => at.column(i).dot(x),
            Design::Sparse(m) => {
                let (idx, val) = m.row(i);
                idx.iter().zip(val).map(|(&c, &v)| v * x[c]).sum()
            }
        }
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        match self {
            Design::Dense(at) => at.column(i).norm_squared(),
            Design::Sparse(m) => m.row(i).1.iter().map(|v| v * v).sum(),
        }
    }

    /// `out += scale * a_i`.
    pub fn add_row_scaled(&self, i: usize, scale: f64, out: &mut DVector<f64>) {
        match self {
            Design::Dense(at) => out.axpy(scale, &at.column(i), 1.0),
            Design::Sparse(m) => {
                let (idx, val) = m.row(i);
                for (&c, &v) in idx.iter().zip(val) {
                    out[c] += scale * v;
                }
            }
        }
    }

    /// `A x` (all margins).
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Design::Dense(at) => at.tr_mul(x),
            Design::Sparse(m) => DVector::from_fn(m.n_rows, |i, _| self.row_dot(i, x)),
        }
    }

    /// `A^T v`.
    pub fn tr_mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Design::Dense(at) => at * v,
            Design::Sparse(m) => {
                let mut out = DVector::zeros(m.n_cols);
                for i in 0..m.n_rows {
                    self.add_row_scaled(i, v[i], &mut out);
                }
                out
            }
        }
    }

    /// `sum_j w_j a_j a_j^T` over the listed rows (repeats allowed), accumulated in
    /// list order. Weights must be non-negative.
    pub fn weighted_gram(&self, rows: &[usize], weights: &[f64]) -> DMatrix<f64> {
        debug_assert_eq!(rows.len(), weights.len());
        let p = self.n_cols();
        match self {
            Design::Dense(at) => {
                let mut bt = DMatrix::zeros(p, rows.len());
                for (j, (&i, &w)) in rows.iter().zip(weights).enumerate() {
                    let s = w.sqrt();
                    bt.column_mut(j).axpy(s, &at.column(i), 0.0);
                }
                let b = bt.transpose();
                let mut g = &bt * &b;
                symmetrize(&mut g);
                g
            }
            Design::Sparse(m) => {
                let mut g = DMatrix::zeros(p, p);
                for (&i, &w) in rows.iter().zip(weights) {
                    if w == 0.0 {
                        continue;
                    }
                    let (idx, val) = m.row(i);
                    for (a, (&ca, &va)) in idx.iter().zip(val).enumerate() {
                        let wa = w * va;
                        for (&cb, &vb) in idx[a..].iter().zip(&val[a..]) {
                            g[(ca, cb)] += wa * vb;
                        }
                    }
                }
                // upper triangle filled (idx sorted), mirror it
                for c in 0..p {
                    for r in (c + 1)..p {
                        g[(r, c)] = g[(c, r)];
                    }
                }
                g
            }
        }
    }
}

/// Replaces `m` by `(m + m^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for c in 0..n {
        for r in (c + 1)..n {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
}

/// Response-covariate pairs `(a_i, b_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    design: Design,
    labels: DVector<f64>,
}

impl Dataset {
    pub fn new(design: Design, labels: DVector<f64>) -> Result<Self> {
        let n = design.n_rows();
        if n == 0 || design.n_cols() == 0 {
            return Err(SsnError::EmptyDataset);
        }
        if labels.len() != n {
            return Err(SsnError::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        if labels.iter().any(|b| !b.is_finite()) {
            return Err(SsnError::NonFinite("labels"));
        }
        Ok(Self { design, labels })
    }

    /// Dense dataset from an `n x p` row matrix.
    pub fn from_dense(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        Self::new(Design::dense_from_rows(&a), b)
    }

    pub fn n(&self) -> usize {
        self.design.n_rows()
    }

    pub fn p(&self) -> usize {
        self.design.n_cols()
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// Fraction of non-zero design entries.
    pub fn density(&self) -> f64 {
        self.design.nnz() as f64 / (self.n() as f64 * self.p() as f64)
    }

    pub fn densified(&self) -> Self {
        Self {
            design: self.design.densify(),
            labels: self.labels.clone(),
        }
    }

    /// `(1/n) A^T A`.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.n();
        let rows: Vec<usize> = (0..n).collect();
        let w = vec![1.0 / n as f64; n];
        self.design.weighted_gram(&rows, &w)
    }
}
