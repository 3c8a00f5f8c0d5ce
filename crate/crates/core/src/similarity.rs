//! Cosine kernel, row normalization and the cross-entropy between affinity
//! matrices.

use ndarray::{Array2, ArrayView2};

use crate::datamodel::{SimilarityGraph, Vocabulary};
use crate::error::{Error, Result};

/// Lower bound applied to normalized probabilities before renormalizing.
pub const PROB_FLOOR: f64 = 1e-12;

/// Row-stochastic affinity with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAffinity {
    probs: Array2<f64>,
}

impl NormalizedAffinity {
    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.nrows() == 0
    }
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            context: "cosine similarity".into(),
            expected: u.len(),
            found: v.len(),
        });
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 {
        return Err(Error::ZeroVector {
            row: 0,
            word: String::new(),
        });
    }
    if nv == 0.0 {
        return Err(Error::ZeroVector {
            row: 1,
            word: String::new(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Rows scaled to unit length, plus the original norms. Fails on a zero row.
pub(crate) fn unit_rows(e: ArrayView2<f64>) -> std::result::Result<(Array2<f64>, Vec<f64>), usize> {
    let mut unit = e.to_owned();
    let mut norms = Vec::with_capacity(e.nrows());
    for (j, mut row) in unit.rows_mut().into_iter().enumerate() {
        let r = row.dot(&row).sqrt();
        if !(r > 0.0) || !r.is_finite() {
            return Err(j);
        }
        row.mapv_inplace(|v| v / r);
        norms.push(r);
    }
    Ok((unit, norms))
}

/// Cosine similarity of every pair of rows, clamped to `[-1, 1]`, with an
/// exact unit diagonal and exact symmetry.
pub(crate) fn cosine_matrix(unit: &Array2<f64>) -> Array2<f64> {
    let n = unit.nrows();
    let mut c = Array2::zeros((n, n));
    for j in 0..n {
        c[[j, j]] = 1.0;
        let uj = unit.row(j);
        for k in (j + 1)..n {
            let v = uj.dot(&unit.row(k)).clamp(-1.0, 1.0);
            c[[j, k]] = v;
            c[[k, j]] = v;
        }
    }
    c
}

/// `exp(-(1 - c) / l)` applied elementwise; the diagonal stays exactly 1.
pub(crate) fn kernel_from_cosines(cos: &Array2<f64>, bandwidth: f64) -> Array2<f64> {
    let mut w = cos.mapv(|c| (-(1.0 - c) / bandwidth).exp());
    for j in 0..w.nrows() {
        w[[j, j]] = 1.0;
    }
    w
}

fn zero_row_error(row: usize, vocab: Option<&Vocabulary>) -> Error {
    Error::ZeroVector {
        row,
        word: vocab.map(|v| v.word(row).to_string()).unwrap_or_default(),
    }
}

/// Exponential cosine kernel over the rows of `e`, as a raw matrix.
pub fn pairwise_kernel(
    e: ArrayView2<f64>,
    bandwidth: f64,
    vocab: Option<&Vocabulary>,
) -> Result<Array2<f64>> {
    if !(bandwidth > 0.0) {
        return Err(Error::Validation(format!(
            "kernel bandwidth must be positive, got {bandwidth}"
        )));
    }
    let (unit, _) = unit_rows(e).map_err(|row| zero_row_error(row, vocab))?;
    Ok(kernel_from_cosines(&cosine_matrix(&unit), bandwidth))
}

/// Similarity graph `S_l(E)` with weights `exp(-(1 - cos(e_j, e_k)) / l)`.
pub fn pairwise_similarity(
    e: ArrayView2<f64>,
    bandwidth: f64,
    vocab: &Vocabulary,
) -> Result<SimilarityGraph> {
    if e.nrows() != vocab.len() {
        return Err(Error::DimensionMismatch {
            context: "embedding rows vs vocabulary".into(),
            expected: vocab.len(),
            found: e.nrows(),
        });
    }
    let w = pairwise_kernel(e, bandwidth, Some(vocab))?;
    Ok(SimilarityGraph::from_parts(w, vocab.clone()))
}

/// Zero the diagonal, divide each row by its sum, then floor at
/// [`PROB_FLOOR`] and renormalize.
pub fn row_normalize_matrix(w: ArrayView2<f64>) -> Result<NormalizedAffinity> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "row normalization of a non-square matrix".into(),
            expected: n,
            found: w.ncols(),
        });
    }
    let mut probs = Array2::zeros((n, n));
    for j in 0..n {
        let sum: f64 = (0..n).filter(|&k| k != j).map(|k| w[[j, k]]).sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::Numeric(format!(
                "row {j} has no positive off-diagonal weight"
            )));
        }
        let mut floored = 0.0;
        for k in (0..n).filter(|&k| k != j) {
            let p = (w[[j, k]] / sum).max(PROB_FLOOR);
            probs[[j, k]] = p;
            floored += p;
        }
        for k in (0..n).filter(|&k| k != j) {
            probs[[j, k]] /= floored;
        }
    }
    Ok(NormalizedAffinity { probs })
}

pub fn row_normalize(g: &SimilarityGraph) -> Result<NormalizedAffinity> {
    row_normalize_matrix(g.weights().view())
}

/// `-(1/N) sum_j sum_{k != j} q[j][k] * log p[j][k]`: `p` is the model
/// affinity, `q` the target.
pub fn cross_entropy(p: &NormalizedAffinity, q: &NormalizedAffinity) -> Result<f64> {
    let n = p.len();
    if q.len() != n {
        return Err(Error::DimensionMismatch {
            context: "cross-entropy arguments".into(),
            expected: n,
            found: q.len(),
        });
    }
    let mut total = 0.0;
    for j in 0..n {
        for k in (0..n).filter(|&k| k != j) {
            let qv = q.probs[[j, k]];
            if qv != 0.0 {
                total -= qv * p.probs[[j, k]].ln();
            }
        }
    }
    Ok(total / n as f64)
}
