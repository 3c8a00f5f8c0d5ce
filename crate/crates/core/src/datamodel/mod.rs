//! Typed containers shared by every stage of the pipeline.

mod config;
mod persist;
mod tsv;

use std::collections::HashMap;
use std::fmt;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

pub use config::{
    InitMethod, LossOrientation, ModalityConfig, OptimizerConfig, PipelineConfig, Preset,
};
pub use persist::{load_model, save_model, TraceEntry, TrainedModel, FORMAT_VERSION, MAGIC};
pub use tsv::{load_features, parse_features, write_features};
pub(crate) use tsv::features_to_string;

/// Ordered set of unique words. Row `j` of every matrix in a pipeline run
/// refers to `words()[j]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (row, word) in words.iter().enumerate() {
            if let Some(first) = index.insert(word.clone(), row) {
                return Err(Error::DuplicateWord {
                    word: word.clone(),
                    first_line: first + 1,
                    second_line: row + 1,
                });
            }
        }
        if words.len() < 2 {
            return Err(Error::Validation(format!(
                "a vocabulary needs at least 2 words, got {}",
                words.len()
            )));
        }
        Ok(Vocabulary { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, row: usize) -> &str {
        &self.words[row]
    }

    pub fn position(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Resolve a word to its row, or fail with [`Error::UnknownWords`].
    pub fn require(&self, word: &str) -> Result<usize> {
        self.position(word)
            .ok_or_else(|| Error::UnknownWords(vec![word.to_string()]))
    }
}

/// The two input modalities. `X` is conventionally the textual one and `Y`
/// the visual one; nothing in the algorithm depends on that.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    X,
    Y,
}

impl Modality {
    pub fn other(self) -> Modality {
        match self {
            Modality::X => Modality::Y,
            Modality::Y => Modality::X,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::X => "x",
            Modality::Y => "y",
        })
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(Modality::X),
            "y" => Ok(Modality::Y),
            other => Err(Error::Validation(format!(
                "unknown modality {other:?}, expected x or y"
            ))),
        }
    }
}

/// Per-word features of one modality.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    vocab: Vocabulary,
    data: Array2<f64>,
    modality_tag: String,
}

impl FeatureMatrix {
    pub fn new(vocab: Vocabulary, data: Array2<f64>, modality_tag: impl Into<String>) -> Result<Self> {
        if data.nrows() != vocab.len() {
            return Err(Error::DimensionMismatch {
                context: "feature rows vs vocabulary".into(),
                expected: vocab.len(),
                found: data.nrows(),
            });
        }
        if data.ncols() == 0 {
            return Err(Error::Validation("feature matrix has no columns".into()));
        }
        if let Some(((row, col), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature at row {row} ({:?}), column {col}",
                vocab.word(row)
            )));
        }
        Ok(FeatureMatrix {
            vocab,
            data,
            modality_tag: modality_tag.into(),
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn modality_tag(&self) -> &str {
        &self.modality_tag
    }

    pub fn n_features(&self) -> usize {
        self.data.ncols()
    }

    pub(crate) fn with_data(&self, data: Array2<f64>) -> FeatureMatrix {
        FeatureMatrix {
            vocab: self.vocab.clone(),
            data,
            modality_tag: self.modality_tag.clone(),
        }
    }

    /// Reorder the rows to follow `target`, which must hold the same words.
    pub fn align_to(&self, target: &Vocabulary) -> Result<FeatureMatrix> {
        check_same_words(&self.vocab, target)?;
        if &self.vocab == target {
            return Ok(self.clone());
        }
        let mut data = Array2::zeros((target.len(), self.data.ncols()));
        for (row, word) in target.words().iter().enumerate() {
            let src = self.vocab.position(word).expect("checked above");
            data.row_mut(row).assign(&self.data.row(src));
        }
        Ok(FeatureMatrix {
            vocab: target.clone(),
            data,
            modality_tag: self.modality_tag.clone(),
        })
    }

    /// Per-column min-max scaling onto `[-1, 1]`; constant columns map to 0.
    pub fn scale(&self) -> FeatureMatrix {
        self.with_data(scale_columns(self.data.view(), None))
    }
}

/// Per-column affine map of `data` onto `[-1, 1]`.
///
/// When `rows` is given only those rows enter the min/max and only those rows
/// are rewritten; the other rows are left at zero. That is how placeholder
/// rows of words that lack a modality stay out of the column ranges.
pub(crate) fn scale_columns(data: ArrayView2<f64>, rows: Option<&[bool]>) -> Array2<f64> {
    let mut out = Array2::zeros(data.raw_dim());
    let use_row = |r: usize| rows.map_or(true, |mask| mask[r]);
    for (col, column) in data.axis_iter(Axis(1)).enumerate() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (r, &v) in column.iter().enumerate() {
            if use_row(r) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        for (r, &v) in column.iter().enumerate() {
            if !use_row(r) {
                continue;
            }
            out[[r, col]] = if hi > lo {
                (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
            } else {
                0.0
            };
        }
    }
    out
}

/// Scale features per column onto `[-1, 1]`.
pub fn scale_features(m: &FeatureMatrix) -> FeatureMatrix {
    m.scale()
}

pub(crate) fn check_same_words(a: &Vocabulary, b: &Vocabulary) -> Result<()> {
    let missing_in_b: Vec<String> = a
        .words()
        .iter()
        .filter(|w| b.position(w).is_none())
        .cloned()
        .collect();
    let missing_in_a: Vec<String> = b
        .words()
        .iter()
        .filter(|w| a.position(w).is_none())
        .cloned()
        .collect();
    if missing_in_a.is_empty() && missing_in_b.is_empty() {
        return Ok(());
    }
    let mut parts = Vec::new();
    if !missing_in_b.is_empty() {
        parts.push(format!("only in first: {}", missing_in_b.join(", ")));
    }
    if !missing_in_a.is_empty() {
        parts.push(format!("only in second: {}", missing_in_a.join(", ")));
    }
    Err(Error::VocabularyMismatch(parts.join("; ")))
}

/// Dense symmetric similarity graph over a vocabulary. Weights lie in
/// `[0, 1]` and the diagonal is 1.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityGraph {
    weights: Array2<f64>,
    vocab: Vocabulary,
}

impl SimilarityGraph {
    pub fn new(weights: Array2<f64>, vocab: Vocabulary) -> Result<Self> {
        let n = vocab.len();
        if weights.dim() != (n, n) {
            return Err(Error::DimensionMismatch {
                context: "graph size vs vocabulary".into(),
                expected: n,
                found: weights.nrows(),
            });
        }
        for j in 0..n {
            for k in 0..n {
                let w = weights[[j, k]];
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::Validation(format!(
                        "graph weight {w} at ({j}, {k}) is outside [0, 1]"
                    )));
                }
                if w != weights[[k, j]] {
                    return Err(Error::Validation(format!(
                        "graph is not symmetric at ({j}, {k})"
                    )));
                }
            }
        }
        Ok(SimilarityGraph { weights, vocab })
    }

    /// Construct without validation; callers guarantee the invariants.
    pub(crate) fn from_parts(weights: Array2<f64>, vocab: Vocabulary) -> Self {
        debug_assert_eq!(weights.dim(), (vocab.len(), vocab.len()));
        SimilarityGraph { weights, vocab }
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn into_weights(self) -> Array2<f64> {
        self.weights
    }
}

/// Current embedding of one branch.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingState {
    pub embedding: Array2<f64>,
    pub iteration: usize,
}

impl EmbeddingState {
    pub fn new(embedding: Array2<f64>) -> Self {
        EmbeddingState {
            embedding,
            iteration: 0,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.embedding.nrows()
    }

    pub fn dim(&self) -> usize {
        self.embedding.ncols()
    }
}
