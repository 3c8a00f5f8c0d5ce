//! Intrinsic evaluation: Spearman correlation against human similarity
//! ratings, Chinese Whispers categorization scored with the SemEval-2007
//! cluster F-score, and nearest-neighbor reports.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use ndarray::ArrayView2;

use crate::clustering::{chinese_whispers_matrix, ClusterAssignment, CwParams};
use crate::datamodel::Vocabulary;
use crate::error::{Error, Result};
use crate::similarity::{cosine_matrix, pairwise_kernel, unit_rows};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatingKind {
    Semantic,
    Visual,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatingSet {
    pub pairs: Vec<(String, String, f64)>,
    pub kind: RatingKind,
}

impl RatingSet {
    pub fn new(pairs: Vec<(String, String, f64)>, kind: RatingKind) -> Result<Self> {
        let mut seen = HashSet::new();
        for (a, b, r) in &pairs {
            if !r.is_finite() {
                return Err(Error::Validation(format!("non-finite rating for ({a}, {b})")));
            }
            let key = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
            if !seen.insert(key) {
                return Err(Error::Validation(format!("duplicate rated pair ({a}, {b})")));
            }
        }
        Ok(RatingSet { pairs, kind })
    }

    /// Parse `word_a\tword_b\trating` lines.
    pub fn parse(text: &str, origin: &str, kind: RatingKind) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::Parse {
                    path: origin.into(),
                    line: i + 1,
                    message: format!("expected 3 tab-separated fields, found {}", f.len()),
                });
            }
            let r: f64 = f[2].trim().parse().map_err(|_| Error::Parse {
                path: origin.into(),
                line: i + 1,
                message: format!("non-numeric rating {:?}", f[2]),
            })?;
            pairs.push((f[0].to_string(), f[1].to_string(), r));
        }
        if pairs.is_empty() {
            return Err(Error::EmptyInput(format!("{origin}: no ratings")));
        }
        Self::new(pairs, kind)
    }

    pub fn from_file(path: impl AsRef<Path>, kind: RatingKind) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string(), kind)
    }
}

/// Gold category of each covered word.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GoldCategories {
    categories: BTreeMap<String, String>,
}

impl GoldCategories {
    pub fn new(entries: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut categories = BTreeMap::new();
        for (word, cat) in entries {
            if let Some(prev) = categories.insert(word.clone(), cat.clone()) {
                if prev != cat {
                    return Err(Error::Validation(format!(
                        "word {word:?} has two categories: {prev:?} and {cat:?}"
                    )));
                }
            }
        }
        Ok(GoldCategories { categories })
    }

    /// Parse `word\tcategory` lines.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 2 {
                return Err(Error::Parse {
                    path: origin.into(),
                    line: i + 1,
                    message: format!("expected 2 tab-separated fields, found {}", f.len()),
                });
            }
            entries.push((f[0].to_string(), f[1].to_string()));
        }
        Self::new(entries)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&str> {
        self.categories.get(word).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.categories.iter().map(|(w, c)| (w.as_str(), c.as_str()))
    }
}

/// Average ranks (1-based); ties share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with tie-averaged ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "spearman inputs".into(),
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::Validation("spearman needs at least two pairs".into()));
    }
    pearson(&average_ranks(a), &average_ranks(b))
        .ok_or_else(|| Error::Numeric("spearman correlation undefined for constant input".into()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityScore {
    pub rho: f64,
    pub pairs_used: usize,
    /// Pairs dropped because a word is not embedded (only with `skip_missing`).
    pub skipped: Vec<(String, String)>,
}

/// Spearman correlation between embedding cosines and human ratings.
pub fn evaluate_similarity(
    vectors: ArrayView2<f64>,
    vocab: &Vocabulary,
    ratings: &RatingSet,
    skip_missing: bool,
) -> Result<SimilarityScore> {
    let mut unknown: Vec<String> = Vec::new();
    let mut model = Vec::new();
    let mut human = Vec::new();
    let mut skipped = Vec::new();
    for (a, b, r) in &ratings.pairs {
        match (vocab.position(a), vocab.position(b)) {
            (Some(i), Some(j)) => {
                let u = vectors.row(i).to_vec();
                let v = vectors.row(j).to_vec();
                let c = crate::similarity::cosine_similarity(&u, &v).map_err(|_| Error::ZeroVector {
                    row: if u.iter().all(|&x| x == 0.0) { i } else { j },
                    word: if u.iter().all(|&x| x == 0.0) { a.clone() } else { b.clone() },
                })?;
                model.push(c);
                human.push(*r);
            }
            (pa, pb) => {
                if skip_missing {
                    skipped.push((a.clone(), b.clone()));
                } else {
                    if pa.is_none() && !unknown.contains(a) {
                        unknown.push(a.clone());
                    }
                    if pb.is_none() && !unknown.contains(b) {
                        unknown.push(b.clone());
                    }
                }
            }
        }
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownWords(unknown));
    }
    Ok(SimilarityScore {
        rho: spearman(&model, &human)?,
        pairs_used: model.len(),
        skipped,
    })
}

/// SemEval-2007 cluster F-score over the covered words: every gold class is
/// matched to the cluster with the best F, weighted by class size.
pub fn semeval_fscore(assignment: &ClusterAssignment, vocab: &Vocabulary, gold: &GoldCategories) -> Result<f64> {
    if assignment.len() != vocab.len() {
        return Err(Error::DimensionMismatch {
            context: "cluster labels vs vocabulary".into(),
            expected: vocab.len(),
            found: assignment.len(),
        });
    }
    let mut unknown = Vec::new();
    let mut covered = Vec::new();
    for (word, cat) in gold.iter() {
        match vocab.position(word) {
            Some(row) => covered.push((row, cat)),
            None => unknown.push(word.to_string()),
        }
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownWords(unknown));
    }
    if covered.is_empty() {
        return Err(Error::EmptyInput("gold categories cover no words".into()));
    }
    let labels = assignment.labels();
    // Ordered maps keep the floating-point summation order fixed.
    let mut class_sizes: BTreeMap<&str, usize> = BTreeMap::new();
    let mut cluster_sizes: BTreeMap<usize, usize> = BTreeMap::new();
    let mut overlap: BTreeMap<(&str, usize), usize> = BTreeMap::new();
    for &(row, cat) in &covered {
        *class_sizes.entry(cat).or_default() += 1;
        *cluster_sizes.entry(labels[row]).or_default() += 1;
        *overlap.entry((cat, labels[row])).or_default() += 1;
    }
    let total = covered.len() as f64;
    let mut score = 0.0;
    for (&cat, &size) in &class_sizes {
        let best = cluster_sizes
            .iter()
            .map(|(&cluster, &csize)| {
                let both = *overlap.get(&(cat, cluster)).unwrap_or(&0) as f64;
                if both == 0.0 {
                    return 0.0;
                }
                let precision = both / csize as f64;
                let recall = both / size as f64;
                2.0 * precision * recall / (precision + recall)
            })
            .fold(0.0, f64::max);
        score += size as f64 / total * best;
    }
    Ok(score)
}

/// Settings of the categorization evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CategorizeParams {
    pub cw: CwParams,
    pub bandwidth: f64,
}

impl Default for CategorizeParams {
    fn default() -> Self {
        CategorizeParams {
            cw: CwParams::default(),
            bandwidth: 1.0,
        }
    }
}

/// Cluster the embedded words with Chinese Whispers on their cosine kernel
/// graph and score the clusters against the gold categories.
pub fn categorize_and_score(
    vectors: ArrayView2<f64>,
    vocab: &Vocabulary,
    gold: &GoldCategories,
    params: CategorizeParams,
    seed: u64,
) -> Result<(ClusterAssignment, f64)> {
    if gold.is_empty() {
        return Err(Error::EmptyInput("no gold categories".into()));
    }
    let w = pairwise_kernel(vectors, params.bandwidth, Some(vocab))?;
    let cw = chinese_whispers_matrix(&w, params.cw, seed)?;
    let f = semeval_fscore(&cw.assignment, vocab, gold)?;
    Ok((cw.assignment, f))
}

fn cosines(vectors: ArrayView2<f64>, vocab: &Vocabulary) -> Result<ndarray::Array2<f64>> {
    let (unit, _) = unit_rows(vectors).map_err(|row| Error::ZeroVector {
        row,
        word: vocab.word(row).to_string(),
    })?;
    Ok(cosine_matrix(&unit))
}

/// Words whose cosine to `word` is at least `ratio` times the best cosine,
/// best first. Ties are ordered by word.
pub fn nearest_neighbors(
    vectors: ArrayView2<f64>,
    vocab: &Vocabulary,
    word: &str,
    ratio: f64,
) -> Result<Vec<(String, f64)>> {
    let row = vocab.require(word)?;
    let c = cosines(vectors, vocab)?;
    let mut others: Vec<(usize, f64)> = (0..vocab.len()).filter(|&k| k != row).map(|k| (k, c[[row, k]])).collect();
    others.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| vocab.word(a.0).cmp(vocab.word(b.0))));
    let best = others[0].1;
    let threshold = if best > 0.0 { ratio * best } else { best };
    Ok(others
        .into_iter()
        .filter(|&(_, s)| s >= threshold)
        .map(|(k, s)| (vocab.word(k).to_string(), s))
        .collect())
}

/// The `k` words most similar to `word`, best first.
pub fn top_k_neighbors(vectors: ArrayView2<f64>, vocab: &Vocabulary, word: &str, k: usize) -> Result<Vec<(String, f64)>> {
    let row = vocab.require(word)?;
    let c = cosines(vectors, vocab)?;
    let mut others: Vec<(usize, f64)> = (0..vocab.len()).filter(|&j| j != row).map(|j| (j, c[[row, j]])).collect();
    others.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| vocab.word(a.0).cmp(vocab.word(b.0))));
    Ok(others
        .into_iter()
        .take(k)
        .map(|(j, s)| (vocab.word(j).to_string(), s))
        .collect())
}

/// The `count` most similar unordered pairs, descending; ties ordered
/// lexicographically by (first word, second word).
pub fn top_pairs(vectors: ArrayView2<f64>, vocab: &Vocabulary, count: usize) -> Result<Vec<(String, String, f64)>> {
    if count == 0 {
        return Err(Error::Validation("count must be at least 1".into()));
    }
    let c = cosines(vectors, vocab)?;
    let n = vocab.len();
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for j in 0..n {
        for k in (j + 1)..n {
            let (a, b) = if vocab.word(j) <= vocab.word(k) { (j, k) } else { (k, j) };
            pairs.push((a, b, c[[j, k]]));
        }
    }
    pairs.sort_by(|x, y| {
        y.2.total_cmp(&x.2)
            .then_with(|| vocab.word(x.0).cmp(vocab.word(y.0)))
            .then_with(|| vocab.word(x.1).cmp(vocab.word(y.1)))
    });
    Ok(pairs
        .into_iter()
        .take(count)
        .map(|(a, b, s)| (vocab.word(a).to_string(), vocab.word(b).to_string(), s))
        .collect())
}
