//! Planted-community data generator used as a ground-truth oracle.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::clustering::ClusterAssignment;
use crate::datamodel::{write_features, FeatureMatrix, Modality, Vocabulary};
use crate::error::{Error, Result};
use crate::pipeline::MissingModalitySpec;
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedSpec {
    pub n_words: usize,
    pub n_communities: usize,
    /// Feature widths of the two modalities.
    pub dims: (usize, usize),
    /// Per-coordinate noise standard deviation of each modality.
    pub noise: (f64, f64),
    /// Fraction of communities whose membership is the same in both
    /// modalities. Words of the other communities get an independent random
    /// community in `Y`.
    pub consistency: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            n_words: 100,
            n_communities: 5,
            dims: (50, 30),
            noise: (0.25, 0.25),
            consistency: 1.0,
            seed: 42,
        }
    }
}

impl PlantedSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_communities == 0 || self.n_communities > self.n_words {
            return Err(Error::Validation(format!(
                "need 1 <= communities <= words, got {} communities for {} words",
                self.n_communities, self.n_words
            )));
        }
        if self.n_words < 2 {
            return Err(Error::Validation("need at least 2 words".into()));
        }
        if self.dims.0 == 0 || self.dims.1 == 0 {
            return Err(Error::Validation("feature dimensions must be positive".into()));
        }
        if !(self.noise.0 >= 0.0 && self.noise.1 >= 0.0) {
            return Err(Error::Validation("noise must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.consistency) {
            return Err(Error::Validation("consistency must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Number of communities with cross-modal agreement.
    pub fn consistent_communities(&self) -> usize {
        (self.consistency * self.n_communities as f64).round() as usize
    }
}

#[derive(Clone, Debug)]
pub struct PlantedData {
    pub x: FeatureMatrix,
    pub y: FeatureMatrix,
    /// Planted community of every word (the `X` membership).
    pub gold: ClusterAssignment,
    /// Community each word was drawn from in `Y`.
    pub y_membership: Vec<usize>,
}

pub fn word_name(i: usize) -> String {
    format!("w{i:04}")
}

fn unit_gaussian<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Draw `K` unit centroids per modality and place every word at its
/// community centroid plus Gaussian noise. Word `i` belongs to community
/// `floor(i * K / N)`.
pub fn generate_planted(spec: &PlantedSpec) -> Result<PlantedData> {
    spec.validate()?;
    let (n, k) = (spec.n_words, spec.n_communities);
    let mut rng = seed::rng(spec.seed);
    let cx: Vec<Vec<f64>> = (0..k).map(|_| unit_gaussian(&mut rng, spec.dims.0)).collect();
    let cy: Vec<Vec<f64>> = (0..k).map(|_| unit_gaussian(&mut rng, spec.dims.1)).collect();

    let membership: Vec<usize> = (0..n).map(|i| i * k / n).collect();
    let consistent = spec.consistent_communities();
    let y_membership: Vec<usize> = membership
        .iter()
        .map(|&c| if c < consistent { c } else { rng.random_range(0..k) })
        .collect();

    let mut x = Array2::zeros((n, spec.dims.0));
    let mut y = Array2::zeros((n, spec.dims.1));
    for i in 0..n {
        for (j, v) in x.row_mut(i).iter_mut().enumerate() {
            *v = cx[membership[i]][j] + spec.noise.0 * rng.sample::<f64, _>(StandardNormal);
        }
        for (j, v) in y.row_mut(i).iter_mut().enumerate() {
            *v = cy[y_membership[i]][j] + spec.noise.1 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let vocab = Vocabulary::new((0..n).map(word_name).collect())?;
    Ok(PlantedData {
        x: FeatureMatrix::new(vocab.clone(), x, "x")?,
        y: FeatureMatrix::new(vocab, y, "y")?,
        gold: ClusterAssignment::from_labels(&membership),
        y_membership,
    })
}

/// Zero the rows of `words` and return the matching missing-modality spec.
pub fn drop_modality(
    m: &FeatureMatrix,
    words: &BTreeSet<String>,
    modality: Modality,
) -> Result<(FeatureMatrix, MissingModalitySpec)> {
    let unknown: Vec<String> = words
        .iter()
        .filter(|w| m.vocab().position(w).is_none())
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownWords(unknown));
    }
    let mut data = m.data().clone();
    for w in words {
        data.row_mut(m.vocab().position(w).unwrap()).fill(0.0);
    }
    let spec = MissingModalitySpec::for_words(words.iter().cloned(), modality)?;
    Ok((m.with_data(data), spec))
}

/// Gold categories as `word\tcategory` lines.
pub fn gold_tsv(vocab: &Vocabulary, gold: &ClusterAssignment) -> String {
    let mut out = String::new();
    for (w, l) in vocab.words().iter().zip(gold.labels()) {
        writeln!(out, "{w}\tc{l}").unwrap();
    }
    out
}

/// Write `X.tsv`, `Y.tsv` and `gold.tsv` into `dir`.
pub fn write_planted(data: &PlantedData, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_features(&data.x, dir.join("X.tsv"))?;
    write_features(&data.y, dir.join("Y.tsv"))?;
    let gold = dir.join("gold.tsv");
    std::fs::write(&gold, gold_tsv(data.x.vocab(), &data.gold)).map_err(|e| Error::io(gold, e))
}
