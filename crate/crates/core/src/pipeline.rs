//! Two-layer pipeline: coupled unimodal SGE branches, then a joint SGE over
//! their concatenation. Also hosts inductive inference for words that lack
//! one modality.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::datamodel::{
    scale_columns, EmbeddingState, FeatureMatrix, Modality, PipelineConfig, SimilarityGraph,
    TraceEntry, TrainedModel, Vocabulary,
};
use crate::error::{Error, Result};
use crate::seed;
use crate::sge::{
    initial_embedding, normalize_rows, run_sge, sge_iteration, IterationGraphs, IterationOutcome,
    SgeParams,
};
use crate::similarity::{cosine_matrix, kernel_from_cosines, pairwise_similarity, unit_rows};

/// Words whose features are absent in one modality.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MissingModalitySpec {
    missing: BTreeMap<String, Modality>,
}

impl MissingModalitySpec {
    pub fn new() -> Self {
        Self::default()
    }

    /// All of `words` lack `modality`.
    pub fn for_words<I, S>(words: I, modality: Modality) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut spec = Self::new();
        for w in words {
            spec.insert(w, modality)?;
        }
        Ok(spec)
    }

    /// Record that `word` lacks `modality`. A word may lack at most one.
    pub fn insert(&mut self, word: impl Into<String>, modality: Modality) -> Result<()> {
        let word = word.into();
        match self.missing.get(&word) {
            Some(&m) if m != modality => Err(Error::Validation(format!(
                "word {word:?} is listed as missing both modalities"
            ))),
            _ => {
                self.missing.insert(word, modality);
                Ok(())
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn len(&self) -> usize {
        self.missing.len()
    }

    pub fn missing(&self, word: &str) -> Option<Modality> {
        self.missing.get(word).copied()
    }

    pub fn words(&self, modality: Modality) -> impl Iterator<Item = &str> {
        self.missing
            .iter()
            .filter(move |(_, &m)| m == modality)
            .map(|(w, _)| w.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Modality)> {
        self.missing.iter().map(|(w, &m)| (w.as_str(), m))
    }

    /// Parse `word<TAB>x|y` lines.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut spec = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: i + 1,
                    message: "expected `word<TAB>x|y`".into(),
                });
            }
            let modality: Modality = fields[1].parse().map_err(|e: Error| Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
            spec.insert(fields[0], modality).map_err(|e| Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Per-row presence mask of `modality` over `vocab`.
    fn present_mask(&self, vocab: &Vocabulary, modality: Modality) -> Result<Vec<bool>> {
        let unknown: Vec<String> = self
            .missing
            .keys()
            .filter(|w| vocab.position(w).is_none())
            .cloned()
            .collect();
        if !unknown.is_empty() {
            return Err(Error::UnknownWords(unknown));
        }
        let mut mask = vec![true; vocab.len()];
        for w in self.words(modality) {
            mask[vocab.position(w).expect("checked")] = false;
        }
        Ok(mask)
    }
}

/// Runtime knobs that never change the result.
#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Run the two first-layer branches on separate threads when > 1.
    pub threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { threads: 1 }
    }
}

/// Everything the first layer consumes, derived from the raw inputs.
#[derive(Clone, Debug)]
pub struct PreparedInputs {
    pub vocab: Vocabulary,
    pub x_scaled: Array2<f64>,
    pub y_scaled: Array2<f64>,
    pub present_x: Vec<bool>,
    pub present_y: Vec<bool>,
    pub g0_x: SimilarityGraph,
    pub g0_y: SimilarityGraph,
    pub init_x: EmbeddingState,
    pub init_y: EmbeddingState,
}

/// First-layer result.
#[derive(Clone, Debug)]
pub struct Layer1Output {
    pub x: EmbeddingState,
    pub y: EmbeddingState,
    pub graph_x: SimilarityGraph,
    pub graph_y: SimilarityGraph,
    pub trace: Vec<TraceEntry>,
}

/// Second-layer result.
#[derive(Clone, Debug)]
pub struct Layer2Output {
    pub z: EmbeddingState,
    pub graph_z: SimilarityGraph,
    pub trace: Vec<TraceEntry>,
}

pub fn branch_seed(seed: u64, modality: Modality) -> u64 {
    seed::derive(
        seed,
        match modality {
            Modality::X => seed::TAG_BRANCH_X,
            Modality::Y => seed::TAG_BRANCH_Y,
        },
    )
}

pub fn joint_seed(seed: u64) -> u64 {
    seed::derive(seed, seed::TAG_BRANCH_Z)
}

/// Branch settings for one modality of the first layer.
pub fn branch_params(config: &PipelineConfig, modality: Modality) -> SgeParams {
    SgeParams {
        config: config.modality(modality).clone(),
        iterations: config.k1,
        optimizer: config.optimizer.clone(),
        kmeans_restarts: config.kmeans_restarts,
        orientation: config.loss_orientation,
        seed: branch_seed(config.seed, modality),
    }
}

/// Joint-layer settings; the coupling weight is forced to zero.
pub fn joint_params(config: &PipelineConfig) -> SgeParams {
    let mut joint = config.joint.clone();
    joint.beta = 0.0;
    SgeParams {
        config: joint,
        iterations: config.k2,
        optimizer: config.optimizer.clone(),
        kmeans_restarts: config.kmeans_restarts,
        orientation: config.loss_orientation,
        seed: joint_seed(config.seed),
    }
}

fn select_rows(m: &Array2<f64>, mask: &[bool]) -> Array2<f64> {
    let rows: Vec<usize> = (0..m.nrows()).filter(|&r| mask[r]).collect();
    m.select(Axis(0), &rows)
}

/// Exact kernel over pairs of present rows; other cells are `NaN`.
fn partial_kernel(data: &Array2<f64>, present: &[bool], bandwidth: f64, vocab: &Vocabulary) -> Result<Array2<f64>> {
    let rows: Vec<usize> = (0..data.nrows()).filter(|&r| present[r]).collect();
    let sub = data.select(Axis(0), &rows);
    let (unit, _) = unit_rows(sub.view()).map_err(|i| Error::ZeroVector {
        row: rows[i],
        word: vocab.word(rows[i]).to_string(),
    })?;
    let w = kernel_from_cosines(&cosine_matrix(&unit), bandwidth);
    let n = data.nrows();
    let mut out = Array2::from_elem((n, n), f64::NAN);
    for (a, &ra) in rows.iter().enumerate() {
        for (b, &rb) in rows.iter().enumerate() {
            out[[ra, rb]] = w[[a, b]];
        }
    }
    Ok(out)
}

/// Replace the rows and columns of the missing words of `own` by those of
/// `other`.
pub fn substitute_rows(own: &SimilarityGraph, other: &SimilarityGraph, present: &[bool]) -> SimilarityGraph {
    if present.iter().all(|&p| p) {
        return own.clone();
    }
    let n = own.len();
    let mut w = own.weights().clone();
    let src = other.weights();
    for j in (0..n).filter(|&j| !present[j]) {
        for k in 0..n {
            w[[j, k]] = src[[j, k]];
            w[[k, j]] = src[[k, j]];
        }
    }
    SimilarityGraph::from_parts(w, own.vocab().clone())
}

/// Align, scale, build the initial graphs and initial embeddings.
pub fn prepare_inputs(
    x: &FeatureMatrix,
    y: &FeatureMatrix,
    missing: &MissingModalitySpec,
    config: &PipelineConfig,
) -> Result<PreparedInputs> {
    let vocab = x.vocab().clone();
    let y = y.align_to(&vocab)?;
    config.validate(Some(vocab.len()))?;
    let present_x = missing.present_mask(&vocab, Modality::X)?;
    let present_y = missing.present_mask(&vocab, Modality::Y)?;

    let x_scaled = scale_columns(x.data().view(), Some(&present_x));
    let y_scaled = scale_columns(y.data().view(), Some(&present_y));

    let (lx, ly) = (config.modality_x.bandwidth, config.modality_y.bandwidth);
    let kx = partial_kernel(&x_scaled, &present_x, lx, &vocab)?;
    let ky = partial_kernel(&y_scaled, &present_y, ly, &vocab)?;
    // A pair with no modality in common gets the kernel value of orthogonal
    // vectors.
    let fill = |own: &Array2<f64>, other: &Array2<f64>, l: f64| {
        let mut w = own.clone();
        for ((j, k), v) in w.indexed_iter_mut() {
            if v.is_nan() {
                let alt = other[[j, k]];
                *v = if alt.is_nan() { (-1.0 / l).exp() } else { alt };
            }
        }
        SimilarityGraph::from_parts(w, vocab.clone())
    };
    let g0_x = fill(&kx, &ky, lx);
    let g0_y = fill(&ky, &kx, ly);

    let base_init = |data: &Array2<f64>, present: &[bool], dim: usize, m: Modality| -> Array2<f64> {
        let sub = select_rows(data, present);
        let init_seed = seed::derive(branch_seed(config.seed, m), seed::TAG_INIT);
        let e = initial_embedding(sub.view(), dim, config.init, init_seed);
        let mut full = Array2::zeros((data.nrows(), dim));
        let rows = (0..data.nrows()).filter(|&r| present[r]);
        for (i, r) in rows.enumerate() {
            full.row_mut(r).assign(&e.row(i));
        }
        full
    };
    let (dx, dy) = (config.modality_x.embed_dim, config.modality_y.embed_dim);
    let base_x = base_init(&x_scaled, &present_x, dx, Modality::X);
    let base_y = base_init(&y_scaled, &present_y, dy, Modality::Y);
    // Rows of missing words are seeded from the other modality's init.
    let borrow = |own: &Array2<f64>, other: &Array2<f64>, present: &[bool]| {
        let mut e = own.clone();
        let width = own.ncols().min(other.ncols());
        for r in (0..own.nrows()).filter(|&r| !present[r]) {
            e.row_mut(r).fill(0.0);
            e.row_mut(r)
                .slice_mut(ndarray::s![..width])
                .assign(&other.row(r).slice(ndarray::s![..width]));
        }
        e
    };
    let init_x = borrow(&base_x, &base_y, &present_x);
    let init_y = borrow(&base_y, &base_x, &present_y);

    Ok(PreparedInputs {
        vocab,
        x_scaled,
        y_scaled,
        present_x,
        present_y,
        g0_x,
        g0_y,
        init_x: EmbeddingState::new(init_x),
        init_y: EmbeddingState::new(init_y),
    })
}

fn trace_entries(layer: u8, branch: u8, iteration: usize, trace: &[f64]) -> impl Iterator<Item = TraceEntry> + '_ {
    trace.iter().enumerate().map(move |(step, &objective)| TraceEntry {
        layer,
        branch,
        iteration: iteration as u32,
        step: step as u32,
        objective,
    })
}

/// Coupled first layer on prepared inputs. Both branches read the other's
/// graph from the previous iteration.
pub fn run_layer1_prepared(
    inputs: &PreparedInputs,
    config: &PipelineConfig,
    options: RunOptions,
) -> Result<Layer1Output> {
    let px = branch_params(config, Modality::X);
    let py = branch_params(config, Modality::Y);
    let mut state_x = inputs.init_x.clone();
    let mut state_y = inputs.init_y.clone();
    let mut graph_x = inputs.g0_x.clone();
    let mut graph_y = inputs.g0_y.clone();
    let mut trace = Vec::new();

    for i in 1..=config.k1 {
        let prev_x = substitute_rows(&graph_x, &graph_y, &inputs.present_x);
        let prev_y = substitute_rows(&graph_y, &graph_x, &inputs.present_y);
        let other_for_x = (px.config.beta > 0.0).then_some(&graph_y);
        let other_for_y = (py.config.beta > 0.0).then_some(&graph_x);
        let step_x = || {
            sge_iteration(
                &state_x,
                IterationGraphs {
                    g_prev: &prev_x,
                    g_init: &inputs.g0_x,
                    g_other: other_for_x,
                },
                &px,
                i,
            )
        };
        let step_y = || {
            sge_iteration(
                &state_y,
                IterationGraphs {
                    g_prev: &prev_y,
                    g_init: &inputs.g0_y,
                    g_other: other_for_y,
                },
                &py,
                i,
            )
        };
        let (out_x, out_y): (Result<IterationOutcome>, Result<IterationOutcome>) = if options.threads > 1 {
            std::thread::scope(|s| {
                let hy = s.spawn(step_y);
                let ox = step_x();
                (ox, hy.join().expect("branch thread panicked"))
            })
        } else {
            (step_x(), step_y())
        };
        let (out_x, out_y) = (out_x?, out_y?);
        trace.extend(trace_entries(1, 0, i, &out_x.trace));
        trace.extend(trace_entries(1, 1, i, &out_y.trace));
        state_x = out_x.state;
        state_y = out_y.state;
        graph_x = out_x.graph;
        graph_y = out_y.graph;
    }
    Ok(Layer1Output {
        x: state_x,
        y: state_y,
        graph_x,
        graph_y,
        trace,
    })
}

/// Coupled first layer over two aligned feature matrices.
pub fn run_layer1(x: &FeatureMatrix, y: &FeatureMatrix, config: &PipelineConfig) -> Result<Layer1Output> {
    let inputs = prepare_inputs(x, y, &MissingModalitySpec::new(), config)?;
    run_layer1_prepared(&inputs, config, RunOptions::default())
}

/// Row-normalize both embeddings and place them side by side.
pub fn concatenate_embeddings(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            context: "layer-1 embeddings".into(),
            expected: x.nrows(),
            found: y.nrows(),
        });
    }
    let xn = normalize_rows(&x.to_owned());
    let yn = normalize_rows(&y.to_owned());
    Ok(concatenate(Axis(1), &[xn.view(), yn.view()]).expect("row counts match"))
}

/// Joint SGE over an arbitrary first-layer representation `z0`.
pub fn run_joint(z0: ArrayView2<f64>, vocab: &Vocabulary, config: &PipelineConfig) -> Result<Layer2Output> {
    let params = joint_params(config);
    let g0 = pairwise_similarity(z0, params.config.bandwidth, vocab)?;
    let init_seed = seed::derive(params.seed, seed::TAG_INIT);
    let init = EmbeddingState::new(initial_embedding(z0, params.config.embed_dim, config.init, init_seed));
    let run = run_sge(&init, &g0, &params, None)?;
    let mut trace = Vec::new();
    for (i, t) in run.traces.iter().enumerate() {
        trace.extend(trace_entries(2, 2, i + 1, t));
    }
    Ok(Layer2Output {
        z: run.state,
        graph_z: run.graph,
        trace,
    })
}

/// Second layer: concatenate the enhanced unimodal embeddings and embed them
/// jointly without cross-modal coupling.
pub fn run_layer2(
    x: &EmbeddingState,
    y: &EmbeddingState,
    vocab: &Vocabulary,
    config: &PipelineConfig,
) -> Result<Layer2Output> {
    if x.n_rows() != vocab.len() {
        return Err(Error::VocabularyMismatch(format!(
            "embedding has {} rows for {} words",
            x.n_rows(),
            vocab.len()
        )));
    }
    let z0 = concatenate_embeddings(x.embedding.view(), y.embedding.view())?;
    run_joint(z0.view(), vocab, config)
}

/// Full pipeline with inductive inference for the words in `missing` and
/// explicit runtime options.
pub fn run_pipeline_with(
    x: &FeatureMatrix,
    y: &FeatureMatrix,
    missing: &MissingModalitySpec,
    config: &PipelineConfig,
    options: RunOptions,
) -> Result<TrainedModel> {
    let inputs = prepare_inputs(x, y, missing, config)?;
    let layer1 = run_layer1_prepared(&inputs, config, options)?;
    let layer2 = run_layer2(&layer1.x, &layer1.y, &inputs.vocab, config)?;
    let mut trace = layer1.trace;
    trace.extend(layer2.trace);
    let model = TrainedModel {
        vocab: inputs.vocab,
        x_embed: layer1.x,
        y_embed: layer1.y,
        z_embed: layer2.z,
        graph_x: layer1.graph_x,
        graph_y: layer1.graph_y,
        graph_z: layer2.graph_z,
        config: config.clone(),
        trace,
    };
    debug_assert!(model.z_embed.embedding.iter().all(|v| v.is_finite()));
    Ok(model)
}

/// Both layers on two aligned feature matrices.
pub fn run_pipeline(x: &FeatureMatrix, y: &FeatureMatrix, config: &PipelineConfig) -> Result<TrainedModel> {
    run_pipeline_with(x, y, &MissingModalitySpec::new(), config, RunOptions::default())
}

/// Pipeline for vocabularies where some words lack one modality. In every
/// embedding step of the lacking branch, the rows and columns of those words
/// in its graphs are taken from the other modality's graph.
pub fn inductive_infer(
    x: &FeatureMatrix,
    y: &FeatureMatrix,
    missing: &MissingModalitySpec,
    config: &PipelineConfig,
) -> Result<TrainedModel> {
    run_pipeline_with(x, y, missing, config, RunOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{ModalityConfig, OptimizerConfig};
    use crate::sge::random_init;

    fn small_config() -> PipelineConfig {
        let m = |alpha, beta, mu, k| ModalityConfig {
            alpha,
            beta,
            mu,
            n_clusters: k,
            bandwidth: 1.0,
            embed_dim: 3,
        };
        PipelineConfig {
            modality_x: m(0.1, 0.05, 0.9, 3),
            modality_y: m(0.3, 0.1, 0.7, 3),
            joint: m(0.1, 0.0, 0.7, 3),
            k1: 2,
            k2: 2,
            optimizer: OptimizerConfig {
                learning_rate: 0.5,
                max_steps: 10,
                tolerance: 1e-6,
            },
            seed: 11,
            ..PipelineConfig::default()
        }
    }

    fn features(n: usize, d: usize, seed: u64, tag: &str) -> FeatureMatrix {
        let vocab = Vocabulary::new((0..n).map(|i| format!("w{i}")).collect()).unwrap();
        FeatureMatrix::new(vocab, random_init(n, d, seed), tag).unwrap()
    }

    #[test]
    fn missing_spec_rules() {
        let mut s = MissingModalitySpec::new();
        s.insert("a", Modality::Y).unwrap();
        s.insert("a", Modality::Y).unwrap();
        assert!(s.insert("a", Modality::X).is_err());
        let parsed = MissingModalitySpec::parse("a\ty\nb\tx\n", "m").unwrap();
        assert_eq!(parsed.words(Modality::Y).collect::<Vec<_>>(), ["a"]);
        assert!(MissingModalitySpec::parse("a\ty\na\tx\n", "m").is_err());
        assert!(MissingModalitySpec::parse("a\tz\n", "m").is_err());
    }

    #[test]
    fn unknown_missing_word_rejected() {
        let x = features(8, 4, 1, "x");
        let y = features(8, 4, 2, "y");
        let spec = MissingModalitySpec::for_words(["nope"], Modality::Y).unwrap();
        let err = prepare_inputs(&x, &y, &spec, &small_config()).unwrap_err();
        assert!(matches!(err, Error::UnknownWords(ref w) if w == &["nope".to_string()]));
    }

    #[test]
    fn vocabulary_mismatch_rejected() {
        let x = features(8, 4, 1, "x");
        let vocab = Vocabulary::new((0..8).map(|i| format!("v{i}")).collect()).unwrap();
        let y = FeatureMatrix::new(vocab, random_init(8, 4, 2), "y").unwrap();
        assert!(matches!(
            run_pipeline(&x, &y, &small_config()),
            Err(Error::VocabularyMismatch(_))
        ));
    }

    #[test]
    fn substitution_is_symmetric() {
        let x = features(6, 3, 1, "x");
        let y = features(6, 3, 2, "y");
        let gx = pairwise_similarity(x.data().view(), 1.0, x.vocab()).unwrap();
        let gy = pairwise_similarity(y.data().view(), 1.0, y.vocab()).unwrap();
        let present = [true, false, true, true, false, true];
        let s = substitute_rows(&gx, &gy, &present);
        let w = s.weights();
        for j in 0..6 {
            for k in 0..6 {
                assert_eq!(w[[j, k]], w[[k, j]]);
                let expected = if present[j] && present[k] { gx.weights()[[j, k]] } else { gy.weights()[[j, k]] };
                assert_eq!(w[[j, k]], expected);
            }
        }
    }

    #[test]
    fn threads_do_not_change_output() {
        let x = features(12, 5, 1, "x");
        let y = features(12, 4, 2, "y");
        let cfg = small_config();
        let a = run_pipeline(&x, &y, &cfg).unwrap();
        let b = run_pipeline_with(&x, &y, &MissingModalitySpec::new(), &cfg, RunOptions { threads: 2 }).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn missing_rows_seeded_and_learned() {
        let x = features(12, 5, 1, "x");
        let mut ydata = random_init(12, 4, 2);
        ydata.row_mut(3).fill(0.0);
        let y = FeatureMatrix::new(x.vocab().clone(), ydata, "y").unwrap();
        let spec = MissingModalitySpec::for_words(["w3"], Modality::Y).unwrap();
        let inputs = prepare_inputs(&x, &y, &spec, &small_config()).unwrap();
        assert!(!inputs.present_y[3]);
        assert_eq!(inputs.g0_y.weights().row(3), inputs.g0_x.weights().row(3));
        // Small configs use the same width in both branches, so the row is copied whole.
        assert_eq!(inputs.init_y.embedding.row(3), inputs.init_x.embedding.row(3));
        let model = inductive_infer(&x, &y, &spec, &small_config()).unwrap();
        assert!(model.y_embed.embedding.iter().all(|v| v.is_finite()));
    }
}
