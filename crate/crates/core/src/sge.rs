//! Single-branch similarity graph embedding.
//!
//! One SGE iteration minimizes
//!
//! ```text
//! (1 - alpha) L(S(E), G_prev) + alpha L(S(E), G_init) + beta L(S(E), G_other)
//! ```
//!
//! over the embedding `E`, then rebuilds the graph from the new embedding and
//! attenuates every edge between different k-means communities by `mu`.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::clustering::{kmeans, ClusterAssignment};
use crate::datamodel::{
    EmbeddingState, InitMethod, LossOrientation, ModalityConfig, OptimizerConfig, SimilarityGraph,
    Vocabulary,
};
use crate::error::{Error, Result};
use crate::seed;
use crate::similarity::{
    cosine_matrix, pairwise_similarity, row_normalize, unit_rows,
    NormalizedAffinity, PROB_FLOOR,
};

/// Rows with a norm at or below this are treated as zero and re-jittered.
const ZERO_ROW_NORM: f64 = 1e-150;
const JITTER_SCALE: f64 = 1e-8;
/// Step halvings tried before an embedding step gives up on descent.
const MAX_HALVINGS: usize = 40;

/// The three graphs and weights of one embedding step.
#[derive(Clone, Copy, Debug)]
pub struct SgeObjectiveSpec<'a> {
    pub alpha: f64,
    pub beta: f64,
    pub g_prev: &'a SimilarityGraph,
    pub g_init: &'a SimilarityGraph,
    /// Only read when `beta > 0`.
    pub g_other: Option<&'a SimilarityGraph>,
    pub bandwidth: f64,
    pub orientation: LossOrientation,
}

impl<'a> SgeObjectiveSpec<'a> {
    pub fn new(
        alpha: f64,
        beta: f64,
        g_prev: &'a SimilarityGraph,
        g_init: &'a SimilarityGraph,
        g_other: Option<&'a SimilarityGraph>,
        bandwidth: f64,
    ) -> Self {
        SgeObjectiveSpec {
            alpha,
            beta,
            g_prev,
            g_init,
            g_other,
            bandwidth,
            orientation: LossOrientation::GraphTarget,
        }
    }

    /// `(weight, graph)` pairs of the active terms.
    fn terms(&self) -> Result<Vec<(f64, &'a SimilarityGraph)>> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Validation(format!("alpha = {} outside [0, 1]", self.alpha)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Validation(format!("beta = {} is negative", self.beta)));
        }
        let mut terms = vec![(1.0 - self.alpha, self.g_prev), (self.alpha, self.g_init)];
        if self.beta > 0.0 {
            let other = self.g_other.ok_or_else(|| {
                Error::Validation("beta > 0 requires the other modality's graph".into())
            })?;
            terms.push((self.beta, other));
        }
        Ok(terms)
    }
}

/// Objective with the target graphs normalized and combined once, so it can
/// be evaluated many times during a descent.
#[derive(Clone, Debug)]
pub struct PreparedObjective {
    /// Graph-target: `sum_t w_t q_t`. Embedding-target: `sum_t w_t log q_t`.
    combined: Array2<f64>,
    orientation: LossOrientation,
    bandwidth: f64,
}

struct Forward {
    unit: Array2<f64>,
    norms: Vec<f64>,
    cos: Array2<f64>,
}

/// Normalized model affinities of one row, plus what the backward pass needs.
struct RowAffinity {
    kernel: Vec<f64>,
    row_sum: f64,
    p_raw: Vec<f64>,
    floored_sum: f64,
    p: Vec<f64>,
}

impl RowAffinity {
    fn new(n: usize) -> Self {
        RowAffinity {
            kernel: vec![0.0; n],
            row_sum: 0.0,
            p_raw: vec![0.0; n],
            floored_sum: 0.0,
            p: vec![0.0; n],
        }
    }

    /// Same arithmetic as `similarity::row_normalize_matrix` on the kernel.
    fn fill(&mut self, cos: ndarray::ArrayView1<f64>, j: usize, bandwidth: f64) {
        let n = cos.len();
        let mut sum = 0.0;
        for k in 0..n {
            if k != j {
                let w = (-(1.0 - cos[k]) / bandwidth).exp();
                self.kernel[k] = w;
                sum += w;
            }
        }
        let mut floored = 0.0;
        for k in 0..n {
            if k != j {
                let raw = self.kernel[k] / sum;
                self.p_raw[k] = raw;
                let v = raw.max(PROB_FLOOR);
                self.p[k] = v;
                floored += v;
            }
        }
        for k in 0..n {
            if k != j {
                self.p[k] /= floored;
            }
        }
        self.kernel[j] = 1.0;
        self.p_raw[j] = 0.0;
        self.p[j] = 0.0;
        self.row_sum = sum;
        self.floored_sum = floored;
    }
}

impl PreparedObjective {
    pub fn new(spec: &SgeObjectiveSpec<'_>) -> Result<Self> {
        if !(spec.bandwidth > 0.0) {
            return Err(Error::Validation(format!(
                "kernel bandwidth must be positive, got {}",
                spec.bandwidth
            )));
        }
        let terms = spec.terms()?;
        let n = spec.g_prev.len();
        let mut combined = Array2::zeros((n, n));
        for (weight, graph) in terms {
            if graph.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "objective graphs".into(),
                    expected: n,
                    found: graph.len(),
                });
            }
            let q = row_normalize(graph)?;
            match spec.orientation {
                LossOrientation::GraphTarget => combined.scaled_add(weight, q.probs()),
                LossOrientation::EmbeddingTarget => {
                    for j in 0..n {
                        for k in (0..n).filter(|&k| k != j) {
                            combined[[j, k]] += weight * q.probs()[[j, k]].ln();
                        }
                    }
                }
            }
        }
        Ok(PreparedObjective {
            combined,
            orientation: spec.orientation,
            bandwidth: spec.bandwidth,
        })
    }

    pub fn len(&self) -> usize {
        self.combined.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.combined.nrows() == 0
    }

    fn forward(&self, e: ArrayView2<f64>) -> Result<Forward> {
        let n = self.len();
        if e.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "embedding rows vs graph size".into(),
                expected: n,
                found: e.nrows(),
            });
        }
        let (unit, norms) = unit_rows(e).map_err(|row| Error::ZeroVector {
            row,
            word: String::new(),
        })?;
        let cos = cosine_matrix(&unit);
        Ok(Forward { unit, norms, cos })
    }

    fn row_loss(&self, j: usize, row: &RowAffinity) -> f64 {
        let target = self.combined.row(j);
        let mut total = 0.0;
        for (k, (&t, &p)) in target.iter().zip(&row.p).enumerate() {
            if k == j {
                continue;
            }
            match self.orientation {
                LossOrientation::GraphTarget => {
                    if t != 0.0 {
                        total -= t * p.ln();
                    }
                }
                LossOrientation::EmbeddingTarget => total -= p * t,
            }
        }
        total
    }

    pub fn value(&self, e: ArrayView2<f64>) -> Result<f64> {
        let f = self.forward(e)?;
        let n = self.len();
        let mut row = RowAffinity::new(n);
        let mut total = 0.0;
        for j in 0..n {
            row.fill(f.cos.row(j), j, self.bandwidth);
            total += self.row_loss(j, &row);
        }
        Ok(total / n as f64)
    }

    /// Objective value and its exact gradient with respect to `e`.
    pub fn value_and_gradient(&self, e: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
        let f = self.forward(e)?;
        let n = self.len();
        let inv_n = 1.0 / n as f64;
        let mut row = RowAffinity::new(n);
        let mut total = 0.0;
        let mut g = vec![0.0; n];
        let mut d_raw = vec![0.0; n];
        // h[j][k]: derivative of the loss with respect to cos[j][k] through
        // kernel[j][k] only.
        let mut h = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            row.fill(f.cos.row(j), j, self.bandwidth);
            total += self.row_loss(j, &row);
            let target = self.combined.row(j);
            let mut dot_p = 0.0;
            for k in 0..n {
                if k == j {
                    g[k] = 0.0;
                    continue;
                }
                let t = target[k];
                g[k] = match self.orientation {
                    LossOrientation::GraphTarget => -inv_n * t / row.p[k],
                    LossOrientation::EmbeddingTarget => -inv_n * t,
                };
                dot_p += g[k] * row.p[k];
            }
            // Back through the floor renormalization, then the row normalization.
            let mut dot_raw = 0.0;
            for k in 0..n {
                d_raw[k] = if k != j && row.p_raw[k] > PROB_FLOOR {
                    (g[k] - dot_p) / row.floored_sum
                } else {
                    0.0
                };
                dot_raw += d_raw[k] * row.p_raw[k];
            }
            let mut hj = h.row_mut(j);
            for k in 0..n {
                if k != j {
                    let d_kernel = (d_raw[k] - dot_raw) / row.row_sum;
                    hj[k] = d_kernel * row.kernel[k] / self.bandwidth;
                }
            }
        }

        // The cosine c_jk feeds both kernel[j][k] and kernel[k][j].
        let m = &h + &h.t();
        let mut grad = m.dot(&f.unit);
        for j in 0..n {
            let radial: f64 = m.row(j).iter().zip(f.cos.row(j)).map(|(a, b)| a * b).sum();
            let uj = f.unit.row(j);
            let inv_norm = 1.0 / f.norms[j];
            grad.row_mut(j)
                .iter_mut()
                .zip(uj)
                .for_each(|(gv, &u)| *gv = (*gv - radial * u) * inv_norm);
        }
        Ok((total / n as f64, grad))
    }
}

/// Evaluate the objective at `e`.
pub fn objective(e: &EmbeddingState, spec: &SgeObjectiveSpec<'_>) -> Result<f64> {
    PreparedObjective::new(spec)?.value(e.embedding.view())
}

/// Analytic gradient of [`objective`] with respect to every entry of `e`.
pub fn objective_gradient(e: &EmbeddingState, spec: &SgeObjectiveSpec<'_>) -> Result<Array2<f64>> {
    Ok(PreparedObjective::new(spec)?
        .value_and_gradient(e.embedding.view())?
        .1)
}

/// Result of an embedding step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: EmbeddingState,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
}

/// Replace numerically zero rows with small seeded noise. Returns whether
/// anything changed.
pub(crate) fn rejitter_zero_rows(e: &mut Array2<f64>, seed: u64) -> bool {
    let mut rng = None;
    let mut changed = false;
    for (j, mut row) in e.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm > ZERO_ROW_NORM {
            continue;
        }
        let rng = rng.get_or_insert_with(|| seed::rng(seed));
        loop {
            for v in row.iter_mut() {
                *v = JITTER_SCALE * rng.sample::<f64, _>(StandardNormal);
            }
            if row.dot(&row) > 0.0 {
                break;
            }
        }
        changed = true;
        let _ = j;
    }
    changed
}

fn all_finite(e: &Array2<f64>) -> bool {
    e.iter().all(|v| v.is_finite())
}

/// First-order descent with per-step backtracking.
///
/// Each step starts at `learning_rate` and halves it until the objective does
/// not increase; a step that cannot be accepted ends the descent. The descent
/// also stops after `max_steps` accepted steps or once the relative decrease
/// of a step falls below `tolerance`.
pub fn embedding_step(
    e0: &EmbeddingState,
    spec: &SgeObjectiveSpec<'_>,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<StepOutcome> {
    let prepared = PreparedObjective::new(spec)?;
    descend(e0, &prepared, opt, seed)
}

pub(crate) fn descend(
    e0: &EmbeddingState,
    prepared: &PreparedObjective,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<StepOutcome> {
    opt.validate()?;
    let mut e = e0.embedding.clone();
    if !all_finite(&e) {
        return Err(Error::Numeric("initial embedding has non-finite entries".into()));
    }
    let mut jitter_stream = 0u64;
    if rejitter_zero_rows(&mut e, seed::derive(seed, jitter_stream)) {
        jitter_stream += 1;
    }
    let (mut value, mut grad) = prepared.value_and_gradient(e.view())?;
    if !value.is_finite() {
        return Err(Error::Numeric("objective is not finite at the starting point".into()));
    }
    let mut trace = vec![value];

    for _ in 0..opt.max_steps {
        if grad.iter().all(|&g| g == 0.0) {
            break;
        }
        let mut step = opt.learning_rate;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let mut cand = &e - &(&grad * step);
            if !all_finite(&cand) {
                return Err(Error::Numeric(format!(
                    "embedding step of size {step} produced non-finite entries; lower the learning rate"
                )));
            }
            if rejitter_zero_rows(&mut cand, seed::derive(seed, jitter_stream)) {
                jitter_stream += 1;
            }
            let cand_value = prepared.value(cand.view())?;
            if !cand_value.is_finite() {
                return Err(Error::Numeric(format!(
                    "objective became non-finite with step size {step}; lower the learning rate"
                )));
            }
            if cand_value <= value {
                accepted = Some((cand, cand_value));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cand_value)) = accepted else {
            break;
        };
        let decrease = value - cand_value;
        let scale = value.abs().max(f64::MIN_POSITIVE);
        e = cand;
        value = cand_value;
        trace.push(value);
        if decrease / scale < opt.tolerance {
            break;
        }
        grad = prepared.value_and_gradient(e.view())?.1;
    }

    Ok(StepOutcome {
        state: EmbeddingState {
            embedding: e,
            iteration: e0.iteration,
        },
        trace,
    })
}

/// Multiply the weight of every edge whose endpoints carry different labels
/// by `mu`. Diagonal and intra-community edges are untouched.
pub fn attenuate(graph: &SimilarityGraph, labels: &ClusterAssignment, mu: f64) -> Result<SimilarityGraph> {
    let n = graph.len();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            context: "community labels vs graph size".into(),
            expected: n,
            found: labels.len(),
        });
    }
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Validation(format!("mu = {mu} must lie in (0, 1)")));
    }
    let l = labels.labels();
    let mut w = graph.weights().clone();
    for j in 0..n {
        for k in (j + 1)..n {
            if l[j] != l[k] {
                let v = w[[j, k]] * mu;
                w[[j, k]] = v;
                w[[k, j]] = v;
            }
        }
    }
    Ok(SimilarityGraph::from_parts(w, graph.vocab().clone()))
}

/// Graph update: `S_l(E)` with cross-community edges attenuated by `mu`,
/// communities taken from k-means on the rows of `E`.
pub fn graph_update(
    e: &EmbeddingState,
    vocab: &Vocabulary,
    n_clusters: usize,
    mu: f64,
    bandwidth: f64,
    restarts: usize,
    seed: u64,
) -> Result<(SimilarityGraph, ClusterAssignment)> {
    if n_clusters >= vocab.len() {
        return Err(Error::Validation(format!(
            "n_clusters = {n_clusters} must be smaller than the vocabulary size {}",
            vocab.len()
        )));
    }
    let base = pairwise_similarity(e.embedding.view(), bandwidth, vocab)?;
    let communities = kmeans(e.embedding.view(), n_clusters, restarts, seed)?.assignment;
    Ok((attenuate(&base, &communities, mu)?, communities))
}

/// Fixed settings of one SGE branch.
#[derive(Clone, Debug)]
pub struct SgeParams {
    pub config: ModalityConfig,
    pub iterations: usize,
    pub optimizer: OptimizerConfig,
    pub kmeans_restarts: usize,
    pub orientation: LossOrientation,
    pub seed: u64,
}

impl SgeParams {
    pub(crate) fn kmeans_seed(&self, iteration: usize) -> u64 {
        seed::derive(seed::derive(self.seed, seed::TAG_KMEANS), iteration as u64)
    }

    pub(crate) fn jitter_seed(&self, iteration: usize) -> u64 {
        seed::derive(seed::derive(self.seed, seed::TAG_JITTER), iteration as u64)
    }
}

/// Graphs handed to one iteration's embedding step.
pub(crate) struct IterationGraphs<'a> {
    pub g_prev: &'a SimilarityGraph,
    pub g_init: &'a SimilarityGraph,
    pub g_other: Option<&'a SimilarityGraph>,
}

pub(crate) struct IterationOutcome {
    pub state: EmbeddingState,
    pub graph: SimilarityGraph,
    pub trace: Vec<f64>,
}

/// One embedding step followed by one graph update.
pub(crate) fn sge_iteration(
    state: &EmbeddingState,
    graphs: IterationGraphs<'_>,
    params: &SgeParams,
    iteration: usize,
) -> Result<IterationOutcome> {
    let cfg = &params.config;
    let vocab = graphs.g_init.vocab().clone();
    let spec = SgeObjectiveSpec {
        alpha: cfg.alpha,
        beta: cfg.beta,
        g_prev: graphs.g_prev,
        g_init: graphs.g_init,
        g_other: graphs.g_other,
        bandwidth: cfg.bandwidth,
        orientation: params.orientation,
    };
    let outcome = embedding_step(state, &spec, &params.optimizer, params.jitter_seed(iteration))?;
    let mut next = outcome.state;
    next.iteration = iteration;
    let (graph, _) = graph_update(
        &next,
        &vocab,
        cfg.n_clusters,
        cfg.mu,
        cfg.bandwidth,
        params.kmeans_restarts,
        params.kmeans_seed(iteration),
    )?;
    Ok(IterationOutcome {
        state: next,
        graph,
        trace: outcome.trace,
    })
}

/// Output of [`run_sge`].
#[derive(Clone, Debug)]
pub struct SgeRun {
    pub state: EmbeddingState,
    pub graph: SimilarityGraph,
    /// Objective trace of each iteration's embedding step.
    pub traces: Vec<Vec<f64>>,
}

/// Alternate embedding steps and graph updates for `params.iterations`
/// rounds, starting from `G_0 = g0`.
///
/// `other_graph` supplies the other modality's graph for iteration `i`
/// (1-based); it is only called when `beta > 0`.
pub fn run_sge(
    e_init: &EmbeddingState,
    g0: &SimilarityGraph,
    params: &SgeParams,
    mut other_graph: Option<&mut dyn FnMut(usize) -> Result<SimilarityGraph>>,
) -> Result<SgeRun> {
    if params.iterations == 0 {
        return Err(Error::Validation("SGE needs at least one iteration".into()));
    }
    let mut state = e_init.clone();
    let mut graph = g0.clone();
    let mut traces = Vec::with_capacity(params.iterations);
    for i in 1..=params.iterations {
        let other = if params.config.beta > 0.0 {
            let provider = other_graph.as_mut().ok_or_else(|| {
                Error::Validation("beta > 0 requires an other-modality graph provider".into())
            })?;
            Some(provider(i)?)
        } else {
            None
        };
        let out = sge_iteration(
            &state,
            IterationGraphs {
                g_prev: &graph,
                g_init: g0,
                g_other: other.as_ref(),
            },
            params,
            i,
        )?;
        state = out.state;
        graph = out.graph;
        traces.push(out.trace);
    }
    Ok(SgeRun {
        state,
        graph,
        traces,
    })
}

/// Scale every nonzero row to unit length.
pub fn normalize_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    out
}

/// Leading `dim` left singular directions of the row-centered matrix, scaled
/// by their singular values. Columns beyond the rank are zero. Each column's sign is fixed so that its largest
/// magnitude entry is positive.
pub fn svd_init(data: ArrayView2<f64>, dim: usize) -> Array2<f64> {
    let (n, m) = data.dim();
    let means = data.mean_axis(Axis(1)).expect("non-empty rows");
    let centered = DMatrix::from_fn(n, m, |i, j| data[[i, j]] - means[i]);
    let svd = centered.svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let mut out = Array2::zeros((n, dim));
    for (col, &src) in order.iter().take(dim).enumerate() {
        let s = svd.singular_values[src];
        let column = u.column(src);
        let pivot = column
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            out[[i, col]] = sign * column[i] * s;
        }
    }
    out
}

/// Seeded standard Gaussian embedding.
pub fn random_init(n: usize, dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = seed::rng(seed);
    Array2::from_shape_simple_fn((n, dim), || rng.sample::<f64, _>(StandardNormal))
}

/// Initial embedding of a feature matrix according to `method`.
pub fn initial_embedding(data: ArrayView2<f64>, dim: usize, method: InitMethod, seed: u64) -> Array2<f64> {
    match method {
        InitMethod::Svd => svd_init(data, dim),
        InitMethod::Random => random_init(data.nrows(), dim, seed),
    }
}

/// Convenience used in tests: the normalized affinity of `S_l(E)`.
pub fn embedding_affinity(e: ArrayView2<f64>, bandwidth: f64) -> Result<NormalizedAffinity> {
    let w = crate::similarity::pairwise_kernel(e, bandwidth, None)?;
    crate::similarity::row_normalize_matrix(w.view())
}
