//! k-means with restarts, Chinese Whispers label propagation, and the
//! adjusted Rand index.

use std::collections::{BTreeMap, HashMap};

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::datamodel::SimilarityGraph;
use crate::error::{Error, Result};
use crate::seed;

/// Cluster ids `0..k_effective`, each used at least once.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k_effective: usize,
}

impl ClusterAssignment {
    /// Relabel arbitrary ids by order of first appearance.
    pub fn from_labels<T: Copy + Eq + std::hash::Hash>(raw: &[T]) -> Self {
        let mut map = HashMap::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        ClusterAssignment {
            labels,
            k_effective: map.len(),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k_effective(&self) -> usize {
        self.k_effective
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Result of [`kmeans`], including the inertia of every restart.
#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub assignment: ClusterAssignment,
    pub inertia: f64,
    pub restart_inertias: Vec<f64>,
}

const LLOYD_MAX_ITERS: usize = 300;

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp_seed<R: Rng>(data: ArrayView2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = data.nrows();
    let mut centers = Array2::zeros((k, data.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&data.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(data.row(i), centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // Rounding can walk past the end; fall back to the last point with mass.
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&data.row(pick));
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(data.row(i), centers.row(c)));
        }
    }
    centers
}

fn assign(data: ArrayView2<f64>, centers: &Array2<f64>, labels: &mut [usize]) -> bool {
    let mut changed = false;
    for (i, label) in labels.iter_mut().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..centers.nrows() {
            let d = sq_dist(data.row(i), centers.row(c));
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        if *label != best {
            *label = best;
            changed = true;
        }
    }
    changed
}

fn inertia(data: ArrayView2<f64>, centers: &Array2<f64>, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(data.row(i), centers.row(c)))
        .sum()
}

fn update_centers(data: ArrayView2<f64>, labels: &[usize], centers: &mut Array2<f64>) {
    let k = centers.nrows();
    let mut counts = vec![0usize; k];
    let mut sums = Array2::<f64>::zeros(centers.raw_dim());
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        let mut row = sums.row_mut(c);
        row += &data.row(i);
    }
    for c in 0..k {
        if counts[c] > 0 {
            let mut row = centers.row_mut(c);
            row.assign(&sums.row(c));
            row.mapv_inplace(|v| v / counts[c] as f64);
        }
    }
    // Empty clusters are re-seeded at the point farthest from its centroid.
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let far = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| {
                sq_dist(data.row(a), centers.row(labels[a]))
                    .total_cmp(&sq_dist(data.row(b), centers.row(labels[b])))
                    .then(b.cmp(&a))
            });
        if let Some(i) = far {
            counts[labels[i]] -= 1;
            counts[c] += 1;
            centers.row_mut(c).assign(&data.row(i));
        }
    }
}

fn lloyd(data: ArrayView2<f64>, mut centers: Array2<f64>) -> (Vec<usize>, f64) {
    let mut labels = vec![usize::MAX; data.nrows()];
    assign(data, &centers, &mut labels);
    for _ in 0..LLOYD_MAX_ITERS {
        update_centers(data, &labels, &mut centers);
        if !assign(data, &centers, &mut labels) {
            break;
        }
    }
    let score = inertia(data, &centers, &labels);
    (labels, score)
}

/// Lloyd's algorithm with k-means++ seeding, best of `restarts` runs by
/// within-cluster sum of squares.
pub fn kmeans(data: ArrayView2<f64>, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    let n = data.nrows();
    if n == 0 || data.ncols() == 0 {
        return Err(Error::EmptyInput("k-means input has no points".into()));
    }
    if k == 0 || k > n {
        return Err(Error::Validation(format!(
            "k-means needs 1 <= k <= N, got k = {k} with N = {n}"
        )));
    }
    if restarts == 0 {
        return Err(Error::Validation("k-means needs at least one restart".into()));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut restart_inertias = Vec::with_capacity(restarts);
    for r in 0..restarts {
        let mut rng = seed::rng(seed::derive(seed, r as u64));
        let centers = kmeans_pp_seed(data, k, &mut rng);
        let (labels, score) = lloyd(data, centers);
        restart_inertias.push(score);
        if best.as_ref().map_or(true, |(_, b)| score < *b) {
            best = Some((labels, score));
        }
    }
    let (labels, inertia) = best.expect("at least one restart");
    Ok(KMeansResult {
        assignment: ClusterAssignment::from_labels(&labels),
        inertia,
        restart_inertias,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CwParams {
    /// Strongest off-diagonal edges kept per node before symmetrization.
    pub top_k: usize,
    /// Maximum number of sweeps.
    pub iters: usize,
}

impl Default for CwParams {
    fn default() -> Self {
        CwParams { top_k: 10, iters: 50 }
    }
}

#[derive(Clone, Debug)]
pub struct CwResult {
    pub assignment: ClusterAssignment,
    /// Distinct labels after each completed sweep.
    pub label_counts: Vec<usize>,
    pub converged: bool,
}

/// Per-node neighbor lists of the top-k union graph, sorted by node index.
fn sparsify(w: &Array2<f64>, top_k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = w.nrows();
    let mut keep = vec![vec![false; n]; n];
    for j in 0..n {
        let mut cand: Vec<usize> = (0..n).filter(|&k| k != j && w[[j, k]] > 0.0).collect();
        cand.sort_by(|&a, &b| w[[j, b]].total_cmp(&w[[j, a]]).then(a.cmp(&b)));
        for &k in cand.iter().take(top_k) {
            keep[j][k] = true;
            keep[k][j] = true;
        }
    }
    (0..n)
        .map(|j| {
            (0..n)
                .filter(|&k| keep[j][k])
                .map(|k| (k, w[[j, k]]))
                .collect()
        })
        .collect()
}

/// Chinese Whispers on the top-k sparsified graph.
///
/// Each sweep visits the nodes in a seeded random order; a node adopts the
/// label with the largest summed incident weight, keeping its own label on a
/// tie with it and otherwise taking the smallest tied label id.
pub fn chinese_whispers(g: &SimilarityGraph, params: CwParams, seed: u64) -> Result<CwResult> {
    chinese_whispers_matrix(g.weights(), params, seed)
}

pub(crate) fn chinese_whispers_matrix(
    w: &Array2<f64>,
    params: CwParams,
    seed: u64,
) -> Result<CwResult> {
    if params.top_k == 0 {
        return Err(Error::Validation("Chinese Whispers top_k must be >= 1".into()));
    }
    let n = w.nrows();
    let adj = sparsify(w, params.top_k);
    let mut labels: Vec<usize> = (0..n).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut label_counts = Vec::new();
    let mut converged = false;
    let mut rng = seed::rng(seed);
    for _ in 0..params.iters {
        order.shuffle(&mut rng);
        let mut changed = false;
        for &node in &order {
            if adj[node].is_empty() {
                continue;
            }
            let mut scores: BTreeMap<usize, f64> = BTreeMap::new();
            for &(nb, weight) in &adj[node] {
                *scores.entry(labels[nb]).or_insert(0.0) += weight;
            }
            let max = scores.values().copied().fold(f64::NEG_INFINITY, f64::max);
            let current = labels[node];
            if scores.get(&current) == Some(&max) {
                continue;
            }
            // BTreeMap iterates in ascending label order.
            let new = scores
                .iter()
                .find(|(_, &s)| s == max)
                .map(|(&l, _)| l)
                .expect("max is attained");
            labels[node] = new;
            changed = true;
        }
        let mut distinct = labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        label_counts.push(distinct.len());
        if !changed {
            converged = true;
            break;
        }
    }
    Ok(CwResult {
        assignment: ClusterAssignment::from_labels(&labels),
        label_counts,
        converged,
    })
}

fn comb2(x: u64) -> f64 {
    (x * x.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index from the contingency table. Two partitions that are
/// both trivial in the same way (all-in-one or all-singletons) score 1.
pub fn adjusted_rand_index(a: &ClusterAssignment, b: &ClusterAssignment) -> Result<f64> {
    adjusted_rand_index_labels(a.labels(), b.labels())
}

pub fn adjusted_rand_index_labels(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "adjusted Rand index".into(),
            expected: a.len(),
            found: b.len(),
        });
    }
    let n = a.len() as u64;
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| comb2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| comb2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| comb2(c)).sum();
    let total = comb2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}
