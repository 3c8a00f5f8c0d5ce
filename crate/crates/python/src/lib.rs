//! Python bindings for the `hmsge` library. Matrices cross the boundary as
//! lists of rows.

use hmsge::clustering;
use hmsge::datamodel::{self, Preset};
use hmsge::eval;
use hmsge::synth::{self, PlantedSpec};
use hmsge::{Error, FeatureMatrix, MissingModalitySpec, Modality, PipelineConfig, TrainedModel, Vocabulary};
use ndarray::Array2;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyOSError::new_err(e.to_string()),
        3 => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_array(rows: &[Vec<f64>]) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, d), rows.concat()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn features(words: &[String], rows: &[Vec<f64>], tag: &str) -> PyResult<FeatureMatrix> {
    let vocab = Vocabulary::new(words.to_vec()).map_err(to_py)?;
    FeatureMatrix::new(vocab, to_array(rows)?, tag).map_err(to_py)
}

/// Synthetic planted-community data as a dict with keys `words`, `x`, `y`
/// and `gold`.
#[pyfunction]
#[pyo3(signature = (n_words=100, n_communities=5, dims=(50, 30), noise=(0.25, 0.25), consistency=1.0, seed=42))]
fn generate_planted(
    py: Python<'_>,
    n_words: usize,
    n_communities: usize,
    dims: (usize, usize),
    noise: (f64, f64),
    consistency: f64,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let spec = PlantedSpec {
        n_words,
        n_communities,
        dims,
        noise,
        consistency,
        seed,
    };
    let data = synth::generate_planted(&spec).map_err(to_py)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("words", data.x.vocab().words().to_vec())?;
    d.set_item("x", to_rows(data.x.data()))?;
    d.set_item("y", to_rows(data.y.data()))?;
    d.set_item("gold", data.gold.labels().to_vec())?;
    Ok(d.into_any().unbind())
}

/// Read a `word<TAB>f1<TAB>...` file into `(words, rows)`.
#[pyfunction]
fn load_features(path: &str) -> PyResult<(Vec<String>, Vec<Vec<f64>>)> {
    let m = datamodel::load_features(path, "features").map_err(to_py)?;
    Ok((m.vocab().words().to_vec(), to_rows(m.data())))
}

fn parse_which(which: &str) -> PyResult<Which> {
    match which {
        "x" => Ok(Which::X),
        "y" => Ok(Which::Y),
        "joint" | "z" => Ok(Which::Joint),
        other => Err(PyValueError::new_err(format!(
            "unknown representation {other:?}, expected x, y or joint"
        ))),
    }
}

#[derive(Clone, Copy)]
enum Which {
    X,
    Y,
    Joint,
}

/// A trained two-layer model.
#[pyclass(name = "Model", module = "hmsge_py")]
struct PyModel {
    inner: TrainedModel,
}

impl PyModel {
    fn embedding(&self, which: &str) -> PyResult<&Array2<f64>> {
        Ok(match parse_which(which)? {
            Which::X => &self.inner.x_embed.embedding,
            Which::Y => &self.inner.y_embed.embedding,
            Which::Joint => &self.inner.z_embed.embedding,
        })
    }
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: TrainedModel::load(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    #[getter]
    fn words(&self) -> Vec<String> {
        self.inner.vocab.words().to_vec()
    }

    /// The configuration the model was trained with, as TOML.
    fn config_toml(&self) -> String {
        self.inner.config.to_toml_string()
    }

    #[pyo3(signature = (which="joint"))]
    fn embeddings(&self, which: &str) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(self.embedding(which)?))
    }

    #[pyo3(signature = (word, which="joint", ratio=0.9))]
    fn nearest_neighbors(&self, word: &str, which: &str, ratio: f64) -> PyResult<Vec<(String, f64)>> {
        let e = self.embedding(which)?;
        eval::nearest_neighbors(e.view(), &self.inner.vocab, word, ratio).map_err(to_py)
    }

    #[pyo3(signature = (count, which="joint"))]
    fn top_pairs(&self, count: usize, which: &str) -> PyResult<Vec<(String, String, f64)>> {
        let e = self.embedding(which)?;
        eval::top_pairs(e.view(), &self.inner.vocab, count).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.vocab.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(words={}, x_dim={}, y_dim={}, joint_dim={})",
            self.inner.vocab.len(),
            self.inner.x_embed.dim(),
            self.inner.y_embed.dim(),
            self.inner.z_embed.dim()
        )
    }
}

/// Train both layers. `missing` lists `(word, "x" | "y")` pairs for words
/// lacking one modality; their rows in that matrix are ignored.
#[pyfunction]
#[pyo3(signature = (words, x, y, preset="tattrib", config_toml=None, seed=None, missing=None))]
fn run_pipeline(
    py: Python<'_>,
    words: Vec<String>,
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    preset: &str,
    config_toml: Option<&str>,
    seed: Option<u64>,
    missing: Option<Vec<(String, String)>>,
) -> PyResult<PyModel> {
    let mut config = match config_toml {
        Some(text) => PipelineConfig::from_toml_str(text).map_err(to_py)?,
        None => preset.parse::<Preset>().map_err(to_py)?.config(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    let fx = features(&words, &x, "x")?;
    let fy = features(&words, &y, "y")?;
    let mut spec = MissingModalitySpec::new();
    for (w, m) in missing.unwrap_or_default() {
        spec.insert(w, m.parse::<Modality>().map_err(to_py)?).map_err(to_py)?;
    }
    let inner = py
        .detach(|| hmsge::inductive_infer(&fx, &fy, &spec, &config))
        .map_err(to_py)?;
    Ok(PyModel { inner })
}

#[pyfunction]
fn spearman(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    eval::spearman(&a, &b).map_err(to_py)
}

#[pyfunction]
fn adjusted_rand_index(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    clustering::adjusted_rand_index_labels(&a, &b).map_err(to_py)
}

/// k-means with k-means++ restarts; returns `(labels, inertia)`.
#[pyfunction]
#[pyo3(signature = (rows, k, restarts=10, seed=0))]
fn kmeans(rows: Vec<Vec<f64>>, k: usize, restarts: usize, seed: u64) -> PyResult<(Vec<usize>, f64)> {
    let data = to_array(&rows)?;
    let r = clustering::kmeans(data.view(), k, restarts, seed).map_err(to_py)?;
    Ok((r.assignment.labels().to_vec(), r.inertia))
}

#[pymodule]
fn hmsge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate_planted, m)?)?;
    m.add_function(wrap_pyfunction!(load_features, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    Ok(())
}
