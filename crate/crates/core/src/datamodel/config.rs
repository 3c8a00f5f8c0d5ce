use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of one similarity-graph-embedding branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityConfig {
    /// Weight of the initial-graph term; the current graph gets `1 - alpha`.
    pub alpha: f64,
    /// Weight of the other modality's graph. Ignored in the joint layer.
    pub beta: f64,
    /// Attenuation applied to edges between different communities.
    pub mu: f64,
    /// Number of k-means communities used by the graph update.
    pub n_clusters: usize,
    /// Bandwidth of the exponential cosine kernel.
    pub bandwidth: f64,
    pub embed_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    /// Stop once the relative objective decrease of an accepted step falls
    /// below this value.
    pub tolerance: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.05,
            max_steps: 200,
            tolerance: 1e-6,
        }
    }
}

/// How branch embeddings are initialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    /// Leading singular directions of the row-centered features.
    Svd,
    /// Seeded standard Gaussian.
    Random,
}

/// Which side of the cross-entropy is the target distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossOrientation {
    /// `-sum q_graph * log p_embedding` (default).
    GraphTarget,
    /// `-sum p_embedding * log q_graph`.
    EmbeddingTarget,
}

fn default_restarts() -> usize {
    10
}

fn default_init() -> InitMethod {
    InitMethod::Svd
}

fn default_orientation() -> LossOrientation {
    LossOrientation::GraphTarget
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub modality_x: ModalityConfig,
    pub modality_y: ModalityConfig,
    /// Second-layer settings; `beta` is not used.
    pub joint: ModalityConfig,
    /// Coupled first-layer iterations.
    pub k1: usize,
    /// Joint second-layer iterations.
    pub k2: usize,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_restarts")]
    pub kmeans_restarts: usize,
    #[serde(default = "default_init")]
    pub init: InitMethod,
    #[serde(default = "default_orientation")]
    pub loss_orientation: LossOrientation,
}

/// Named configurations shipped with the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Textual attributes for `X`, visual attributes for `Y`.
    TAttrib,
    /// Skip-gram vectors for `X`, visual attributes for `Y`.
    SkipGram,
}

impl Preset {
    pub fn source(self) -> &'static str {
        match self {
            Preset::TAttrib => include_str!("../../presets/tattrib.toml"),
            Preset::SkipGram => include_str!("../../presets/skipgram.toml"),
        }
    }

    pub fn config(self) -> PipelineConfig {
        PipelineConfig::from_toml_str(self.source()).expect("bundled preset parses")
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tattrib" => Ok(Preset::TAttrib),
            "skipgram" | "skip-gram" => Ok(Preset::SkipGram),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}, expected tattrib or skipgram"
            ))),
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Preset::TAttrib.config()
    }
}

impl ModalityConfig {
    fn validate(&self, section: &str, n_words: Option<usize>, uses_beta: bool) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("[{section}] {msg}")));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha = {} must lie in [0, 1]", self.alpha));
        }
        if uses_beta && !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta = {} must be >= 0", self.beta));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return bad(format!("mu = {} must lie in (0, 1)", self.mu));
        }
        if self.n_clusters == 0 {
            return bad("n_clusters must be positive".into());
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return bad(format!("bandwidth = {} must be positive", self.bandwidth));
        }
        if self.embed_dim == 0 {
            return bad("embed_dim must be positive".into());
        }
        if let Some(n) = n_words {
            if self.n_clusters >= n {
                return bad(format!(
                    "n_clusters = {} must be smaller than the vocabulary size {n}",
                    self.n_clusters
                ));
            }
        }
        Ok(())
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "[optimizer] learning_rate = {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config(format!(
                "[optimizer] tolerance = {} must be >= 0",
                self.tolerance
            )));
        }
        Ok(())
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Check every range; `n_words` additionally bounds the cluster counts.
    pub fn validate(&self, n_words: Option<usize>) -> Result<()> {
        self.modality_x.validate("modality_x", n_words, true)?;
        self.modality_y.validate("modality_y", n_words, true)?;
        self.joint.validate("joint", n_words, false)?;
        self.optimizer.validate()?;
        if self.k1 == 0 || self.k2 == 0 {
            return Err(Error::Config("k1 and k2 must be at least 1".into()));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::Config("kmeans_restarts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn modality(&self, m: super::Modality) -> &ModalityConfig {
        match m {
            super::Modality::X => &self.modality_x,
            super::Modality::Y => &self.modality_y,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tattrib_preset_values() {
        let c = Preset::TAttrib.config();
        assert_eq!(
            (c.modality_x.alpha, c.modality_x.mu, c.modality_x.n_clusters),
            (0.1, 0.95, 25)
        );
        assert_eq!(
            (c.modality_y.alpha, c.modality_y.mu, c.modality_y.n_clusters),
            (0.3, 0.7, 5)
        );
        assert_eq!((c.joint.alpha, c.joint.mu, c.joint.n_clusters), (0.05, 0.7, 20));
        assert_eq!((c.modality_x.beta, c.modality_y.beta), (0.01, 0.1));
        assert_eq!((c.k1, c.k2), (4, 2));
        assert_eq!(
            (c.modality_x.embed_dim, c.modality_y.embed_dim, c.joint.embed_dim),
            (15, 15, 15)
        );
        assert_eq!(c, PipelineConfig::default());
    }

    #[test]
    fn skipgram_preset_values() {
        let c = Preset::SkipGram.config();
        assert_eq!((c.joint.alpha, c.joint.mu, c.joint.n_clusters), (0.1, 0.7, 6));
        assert_eq!((c.k1, c.k2), (5, 5));
        assert_eq!(c.modality_x, Preset::TAttrib.config().modality_x);
    }

    #[test]
    fn toml_round_trip() {
        let c = Preset::SkipGram.config();
        assert_eq!(PipelineConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn validation_messages() {
        let mut c = PipelineConfig::default();
        c.modality_y.mu = 1.0;
        let msg = c.validate(None).unwrap_err().to_string();
        assert!(msg.contains("modality_y") && msg.contains("mu"), "{msg}");

        let c = PipelineConfig::default();
        let msg = c.validate(Some(10)).unwrap_err().to_string();
        assert!(msg.contains("n_clusters"), "{msg}");

        let err = PipelineConfig::from_toml_str("k1 = 1\nbogus = 3\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
