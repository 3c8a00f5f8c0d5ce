//! Hierarchical multi-modal similarity graph embedding.
//!
//! Two feature matrices describing the same vocabulary (for example textual
//! and visual attributes of concrete nouns) are embedded by alternating a
//! coupled graph-embedding step with a community-based update of each
//! modality's similarity graph. The two enhanced unimodal embeddings are then
//! concatenated and embedded jointly in a second layer.
//!
//! Module map:
//!
//! * [`datamodel`]: vocabularies, feature matrices, graphs, configs, model files.
//! * [`similarity`]: cosine kernel, row normalization, cross-entropy.
//! * [`clustering`]: k-means, Chinese Whispers and the adjusted Rand index.
//! * [`sge`]: single-branch objective, gradient, minimizer and graph update.
//! * [`pipeline`]: the two-layer pipeline and inductive inference.
//! * [`eval`]: similarity correlation, categorization F-score, neighbor reports.
//! * [`synth`]: planted-community data generator.
//! * [`cli`]: the `hmsge` command-line tool.

pub mod cli;
pub mod clustering;
pub mod datamodel;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod seed;
pub mod sge;
pub mod similarity;
pub mod synth;

pub use datamodel::{
    EmbeddingState, FeatureMatrix, Modality, ModalityConfig, OptimizerConfig, PipelineConfig,
    SimilarityGraph, TrainedModel, Vocabulary,
};
pub use error::{Error, Result};
pub use pipeline::{
    inductive_infer, run_layer1, run_layer2, run_pipeline, run_pipeline_with, MissingModalitySpec,
    RunOptions,
};
