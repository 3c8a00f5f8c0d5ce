//! Binary model container.
//!
//! All integers and floats are little-endian; floats are stored as raw IEEE
//! 754 bits so a save/load cycle is bit-exact.
//!
//! ```text
//! magic        8 bytes   "HMSGEMDL"
//! version      u32       FORMAT_VERSION
//! vocabulary   u32 count, then per word: u32 byte length + UTF-8 bytes
//! config       modality_x, modality_y, joint, each as
//!                alpha f64, beta f64, mu f64, n_clusters u64, bandwidth f64, embed_dim u64
//!              k1 u64, k2 u64,
//!              learning_rate f64, max_steps u64, tolerance f64,
//!              seed u64, kmeans_restarts u64, init u8, loss_orientation u8
//! embeddings   x, y, joint, each as iteration u64, rows u32, cols u32, rows*cols f64 (row-major)
//! graphs       x, y, joint, each as n u32, n*n f64 (row-major)
//! trace        u32 count, then per entry:
//!                layer u8, branch u8, iteration u32, step u32, objective f64
//! crc32        u32 over every preceding byte
//! ```

use std::path::Path;

use ndarray::{concatenate, Array2, Axis};

use super::{
    EmbeddingState, InitMethod, LossOrientation, ModalityConfig, OptimizerConfig, PipelineConfig,
    SimilarityGraph, Vocabulary,
};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HMSGEMDL";
pub const FORMAT_VERSION: u32 = 1;

/// One recorded objective value of an embedding step.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    /// 1 for the coupled unimodal layer, 2 for the joint layer.
    pub layer: u8,
    /// 0 = x, 1 = y, 2 = joint.
    pub branch: u8,
    /// Outer SGE iteration, starting at 1.
    pub iteration: u32,
    /// Accepted descent step; 0 is the starting point.
    pub step: u32,
    pub objective: f64,
}

impl TraceEntry {
    pub fn branch_name(&self) -> &'static str {
        match self.branch {
            0 => "x",
            1 => "y",
            _ => "joint",
        }
    }
}

/// Everything a pipeline run produces.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub vocab: Vocabulary,
    pub x_embed: EmbeddingState,
    pub y_embed: EmbeddingState,
    pub z_embed: EmbeddingState,
    pub graph_x: SimilarityGraph,
    pub graph_y: SimilarityGraph,
    pub graph_z: SimilarityGraph,
    pub config: PipelineConfig,
    pub trace: Vec<TraceEntry>,
}

impl TrainedModel {
    /// Concatenation of the row-normalized layer-1 embeddings, the input of
    /// the joint layer.
    pub fn concatenated(&self) -> Array2<f64> {
        let x = crate::sge::normalize_rows(&self.x_embed.embedding);
        let y = crate::sge::normalize_rows(&self.y_embed.embedding);
        concatenate(Axis(1), &[x.view(), y.view()]).expect("same row count")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_model(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_model(path)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(FORMAT_VERSION);
        w.u32(self.vocab.len() as u32);
        for word in self.vocab.words() {
            w.u32(word.len() as u32);
            w.bytes(word.as_bytes());
        }
        let c = &self.config;
        for m in [&c.modality_x, &c.modality_y, &c.joint] {
            w.f64(m.alpha);
            w.f64(m.beta);
            w.f64(m.mu);
            w.u64(m.n_clusters as u64);
            w.f64(m.bandwidth);
            w.u64(m.embed_dim as u64);
        }
        w.u64(c.k1 as u64);
        w.u64(c.k2 as u64);
        w.f64(c.optimizer.learning_rate);
        w.u64(c.optimizer.max_steps as u64);
        w.f64(c.optimizer.tolerance);
        w.u64(c.seed);
        w.u64(c.kmeans_restarts as u64);
        w.u8(match c.init {
            InitMethod::Svd => 0,
            InitMethod::Random => 1,
        });
        w.u8(match c.loss_orientation {
            LossOrientation::GraphTarget => 0,
            LossOrientation::EmbeddingTarget => 1,
        });
        for e in [&self.x_embed, &self.y_embed, &self.z_embed] {
            w.u64(e.iteration as u64);
            w.u32(e.embedding.nrows() as u32);
            w.u32(e.embedding.ncols() as u32);
            e.embedding.iter().for_each(|&v| w.f64(v));
        }
        for g in [&self.graph_x, &self.graph_y, &self.graph_z] {
            w.u32(g.len() as u32);
            g.weights().iter().for_each(|&v| w.f64(v));
        }
        w.u32(self.trace.len() as u32);
        for t in &self.trace {
            w.u8(t.layer);
            w.u8(t.branch);
            w.u32(t.iteration);
            w.u32(t.step);
            w.f64(t.objective);
        }
        let crc = crc32fast::hash(&w.buf);
        w.u32(crc);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Format("missing HMSGEMDL magic bytes".into()));
        }
        if bytes.len() < MAGIC.len() + 8 {
            return Err(Error::Checksum {
                stored: 0,
                computed: crc32fast::hash(bytes),
            });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }

        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let n_words = r.u32()? as usize;
        let mut words = Vec::with_capacity(n_words);
        for _ in 0..n_words {
            let len = r.u32()? as usize;
            let raw = r.take(len)?;
            let word = std::str::from_utf8(raw)
                .map_err(|_| Error::Format("vocabulary word is not UTF-8".into()))?;
            words.push(word.to_string());
        }
        let vocab = Vocabulary::new(words)?;

        let modality = |r: &mut Reader| -> Result<ModalityConfig> {
            Ok(ModalityConfig {
                alpha: r.f64()?,
                beta: r.f64()?,
                mu: r.f64()?,
                n_clusters: r.u64()? as usize,
                bandwidth: r.f64()?,
                embed_dim: r.u64()? as usize,
            })
        };
        let modality_x = modality(&mut r)?;
        let modality_y = modality(&mut r)?;
        let joint = modality(&mut r)?;
        let k1 = r.u64()? as usize;
        let k2 = r.u64()? as usize;
        let optimizer = OptimizerConfig {
            learning_rate: r.f64()?,
            max_steps: r.u64()? as usize,
            tolerance: r.f64()?,
        };
        let seed = r.u64()?;
        let kmeans_restarts = r.u64()? as usize;
        let init = match r.u8()? {
            0 => InitMethod::Svd,
            1 => InitMethod::Random,
            other => return Err(Error::Format(format!("unknown init code {other}"))),
        };
        let loss_orientation = match r.u8()? {
            0 => LossOrientation::GraphTarget,
            1 => LossOrientation::EmbeddingTarget,
            other => return Err(Error::Format(format!("unknown loss orientation code {other}"))),
        };
        let config = PipelineConfig {
            modality_x,
            modality_y,
            joint,
            k1,
            k2,
            optimizer,
            seed,
            kmeans_restarts,
            init,
            loss_orientation,
        };

        let mut embeds = Vec::with_capacity(3);
        for _ in 0..3 {
            let iteration = r.u64()? as usize;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            if rows != vocab.len() {
                return Err(Error::Format(format!(
                    "embedding has {rows} rows for a vocabulary of {}",
                    vocab.len()
                )));
            }
            let embedding = r.matrix(rows, cols)?;
            embeds.push(EmbeddingState {
                embedding,
                iteration,
            });
        }
        let mut graphs = Vec::with_capacity(3);
        for _ in 0..3 {
            let n = r.u32()? as usize;
            if n != vocab.len() {
                return Err(Error::Format(format!(
                    "graph over {n} nodes for a vocabulary of {}",
                    vocab.len()
                )));
            }
            graphs.push(SimilarityGraph::from_parts(r.matrix(n, n)?, vocab.clone()));
        }
        let n_trace = r.u32()? as usize;
        let mut trace = Vec::with_capacity(n_trace);
        for _ in 0..n_trace {
            trace.push(TraceEntry {
                layer: r.u8()?,
                branch: r.u8()?,
                iteration: r.u32()?,
                step: r.u32()?,
                objective: r.f64()?,
            });
        }
        if r.pos != body.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after model payload",
                body.len() - r.pos
            )));
        }

        let mut graphs = graphs.into_iter();
        let mut embeds = embeds.into_iter();
        Ok(TrainedModel {
            vocab,
            x_embed: embeds.next().unwrap(),
            y_embed: embeds.next().unwrap(),
            z_embed: embeds.next().unwrap(),
            graph_x: graphs.next().unwrap(),
            graph_y: graphs.next().unwrap(),
            graph_z: graphs.next().unwrap(),
            config,
            trace,
        })
    }
}

pub fn save_model(m: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, m.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    TrainedModel::from_bytes(&bytes)
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_bits().to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.buf.len())
            .ok_or_else(|| Error::Format("unexpected end of model payload".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("matrix size overflow".into()))?;
        if count.saturating_mul(8) > self.buf.len() - self.pos {
            return Err(Error::Format("unexpected end of model payload".into()));
        }
        let values = (0..count).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Array2::from_shape_vec((rows, cols), values).expect("size checked"))
    }
}
