//! Command-line interface: `synth`, `train`, `eval`, `neighbors`, `export`.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 I/O or model-file
//! error, 3 numeric failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use crate::clustering::CwParams;
use crate::datamodel::{
    load_features, FeatureMatrix, InitMethod, PipelineConfig, Preset, SimilarityGraph, TrainedModel,
};
use crate::error::{Error, Result};
use crate::eval::{
    categorize_and_score, evaluate_similarity, nearest_neighbors, CategorizeParams, GoldCategories,
    RatingKind, RatingSet,
};
use crate::pipeline::{run_pipeline_with, MissingModalitySpec, RunOptions};
use crate::similarity::pairwise_kernel;
use crate::synth::{generate_planted, write_planted, PlantedSpec};

#[derive(Debug, Parser)]
#[command(name = "hmsge", version, about = "Hierarchical multimodal similarity graph embedding")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate planted-community feature files.
    Synth(SynthArgs),
    /// Train a model on two aligned feature files.
    Train(TrainArgs),
    /// Score a model against similarity ratings and/or gold categories.
    Eval(EvalArgs),
    /// List the nearest neighbors of a word.
    Neighbors(NeighborsArgs),
    /// Write affinities, embeddings or the objective trace as TSV.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    /// Feature widths of X and Y.
    #[arg(long, num_args = 2, value_delimiter = ',', default_values_t = [50, 30])]
    pub dims: Vec<usize>,
    /// Noise standard deviation, one value for both modalities or `x,y`.
    #[arg(long, num_args = 1..=2, value_delimiter = ',', default_values_t = [0.25])]
    pub noise: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub consistency: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Tattrib,
    Skipgram,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Preset {
        match p {
            PresetArg::Tattrib => Preset::TAttrib,
            PresetArg::Skipgram => Preset::SkipGram,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Svd,
    Random,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    /// TOML configuration file.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Bundled configuration; used when no --config is given.
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    #[arg(long)]
    pub out: PathBuf,
    /// `word<TAB>x|y` lines naming words whose features are absent.
    #[arg(long)]
    pub missing: Option<PathBuf>,
    /// Print the objective of every embedding step.
    #[arg(long)]
    pub verbose: bool,
    /// Threads for the two first-layer branches; never changes the result.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long)]
    pub k2: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Which {
    X,
    Y,
    Joint,
}

impl Which {
    fn name(self) -> &'static str {
        match self {
            Which::X => "x",
            Which::Y => "y",
            Which::Joint => "joint",
        }
    }

    fn embedding(self, m: &TrainedModel) -> &Array2<f64> {
        match self {
            Which::X => &m.x_embed.embedding,
            Which::Y => &m.y_embed.embedding,
            Which::Joint => &m.z_embed.embedding,
        }
    }

    fn graph(self, m: &TrainedModel) -> &SimilarityGraph {
        match self {
            Which::X => &m.graph_x,
            Which::Y => &m.graph_y,
            Which::Joint => &m.graph_z,
        }
    }

    fn bandwidth(self, m: &TrainedModel) -> f64 {
        match self {
            Which::X => m.config.modality_x.bandwidth,
            Which::Y => m.config.modality_y.bandwidth,
            Which::Joint => m.config.joint.bandwidth,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Semantic similarity ratings, `word_a<TAB>word_b<TAB>rating`.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Visual similarity ratings, same format.
    #[arg(long)]
    pub visual_ratings: Option<PathBuf>,
    /// Gold categories, `word<TAB>category`.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Which::Joint)]
    pub which: Which,
    /// Also write the report as TSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip rated pairs with unknown words instead of failing.
    #[arg(long)]
    pub skip_missing: bool,
    /// Chinese Whispers seed; defaults to the model's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Neighbors kept per word when sparsifying the categorization graph.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[arg(long, default_value_t = 50)]
    pub iters: usize,
}

#[derive(Debug, Args)]
pub struct NeighborsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub word: String,
    #[arg(long, value_enum, default_value_t = Which::Joint)]
    pub which: Which,
    /// Keep words whose cosine is at least this fraction of the best one.
    #[arg(long, default_value_t = 0.9)]
    pub ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum What {
    /// Kernel affinity of the embedding.
    Affinity,
    /// Final attenuated graph stored in the model.
    Graph,
    Embeddings,
    Trace,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub what: What,
    #[arg(long, value_enum, default_value_t = Which::Joint)]
    pub which: Which,
    #[arg(long)]
    pub out: PathBuf,
}

/// Where command output goes and how tables are laid out.
pub struct Output<'a> {
    pub out: &'a mut dyn Write,
    /// Align table columns for a human reader instead of printing TSV.
    pub aligned: bool,
}

impl Output<'_> {
    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| Error::io("<stdout>", e))
    }

    fn table(&mut self, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let text = if self.aligned {
            aligned_table(header, rows)
        } else {
            tsv_table(header, rows)
        };
        self.out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
    }
}

fn tsv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join("\t");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join("\t"));
        s.push('\n');
    }
    s
}

fn aligned_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let fmt_row = |cells: &mut dyn Iterator<Item = &str>| {
        let line: Vec<String> = cells
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect();
        line.join("  ").trim_end().to_string()
    };
    let mut s = fmt_row(&mut header.iter().copied());
    s.push('\n');
    for r in rows {
        s.push_str(&fmt_row(&mut r.iter().map(String::as_str)));
        s.push('\n');
    }
    s
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parse `args` (program name first), run the command and return the exit
/// code. Errors are reported on `err`.
pub fn main_with<I, T>(args: I, out: &mut Output<'_>, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out.out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    1
                }
            };
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut Output<'_>) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Neighbors(a) => cmd_neighbors(a, out),
        Command::Export(a) => cmd_export(a, out),
    }
}

fn cmd_synth(a: SynthArgs, out: &mut Output<'_>) -> Result<()> {
    let noise = match a.noise[..] {
        [s] => (s, s),
        [sx, sy] => (sx, sy),
        _ => unreachable!("clap limits --noise to two values"),
    };
    let spec = PlantedSpec {
        n_words: a.n,
        n_communities: a.k as usize,
        dims: (a.dims[0], a.dims[1]),
        noise,
        consistency: a.consistency,
        seed: a.seed,
    };
    let data = generate_planted(&spec)?;
    write_planted(&data, &a.out_dir)?;
    out.line(&format!(
        "wrote {} words in {} communities to {}: X.tsv ({} features), Y.tsv ({} features), gold.tsv",
        spec.n_words,
        spec.n_communities,
        a.out_dir.display(),
        spec.dims.0,
        spec.dims.1
    ))
}

/// Configuration for `train`: file or preset, then flag overrides.
pub fn train_config(a: &TrainArgs) -> Result<(PipelineConfig, String)> {
    let (mut config, source) = match (&a.config, a.preset) {
        (Some(path), _) => (PipelineConfig::from_file(path)?, format!("config {}", path.display())),
        (None, p) => {
            let preset: Preset = p.unwrap_or(PresetArg::Tattrib).into();
            let name = match preset {
                Preset::TAttrib => "tattrib",
                Preset::SkipGram => "skipgram",
            };
            (preset.config(), format!("preset {name}"))
        }
    };
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(k) = a.k1 {
        config.k1 = k;
    }
    if let Some(k) = a.k2 {
        config.k2 = k;
    }
    if let Some(lr) = a.learning_rate {
        config.optimizer.learning_rate = lr;
    }
    if let Some(m) = a.max_steps {
        config.optimizer.max_steps = m;
    }
    if let Some(t) = a.tolerance {
        config.optimizer.tolerance = t;
    }
    if let Some(i) = a.init {
        config.init = match i {
            InitArg::Svd => InitMethod::Svd,
            InitArg::Random => InitMethod::Random,
        };
    }
    Ok((config, source))
}

/// Human-readable summary of every configuration value.
pub fn describe_config(c: &PipelineConfig) -> String {
    let mut s = String::new();
    for (name, m) in [("modality_x", &c.modality_x), ("modality_y", &c.modality_y), ("joint", &c.joint)] {
        write!(
            s,
            "{name:<11} alpha={} mu={} n_clusters={} bandwidth={} embed_dim={}",
            m.alpha, m.mu, m.n_clusters, m.bandwidth, m.embed_dim
        )
        .unwrap();
        if name != "joint" {
            write!(s, " beta={}", m.beta).unwrap();
        }
        s.push('\n');
    }
    writeln!(
        s,
        "{:<11} k1={} k2={} seed={} kmeans_restarts={} init={} loss_orientation={}",
        "schedule",
        c.k1,
        c.k2,
        c.seed,
        c.kmeans_restarts,
        match c.init {
            InitMethod::Svd => "svd",
            InitMethod::Random => "random",
        },
        match c.loss_orientation {
            crate::datamodel::LossOrientation::GraphTarget => "graph_target",
            crate::datamodel::LossOrientation::EmbeddingTarget => "embedding_target",
        }
    )
    .unwrap();
    writeln!(
        s,
        "{:<11} learning_rate={} max_steps={} tolerance={}",
        "optimizer", c.optimizer.learning_rate, c.optimizer.max_steps, c.optimizer.tolerance
    )
    .unwrap();
    s
}

fn cmd_train(a: TrainArgs, out: &mut Output<'_>) -> Result<()> {
    if a.threads == 0 {
        return Err(Error::Validation("--threads must be at least 1".into()));
    }
    let (config, source) = train_config(&a)?;
    out.line(&format!("using {source}"))?;
    out.out
        .write_all(describe_config(&config).as_bytes())
        .map_err(|e| Error::io("<stdout>", e))?;

    let x = load_features(&a.x, "x")?;
    let y = load_features(&a.y, "y")?;
    let missing = match &a.missing {
        Some(p) => MissingModalitySpec::from_file(p)?,
        None => MissingModalitySpec::new(),
    };
    config.validate(Some(x.vocab().len()))?;
    let model = run_pipeline_with(&x, &y, &missing, &config, RunOptions { threads: a.threads })?;

    if a.verbose {
        let rows: Vec<Vec<String>> = step_summaries(&model)
            .into_iter()
            .map(|s| {
                vec![
                    s.layer.to_string(),
                    s.branch.to_string(),
                    s.iteration.to_string(),
                    s.steps.to_string(),
                    format!("{:.9}", s.start),
                    format!("{:.9}", s.end),
                ]
            })
            .collect();
        out.table(&["layer", "branch", "iteration", "steps", "objective_start", "objective_end"], &rows)?;
    }
    model.save(&a.out)?;
    out.line(&format!(
        "trained {} words ({} missing a modality); model written to {}",
        model.vocab.len(),
        missing.len(),
        a.out.display()
    ))
}

struct StepSummary {
    layer: u8,
    branch: &'static str,
    iteration: u32,
    steps: u32,
    start: f64,
    end: f64,
}

fn step_summaries(model: &TrainedModel) -> Vec<StepSummary> {
    let mut v: Vec<StepSummary> = Vec::new();
    for t in &model.trace {
        match v.last_mut() {
            Some(s) if t.step > 0 && s.layer == t.layer && s.branch == t.branch_name() && s.iteration == t.iteration => {
                s.steps = t.step;
                s.end = t.objective;
            }
            _ => v.push(StepSummary {
                layer: t.layer,
                branch: t.branch_name(),
                iteration: t.iteration,
                steps: 0,
                start: t.objective,
                end: t.objective,
            }),
        }
    }
    v
}

fn require_word_coverage(model: &TrainedModel, which: Which) -> Result<&Array2<f64>> {
    let e = which.embedding(model);
    if e.nrows() != model.vocab.len() {
        return Err(Error::Format(format!(
            "{} embedding has {} rows for {} words",
            which.name(),
            e.nrows(),
            model.vocab.len()
        )));
    }
    Ok(e)
}

fn cmd_eval(a: EvalArgs, out: &mut Output<'_>) -> Result<()> {
    if a.ratings.is_none() && a.visual_ratings.is_none() && a.gold.is_none() {
        return Err(Error::Validation(
            "nothing to evaluate: give --ratings, --visual-ratings and/or --gold".into(),
        ));
    }
    let model = TrainedModel::load(&a.model)?;
    let e = require_word_coverage(&model, a.which)?;
    let which = a.which.name();
    let mut rows: Vec<Vec<String>> = Vec::new();

    for (path, kind, metric) in [
        (&a.ratings, RatingKind::Semantic, "spearman_semantic"),
        (&a.visual_ratings, RatingKind::Visual, "spearman_visual"),
    ] {
        let Some(path) = path else { continue };
        let ratings = RatingSet::from_file(path, kind)?;
        let score = evaluate_similarity(e.view(), &model.vocab, &ratings, a.skip_missing)?;
        rows.push(vec![
            metric.to_string(),
            which.to_string(),
            format!("{:.6}", score.rho),
            format!("pairs={} skipped={}", score.pairs_used, score.skipped.len()),
        ]);
    }
    if let Some(path) = &a.gold {
        let gold = GoldCategories::from_file(path)?;
        if a.top_k == 0 || a.iters == 0 {
            return Err(Error::Validation("--top-k and --iters must be at least 1".into()));
        }
        let params = CategorizeParams {
            cw: CwParams {
                top_k: a.top_k,
                iters: a.iters,
            },
            bandwidth: a.which.bandwidth(&model),
        };
        let seed = a.seed.unwrap_or(model.config.seed);
        let (clusters, f) = categorize_and_score(e.view(), &model.vocab, &gold, params, seed)?;
        rows.push(vec![
            "fscore".to_string(),
            which.to_string(),
            format!("{f:.6}"),
            format!("clusters={} covered={}", clusters.k_effective(), gold.len()),
        ]);
    }

    let header = ["metric", "representation", "value", "detail"];
    out.table(&header, &rows)?;
    if let Some(path) = &a.out {
        write_file(path, &tsv_table(&header, &rows))?;
    }
    Ok(())
}

fn cmd_neighbors(a: NeighborsArgs, out: &mut Output<'_>) -> Result<()> {
    if !(a.ratio > 0.0 && a.ratio <= 1.0) {
        return Err(Error::Validation(format!("--ratio must lie in (0, 1], got {}", a.ratio)));
    }
    let model = TrainedModel::load(&a.model)?;
    let e = require_word_coverage(&model, a.which)?;
    let nn = nearest_neighbors(e.view(), &model.vocab, &a.word, a.ratio)?;
    let rows: Vec<Vec<String>> = nn
        .into_iter()
        .enumerate()
        .map(|(i, (w, c))| vec![(i + 1).to_string(), w, format!("{c:.6}")])
        .collect();
    out.table(&["rank", "word", "cosine"], &rows)
}

/// Square matrix as TSV with the words as header row and first column.
pub fn matrix_tsv(words: &[String], m: &Array2<f64>) -> String {
    let mut s = String::from("word");
    for w in words {
        s.push('\t');
        s.push_str(w);
    }
    s.push('\n');
    for (w, row) in words.iter().zip(m.rows()) {
        s.push_str(w);
        for v in row {
            write!(s, "\t{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn trace_tsv(model: &TrainedModel) -> String {
    let mut s = String::from("layer\tbranch\titeration\tstep\tobjective\n");
    for t in &model.trace {
        writeln!(s, "{}\t{}\t{}\t{}\t{}", t.layer, t.branch_name(), t.iteration, t.step, t.objective).unwrap();
    }
    s
}

fn cmd_export(a: ExportArgs, out: &mut Output<'_>) -> Result<()> {
    let model = TrainedModel::load(&a.model)?;
    let words = model.vocab.words();
    let text = match a.what {
        What::Affinity => {
            let e = require_word_coverage(&model, a.which)?;
            let w = pairwise_kernel(e.view(), a.which.bandwidth(&model), Some(&model.vocab))?;
            matrix_tsv(words, &w)
        }
        What::Graph => matrix_tsv(words, a.which.graph(&model).weights()),
        What::Embeddings => {
            let e = require_word_coverage(&model, a.which)?;
            let m = FeatureMatrix::new(model.vocab.clone(), e.clone(), a.which.name())?;
            crate::datamodel::features_to_string(&m)
        }
        What::Trace => trace_tsv(&model),
    };
    write_file(&a.out, &text)?;
    out.line(&format!("wrote {}", a.out.display()))
}
