//! Batch command-line front end: `stats`, `prep`, `run`, `gradcheck`, `synth`.
//!
//! Exit codes: 0 success, 1 partial failure (a grid cell failed, a check did
//! not pass, every document was filtered out), 2 usage, configuration or I/O
//! error.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{self, Features, MultiLabelDataset, RawVotedDocument, ThresholdScope};
use crate::error::{Error, Result};
use crate::evaluation::{
    cross_validate, make_folds_with, markdown_table, write_csv, Aggregation, CellOutcome, FoldMode, FoldPlan, Learner,
    ModelFitter,
};
use crate::learners::{ClassifierSpec, LearnerParams};
use crate::lstm::{self, TrainConfig};
use crate::textprep::{self, EmbeddingTable, PipelineConfig, Replacement, Stemmer};
use crate::transforms::{MethodConfig, DEFAULT_THRESHOLD};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable that sets the worker count when `--jobs` is absent.
pub const JOBS_ENV: &str = "MLREACT_JOBS";

#[derive(Debug, Parser)]
#[command(
    name = "mlreact",
    version,
    about = "Multi-label classification of reader reactions to news"
)]
pub struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = JOBS_ENV, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print instance count, label count, cardinality, density and label counts.
    Stats { corpus: PathBuf },
    /// Turn raw per-label vote counts into a labelled JSONL corpus.
    Prep {
        raw: PathBuf,
        out: PathBuf,
        /// Labels with fewer votes than this fraction of the reference total are dropped.
        #[arg(long, default_value_t = 0.03)]
        threshold: f64,
        #[arg(long, value_enum, default_value_t = ScopeArg::Doc)]
        threshold_scope: ScopeArg,
    },
    /// Cross-validate every cell of an experiment grid described by a TOML file.
    Run { config: PathBuf },
    /// Gradient-check the LSTM backward pass on random small networks.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the synthetic separable corpus.
    Synth {
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    Doc,
    Corpus,
}

impl From<ScopeArg> for ThresholdScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Doc => ThresholdScope::Doc,
            ScopeArg::Corpus => ThresholdScope::Corpus,
        }
    }
}

/// Parse `args` (program name first), run the command and return the exit code.
pub fn main_with<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start {} workers: {e}", cli.jobs);
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(&cli.command, out, err)) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn dispatch(cmd: &Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Stats { corpus } => cmd_stats(corpus, out),
        Command::Prep {
            raw,
            out: dest,
            threshold,
            threshold_scope,
        } => cmd_prep(raw, dest, *threshold, (*threshold_scope).into(), out, err),
        Command::Run { config } => cmd_run(config, out, err),
        Command::Gradcheck { cases, seed } => cmd_gradcheck(*cases, *seed, out),
        Command::Synth { out: dest, seed } => {
            crate::synthetic::write_separable_corpus(dest, *seed)?;
            writeln!(out, "wrote {}", dest.display()).map_err(stdout_err)?;
            Ok(EXIT_OK)
        }
    }
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

pub fn cmd_stats(path: &Path, out: &mut dyn Write) -> Result<i32> {
    let ds = corpus::load_jsonl(path, None)?;
    let mut s = String::new();
    s.push_str(&format!("instances    {}\n", ds.len()));
    s.push_str(&format!("labels       {}\n", ds.n_labels()));
    s.push_str(&format!("cardinality  {:.4}\n", corpus::label_cardinality(&ds)?));
    s.push_str(&format!("density      {:.4}\n", corpus::label_density(&ds)?));
    s.push_str("label counts\n");
    let counts = corpus::class_distribution(&ds);
    let width = counts.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    for (name, count) in counts {
        s.push_str(&format!("  {name:<width$}  {count}\n"));
    }
    out.write_all(s.as_bytes()).map_err(stdout_err)?;
    Ok(EXIT_OK)
}

/// Counts reported by `prep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrepSummary {
    pub kept: usize,
    pub dropped: usize,
    pub malformed: usize,
}

pub fn prep_corpus(raw: &Path, dest: &Path, threshold: f64, scope: ThresholdScope) -> Result<PrepSummary> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let file = fs::File::open(raw).map_err(|e| Error::io(raw, e))?;
    let mut docs = Vec::new();
    let mut malformed = 0;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(raw, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawVotedDocument>(&line) {
            Ok(mut doc) => {
                doc.id.get_or_insert_with(|| format!("line-{}", n + 1));
                docs.push(doc);
            }
            Err(_) => malformed += 1,
        }
    }
    let kept = corpus::vote_threshold_filter(&docs, threshold, scope)?;
    let file = fs::File::create(dest).map_err(|e| Error::io(dest, e))?;
    let mut w = BufWriter::new(file);
    for doc in &kept {
        let row = json!({ "id": doc.id, "text": doc.text, "labels": doc.voted_labels() });
        writeln!(w, "{row}").map_err(|e| Error::io(dest, e))?;
    }
    w.flush().map_err(|e| Error::io(dest, e))?;
    Ok(PrepSummary {
        kept: kept.len(),
        dropped: docs.len() - kept.len(),
        malformed,
    })
}

fn cmd_prep(
    raw: &Path,
    dest: &Path,
    threshold: f64,
    scope: ThresholdScope,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let s = prep_corpus(raw, dest, threshold, scope)?;
    writeln!(out, "kept {} dropped {} malformed {}", s.kept, s.dropped, s.malformed).map_err(stdout_err)?;
    if s.kept == 0 {
        let _ = writeln!(err, "error: every document was dropped");
        return Ok(EXIT_PARTIAL);
    }
    Ok(EXIT_OK)
}

fn cmd_gradcheck(cases: usize, seed: u64, out: &mut dyn Write) -> Result<i32> {
    if cases == 0 {
        return Err(Error::invalid("need at least one case"));
    }
    let c = lstm::certify(cases, seed)?;
    let mut s = String::from("case  h  d  pooling  lengths      rel.error   abs.error   fault.error\n");
    for (i, k) in c.cases.iter().enumerate() {
        s.push_str(&format!(
            "{i:>4}  {}  {}  {:<7}  {:<11}  {:.3e}   {:.3e}   {:.3e}\n",
            k.hidden,
            k.input,
            format!("{:?}", k.pooling).to_lowercase(),
            format!("{:?}", k.sequence_lengths),
            k.error,
            k.error_absolute,
            k.fault_error
        ));
    }
    let verdict = |ok: bool| if ok { "pass" } else { "FAIL" };
    s.push_str(&format!(
        "max relative error {:.3e} (tolerance {:.0e}): {}\n",
        c.max_error(),
        c.tolerance,
        verdict(c.max_error() <= c.tolerance)
    ));
    s.push_str(&format!(
        "fault-injected minimum {:.3e} (must exceed {:.0e}): {}\n",
        c.min_fault_error(),
        c.fault_floor,
        verdict(c.min_fault_error() > c.fault_floor)
    ));
    let over = c.cases.iter().filter(|k| k.error > c.tolerance).count();
    if over > 0 {
        s.push_str(&format!(
            "{over} case(s) over tolerance, {} with an absolute gap at finite-difference roundoff level\n",
            c.roundoff_limited()
        ));
    }
    out.write_all(s.as_bytes()).map_err(stdout_err)?;
    Ok(if c.passed() { EXIT_OK } else { EXIT_PARTIAL })
}

// ---------------------------------------------------------------------------
// experiment configuration

fn default_folds() -> usize {
    3
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_true() -> bool {
    true
}

fn default_min_df() -> usize {
    1
}

fn default_replacements() -> Vec<Replacement> {
    Replacement::ALL.to_vec()
}

/// Text preprocessing for the TF-IDF path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSettings {
    #[serde(default = "default_true")]
    pub lowercase: bool,
    #[serde(default = "default_true")]
    pub strip_special: bool,
    /// Stopword file, one word per line.
    #[serde(default)]
    pub stopwords: Option<PathBuf>,
    #[serde(default)]
    pub stemmer: Stemmer,
    #[serde(default = "default_replacements")]
    pub replacements: Vec<Replacement>,
    /// Terms in fewer documents are left out of the vocabulary.
    #[serde(default = "default_min_df")]
    pub min_df: usize,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_special: true,
            stopwords: None,
            stemmer: Stemmer::default(),
            replacements: default_replacements(),
            min_df: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    /// Column label in the reports; defaults to the file stem.
    #[serde(default)]
    pub name: Option<String>,
    pub path: PathBuf,
}

impl CorpusEntry {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map_or_else(|| self.path.display().to_string(), |s| s.to_string_lossy().into_owned())
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LearnerConfig {
    Classic(ClassifierSpec),
    Lstm(TrainConfig),
}

impl LearnerConfig {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerConfig::Classic(spec) => spec.params.name(),
            LearnerConfig::Lstm(_) => "LSTM",
        }
    }
}

/// One (method, learner) cell of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CellConfig {
    pub method: MethodConfig,
    pub learner: Option<LearnerConfig>,
    pub threshold: f64,
}

impl CellConfig {
    pub fn label(&self) -> String {
        format!(
            "{}+{}",
            self.method.method(),
            self.learner.as_ref().map_or("KNN", LearnerConfig::name)
        )
    }

    fn validate(&self) -> Result<()> {
        self.method.validate()?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        match (&self.method, &self.learner) {
            (MethodConfig::Mlknn { .. }, None) => Ok(()),
            (MethodConfig::Mlknn { .. }, Some(_)) => Err(Error::Config("MLkNN takes no learner".into())),
            (m, None) => Err(Error::Config(format!("{} needs a learner", m.method()))),
            (MethodConfig::Br, Some(LearnerConfig::Lstm(cfg))) => cfg.validate(),
            (m, Some(LearnerConfig::Lstm(_))) => Err(Error::Config(format!(
                "the LSTM learner is only available with BR, not {}",
                m.method()
            ))),
            (_, Some(LearnerConfig::Classic(spec))) => spec.validate(),
        }
    }

    pub fn is_lstm(&self) -> bool {
        matches!(self.learner, Some(LearnerConfig::Lstm(_)))
    }
}

/// A validated experiment grid. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub folds: usize,
    pub seed: u64,
    pub fold_mode: FoldMode,
    pub aggregation: Aggregation,
    pub embeddings: Option<PathBuf>,
    pub pipeline: PipelineSettings,
    pub corpora: Vec<CorpusEntry>,
    pub cells: Vec<CellConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output_dir: PathBuf,
    #[serde(default = "default_folds")]
    folds: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    fold_mode: FoldMode,
    #[serde(default)]
    aggregation: Aggregation,
    #[serde(default = "default_threshold")]
    threshold: f64,
    #[serde(default)]
    embeddings: Option<PathBuf>,
    #[serde(default)]
    pipeline: PipelineSettings,
    #[serde(default)]
    corpus: Vec<CorpusEntry>,
    #[serde(default)]
    cell: Vec<toml::Table>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parse and validate; paths are resolved against `base` and must exist.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        if raw.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", raw.folds)));
        }
        if !(raw.threshold > 0.0 && raw.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold must lie in (0, 1), got {}",
                raw.threshold
            )));
        }
        if raw.corpus.is_empty() {
            return Err(Error::Config("no [[corpus]] entries".into()));
        }
        if raw.cell.is_empty() {
            return Err(Error::Config("no [[cell]] entries".into()));
        }
        if raw.pipeline.min_df == 0 {
            return Err(Error::Config("pipeline.min_df must be at least 1".into()));
        }
        let resolve = |p: &Path| -> Result<PathBuf> {
            let full = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
            if !full.exists() {
                return Err(Error::Config(format!("{} does not exist", full.display())));
            }
            Ok(full)
        };
        let mut corpora = Vec::with_capacity(raw.corpus.len());
        let mut names = BTreeSet::new();
        for c in &raw.corpus {
            let entry = CorpusEntry {
                name: Some(c.display_name()),
                path: resolve(&c.path)?,
            };
            if !names.insert(entry.display_name()) {
                return Err(Error::Config(format!(
                    "corpus name {:?} used twice",
                    entry.display_name()
                )));
            }
            corpora.push(entry);
        }
        let mut pipeline = raw.pipeline.clone();
        pipeline.stopwords = pipeline.stopwords.as_deref().map(resolve).transpose()?;

        let cells = raw
            .cell
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let cell = parse_cell(t, raw.seed, raw.threshold)
                    .map_err(|e| Error::Config(format!("cell {}: {e}", i + 1)))?;
                cell.validate()
                    .map_err(|e| Error::Config(format!("cell {} ({}): {e}", i + 1, cell.label())))?;
                Ok(cell)
            })
            .collect::<Result<Vec<_>>>()?;

        let embeddings = match (&raw.embeddings, cells.iter().any(CellConfig::is_lstm)) {
            (Some(p), _) => Some(resolve(p)?),
            (None, true) => return Err(Error::Config("LSTM cells need an `embeddings` file".into())),
            (None, false) => None,
        };
        let output_dir = if raw.output_dir.is_absolute() {
            raw.output_dir.clone()
        } else {
            base.join(&raw.output_dir)
        };
        Ok(Self {
            output_dir,
            folds: raw.folds,
            seed: raw.seed,
            fold_mode: raw.fold_mode,
            aggregation: raw.aggregation,
            embeddings,
            pipeline,
            corpora,
            cells,
        })
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let stopwords = match &self.pipeline.stopwords {
            Some(p) => textprep::load_stopwords(p)?,
            None => Default::default(),
        };
        Ok(PipelineConfig {
            lowercase: self.pipeline.lowercase,
            strip_special: self.pipeline.strip_special,
            stopwords,
            stemmer: self.pipeline.stemmer,
            replacements: self.pipeline.replacements.clone(),
            ..PipelineConfig::default()
        })
    }
}

fn parse_cell(table: &toml::Table, seed: u64, threshold: f64) -> Result<CellConfig> {
    let mut rest = table.clone();
    let learner = rest.remove("learner");
    let threshold = match rest.remove("threshold") {
        None => threshold,
        Some(v) => v
            .as_float()
            .or_else(|| v.as_integer().map(|i| i as f64))
            .ok_or_else(|| Error::Config("threshold must be a number".into()))?,
    };
    let method: MethodConfig = toml::Value::Table(rest.clone())
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    // unit variants of a tagged enum accept stray keys, so check them here
    if let Ok(toml::Value::Table(known)) = toml::Value::try_from(&method) {
        if let Some(key) = rest.keys().find(|k| !known.contains_key(*k)) {
            return Err(Error::Config(format!(
                "unknown key `{key}` for method {}",
                method.method()
            )));
        }
    }
    let learner = learner.map(|v| parse_learner(v, seed)).transpose()?;
    Ok(CellConfig {
        method,
        learner,
        threshold,
    })
}

/// A learner is a kind name or a table with a `kind` key plus that learner's
/// parameters. `kind = "lstm"` accepts `preset = "g1" | "bfrc-pt"` and any
/// training field as an override.
fn parse_learner(value: toml::Value, seed: u64) -> Result<LearnerConfig> {
    let mut table = match value {
        toml::Value::String(kind) => toml::Table::from_iter([("kind".to_string(), toml::Value::String(kind))]),
        toml::Value::Table(t) => t,
        other => {
            return Err(Error::Config(format!(
                "learner must be a string or a table, got {}",
                other.type_str()
            )))
        }
    };
    let de_err = |e: toml::de::Error| Error::Config(format!("learner: {}", e.message()));
    let kind = table
        .get("kind")
        .and_then(toml::Value::as_str)
        .ok_or_else(|| Error::Config("learner needs a `kind`".into()))?
        .to_string();
    if kind == "lstm" {
        table.remove("kind");
        let base = match table.remove("preset").as_ref().map(|v| v.as_str()) {
            None => TrainConfig::g1(),
            Some(Some("g1")) => TrainConfig::g1(),
            Some(Some("bfrc-pt")) => TrainConfig::bfrc_pt(),
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown LSTM preset {other:?}; use \"g1\" or \"bfrc-pt\""
                )))
            }
        };
        let mut merged = match toml::Value::try_from(TrainConfig { seed, ..base }) {
            Ok(toml::Value::Table(t)) => t,
            _ => unreachable!("training config serialises to a table"),
        };
        merged.extend(table);
        let cfg: TrainConfig = toml::Value::Table(merged).try_into().map_err(de_err)?;
        return Ok(LearnerConfig::Lstm(cfg));
    }
    let learner_seed = match table.remove("seed") {
        None => seed,
        Some(v) => v
            .as_integer()
            .and_then(|i| u64::try_from(i).ok())
            .ok_or_else(|| Error::Config("learner seed must be a non-negative integer".into()))?,
    };
    let params: LearnerParams = toml::Value::Table(table).try_into().map_err(de_err)?;
    Ok(LearnerConfig::Classic(
        ClassifierSpec::new(params).with_seed(learner_seed),
    ))
}

// ---------------------------------------------------------------------------
// grid execution

/// One corpus with every representation the grid needs, plus its fold plan.
struct PreparedCorpus {
    name: String,
    plan: FoldPlan,
    tfidf: Option<MultiLabelDataset>,
    /// Sequence encodings keyed by maximum length.
    sequences: BTreeMap<usize, MultiLabelDataset>,
}

fn prepare(cfg: &ExperimentConfig, err: &mut dyn Write) -> Result<(Vec<PreparedCorpus>, Option<Arc<EmbeddingTable>>)> {
    let needs_tfidf = cfg.cells.iter().any(|c| !c.is_lstm());
    let lstm_lengths: BTreeSet<usize> = cfg
        .cells
        .iter()
        .filter_map(|c| match &c.learner {
            Some(LearnerConfig::Lstm(t)) => Some(t.max_sequence_length),
            _ => None,
        })
        .collect();
    let pipeline = cfg.pipeline_config()?;

    let mut loaded = Vec::with_capacity(cfg.corpora.len());
    for entry in &cfg.corpora {
        let ds = corpus::load_jsonl(&entry.path, None)?;
        let is_text = ds.instances().iter().all(|i| matches!(i.features, Features::Text(_)));
        let is_sparse = ds.instances().iter().all(|i| matches!(i.features, Features::Sparse(_)));
        if !is_text && !is_sparse {
            return Err(Error::Representation(format!(
                "{} mixes text and feature rows",
                entry.path.display()
            )));
        }
        if is_sparse && !lstm_lengths.is_empty() {
            return Err(Error::Representation(format!(
                "LSTM cells need token sequences but {} holds pre-vectorized features",
                entry.path.display()
            )));
        }
        for (i, cell) in cfg.cells.iter().enumerate() {
            cell.method.check_labels(ds.n_labels()).map_err(|e| {
                Error::Config(format!(
                    "cell {} ({}) on {}: {e}",
                    i + 1,
                    cell.label(),
                    entry.display_name()
                ))
            })?;
        }
        loaded.push((entry.display_name(), ds, is_text));
    }

    let table = match (&cfg.embeddings, lstm_lengths.is_empty()) {
        (Some(p), false) => Some(Arc::new(textprep::load_word2vec_text(p)?)),
        _ => None,
    };

    let mut prepared = Vec::with_capacity(loaded.len());
    for (name, ds, is_text) in loaded {
        let plan = make_folds_with(&ds, cfg.folds, cfg.seed, cfg.fold_mode)?;
        let tfidf = match (needs_tfidf, is_text) {
            (false, _) => None,
            (true, true) => Some(textprep::vectorize_tfidf(&ds, &pipeline, cfg.pipeline.min_df)?.1),
            (true, false) => Some(ds.clone()),
        };
        let mut sequences = BTreeMap::new();
        if let Some(table) = &table {
            for &len in &lstm_lengths {
                sequences.insert(
                    len,
                    textprep::encode_dataset(&ds, &PipelineConfig::raw_tokens(len), table)?,
                );
            }
        }
        let _ = writeln!(
            err,
            "{name}: {} instances, {} labels, {} TF-IDF features",
            ds.len(),
            ds.n_labels(),
            tfidf.as_ref().map_or(0, MultiLabelDataset::feature_dim)
        );
        prepared.push(PreparedCorpus {
            name,
            plan,
            tfidf,
            sequences,
        });
    }
    Ok((prepared, table))
}

fn run_cell(cell: &CellConfig, corpus: &PreparedCorpus, table: Option<&Arc<EmbeddingTable>>) -> Result<CellOutcome> {
    let (learner, ds) = match &cell.learner {
        None => (None, corpus.tfidf.as_ref()),
        Some(LearnerConfig::Classic(spec)) => (Some(Learner::Classic(spec.clone())), corpus.tfidf.as_ref()),
        Some(LearnerConfig::Lstm(t)) => (
            Some(Learner::Lstm {
                config: t.clone(),
                table: table.cloned().expect("embeddings loaded for LSTM cells"),
            }),
            corpus.sequences.get(&t.max_sequence_length),
        ),
    };
    let ds = ds.expect("representation prepared for every cell");
    let fitter = ModelFitter::new(cell.method.clone(), learner)?.with_threshold(cell.threshold)?;
    Ok(CellOutcome::Done(
        cross_validate(ds, &fitter, &corpus.plan)?.with_corpus(&corpus.name),
    ))
}

/// Run every cell on every corpus, isolating failures per cell. Outcomes are
/// ordered corpus-major, then in config order.
pub fn run_grid(cfg: &ExperimentConfig, err: &mut dyn Write) -> Result<Vec<CellOutcome>> {
    let (corpora, table) = prepare(cfg, err)?;
    let jobs: Vec<(&PreparedCorpus, &CellConfig)> = corpora
        .iter()
        .flat_map(|c| cfg.cells.iter().map(move |cell| (c, cell)))
        .collect();
    let outcomes: Vec<CellOutcome> = jobs
        .par_iter()
        .map(|(corpus, cell)| {
            run_cell(cell, corpus, table.as_ref()).unwrap_or_else(|e| CellOutcome::Failed {
                corpus: corpus.name.clone(),
                method: cell.method.method().name().to_string(),
                learner: cell.learner.as_ref().map_or("KNN", LearnerConfig::name).to_string(),
                error: e.to_string(),
            })
        })
        .collect();
    Ok(outcomes)
}

/// Write `results.csv` and `results.md` into the output directory.
pub fn write_reports(cfg: &ExperimentConfig, outcomes: &[CellOutcome]) -> Result<String> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("results.csv");
    let file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    write_csv(BufWriter::new(file), outcomes, cfg.aggregation)?;
    let md = markdown_table(outcomes, cfg.aggregation);
    let md_path = dir.join("results.md");
    fs::write(&md_path, &md).map_err(|e| Error::io(&md_path, e))?;
    Ok(md)
}

pub fn cmd_run(config: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let cfg = ExperimentConfig::load(config)?;
    let outcomes = run_grid(&cfg, err)?;
    let md = write_reports(&cfg, &outcomes)?;
    out.write_all(md.as_bytes()).map_err(stdout_err)?;
    let mut failed = 0;
    for o in &outcomes {
        if let CellOutcome::Failed {
            corpus,
            method,
            learner,
            error,
        } = o
        {
            failed += 1;
            let _ = writeln!(err, "cell {method}+{learner} on {corpus} failed: {error}");
        }
    }
    let _ = writeln!(
        err,
        "{} of {} cells completed; results in {}",
        outcomes.len() - failed,
        outcomes.len(),
        cfg.output_dir.display()
    );
    Ok(if failed == 0 { EXIT_OK } else { EXIT_PARTIAL })
}
