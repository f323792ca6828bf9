//! Multi-label methods behind one fit / score / predict contract.
//!
//! Problem-transformation methods (BR, CC, LP, RAkEL, HOMER, CLR) reduce the
//! task to single-label problems solved by a [`ClassifierSpec`]; MLkNN adapts
//! nearest neighbours directly. Scores are per-label values in `[0, 1]`;
//! predictions apply each method's decision rule.

mod br;
mod cc;
mod clr;
mod homer;
mod lp;
mod mlknn;

use std::borrow::Cow;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Features, LabelSet, LabelSpace, MultiLabelDataset};
use crate::error::{Error, Result};
use crate::learners::{self, ClassifierSpec, Distance, ProbabilisticClassifier, SingleLabelDataset};
use crate::lstm::TrainConfig;
use crate::sparse::SparseVec;
use crate::textprep::EmbeddingTable;

pub use br::{BinaryRelevance, LstmRelevance};
pub use cc::{ChainOrder, ClassifierChain};
pub use clr::CalibratedLabelRanking;
pub use homer::{Homer, HomerNode};
pub use lp::{LabelPowerset, LabelsetCodebook, Rakel};
pub use mlknn::Mlknn;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "BR")]
    Br,
    #[serde(rename = "CC")]
    Cc,
    #[serde(rename = "LP")]
    Lp,
    #[serde(rename = "RAkEL")]
    Rakel,
    #[serde(rename = "HOMER")]
    Homer,
    #[serde(rename = "CLR")]
    Clr,
    #[serde(rename = "MLkNN")]
    Mlknn,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Br,
        Method::Cc,
        Method::Clr,
        Method::Homer,
        Method::Lp,
        Method::Rakel,
        Method::Mlknn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Br => "BR",
            Method::Cc => "CC",
            Method::Lp => "LP",
            Method::Rakel => "RAkEL",
            Method::Homer => "HOMER",
            Method::Clr => "CLR",
            Method::Mlknn => "MLkNN",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A method with its own hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", deny_unknown_fields)]
pub enum MethodConfig {
    #[serde(rename = "BR")]
    Br,
    #[serde(rename = "CC")]
    Cc {
        /// `None` chains labels in index order.
        #[serde(default)]
        order_seed: Option<u64>,
    },
    #[serde(rename = "LP")]
    Lp,
    #[serde(rename = "RAkEL")]
    Rakel {
        m: usize,
        k: usize,
        #[serde(default)]
        seed: u64,
    },
    #[serde(rename = "HOMER")]
    Homer {
        #[serde(default = "default_branching")]
        branching: usize,
        #[serde(default)]
        seed: u64,
    },
    #[serde(rename = "CLR")]
    Clr,
    #[serde(rename = "MLkNN")]
    Mlknn {
        #[serde(default = "default_mlknn_k")]
        k: usize,
        #[serde(default = "default_smoothing")]
        s: f64,
    },
}

fn default_branching() -> usize {
    3
}

fn default_mlknn_k() -> usize {
    10
}

fn default_smoothing() -> f64 {
    1.0
}

impl MethodConfig {
    pub fn method(&self) -> Method {
        match self {
            MethodConfig::Br => Method::Br,
            MethodConfig::Cc { .. } => Method::Cc,
            MethodConfig::Lp => Method::Lp,
            MethodConfig::Rakel { .. } => Method::Rakel,
            MethodConfig::Homer { .. } => Method::Homer,
            MethodConfig::Clr => Method::Clr,
            MethodConfig::Mlknn { .. } => Method::Mlknn,
        }
    }

    /// Checks that need no data.
    pub fn validate(&self) -> Result<()> {
        match *self {
            MethodConfig::Rakel { m, k, .. } if m == 0 || k == 0 => {
                Err(Error::invalid("RAkEL needs m >= 1 and k >= 1"))
            }
            MethodConfig::Homer { branching, .. } if branching < 2 => {
                Err(Error::invalid("HOMER branching factor must be at least 2"))
            }
            MethodConfig::Mlknn { k, s } if k == 0 || !(s > 0.0 && s.is_finite()) => {
                Err(Error::invalid("MLkNN needs k >= 1 and positive smoothing"))
            }
            _ => Ok(()),
        }
    }

    /// Checks that need the size of the label space.
    pub fn check_labels(&self, n_labels: usize) -> Result<()> {
        self.validate()?;
        match *self {
            MethodConfig::Rakel { k, .. } if k > n_labels => Err(Error::invalid(format!(
                "RAkEL subsets of {k} labels exceed the {n_labels} available"
            ))),
            MethodConfig::Rakel { m, k, .. } if (m as u128) > lp::binomial(n_labels, k) => {
                Err(Error::invalid(format!(
                    "RAkEL asks for {m} distinct {k}-label subsets but only {} exist over {n_labels} labels",
                    lp::binomial(n_labels, k)
                )))
            }
            _ => Ok(()),
        }
    }

    /// Fit on a TF-IDF (sparse) dataset. MLkNN ignores `spec`.
    pub fn fit(&self, ds: &MultiLabelDataset, spec: &ClassifierSpec) -> Result<MultiLabelModel> {
        match *self {
            MethodConfig::Br => fit_br(ds, spec),
            MethodConfig::Cc { order_seed } => {
                let order = match order_seed {
                    None => ChainOrder::identity(ds.n_labels()),
                    Some(seed) => ChainOrder::random(ds.n_labels(), seed),
                };
                fit_cc(ds, spec, &order)
            }
            MethodConfig::Lp => fit_lp(ds, spec),
            MethodConfig::Rakel { m, k, seed } => fit_rakel(ds, spec, m, k, seed),
            MethodConfig::Homer { branching, seed } => fit_homer(ds, spec, branching, seed),
            MethodConfig::Clr => fit_clr(ds, spec),
            MethodConfig::Mlknn { k, s } => fit_mlknn(ds, k, s),
        }
    }
}

/// Per-method fitted state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MethodState {
    Br(BinaryRelevance),
    BrLstm(LstmRelevance),
    Cc(ClassifierChain),
    Lp(LabelPowerset),
    Rakel(Rakel),
    Homer(Homer),
    Clr(CalibratedLabelRanking),
    Mlknn(Mlknn),
}

/// A fitted multi-label model. Immutable; share freely across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLabelModel {
    space: LabelSpace,
    threshold: f64,
    state: MethodState,
}

impl MultiLabelModel {
    fn new(space: LabelSpace, state: MethodState) -> Self {
        Self {
            space,
            threshold: DEFAULT_THRESHOLD,
            state,
        }
    }

    pub fn method(&self) -> Method {
        match self.state {
            MethodState::Br(_) | MethodState::BrLstm(_) => Method::Br,
            MethodState::Cc(_) => Method::Cc,
            MethodState::Lp(_) => Method::Lp,
            MethodState::Rakel(_) => Method::Rakel,
            MethodState::Homer(_) => Method::Homer,
            MethodState::Clr(_) => Method::Clr,
            MethodState::Mlknn(_) => Method::Mlknn,
        }
    }

    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn state(&self) -> &MethodState {
        &self.state
    }

    /// Decision threshold for score-thresholded methods, in `(0, 1)`.
    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::invalid(format!("threshold must lie in (0, 1), got {threshold}")));
        }
        self.threshold = threshold;
        Ok(self)
    }

    /// Per-label scores in `[0, 1]`, one per label.
    pub fn score(&self, x: &Features) -> Result<Vec<f64>> {
        Ok(match &self.state {
            MethodState::Br(m) => m.scores(x.as_sparse()?),
            MethodState::BrLstm(m) => m.scores(x.as_sequence()?)?,
            MethodState::Cc(m) => m.scores(x.as_sparse()?, self.threshold),
            MethodState::Lp(m) => m.scores(x.as_sparse()?),
            MethodState::Rakel(m) => m.scores(x.as_sparse()?),
            MethodState::Homer(m) => m.scores(x.as_sparse()?, self.threshold),
            MethodState::Clr(m) => m.scores(x.as_sparse()?),
            MethodState::Mlknn(m) => m.scores(x.as_sparse()?),
        })
    }

    pub fn predict(&self, x: &Features) -> Result<LabelSet> {
        let width = self.space.len();
        Ok(match &self.state {
            MethodState::Lp(m) => m.predict(x.as_sparse()?),
            MethodState::Clr(m) => m.predict(x.as_sparse()?),
            MethodState::Mlknn(m) => m.predict(x.as_sparse()?),
            _ => {
                let s = self.score(x)?;
                LabelSet::from_indices(width, (0..width).filter(|&j| s[j] >= self.threshold))
            }
        })
    }

    /// Predictions for every instance of `ds`, in order.
    pub fn predict_dataset(&self, ds: &MultiLabelDataset) -> Result<Vec<LabelSet>> {
        if ds.space() != &self.space {
            return Err(Error::LabelSpace("dataset and model label spaces differ".into()));
        }
        ds.instances()
            .par_iter()
            .map(|inst| self.predict(&inst.features))
            .collect()
    }

    /// Serialize into the versioned model container.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = MODEL_MAGIC.to_vec();
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        serde_json::to_writer(&mut out, self).map_err(|e| Error::Format(e.to_string()))?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = MODEL_MAGIC.len() + 4;
        if bytes.len() < header || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
            return Err(Error::Format("not a model container".into()));
        }
        let version = u32::from_le_bytes(bytes[MODEL_MAGIC.len()..header].try_into().expect("4 bytes"));
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model container version {version}")));
        }
        serde_json::from_slice(&bytes[header..]).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

const MODEL_MAGIC: &[u8; 8] = b"MLRMODEL";
const MODEL_VERSION: u32 = 1;

/// Sparse features and label sets of a training dataset.
pub(crate) struct TrainView<'a> {
    pub x: Vec<&'a SparseVec>,
    pub y: Vec<LabelSet>,
    pub dim: usize,
    pub width: usize,
}

impl<'a> TrainView<'a> {
    pub fn of(ds: &'a MultiLabelDataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let x = ds
            .instances()
            .iter()
            .map(|inst| inst.features.as_sparse())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            x,
            y: ds.label_sets(),
            dim: ds.feature_dim(),
            width: ds.n_labels(),
        })
    }
}

/// Binary classifier on `x` with targets `y`; empty data gives the constant
/// negative classifier.
pub(crate) fn fit_binary(
    spec: &ClassifierSpec,
    x: Vec<Cow<'_, SparseVec>>,
    y: Vec<bool>,
    dim: usize,
) -> Result<ProbabilisticClassifier> {
    if x.is_empty() {
        return Ok(ProbabilisticClassifier::constant(0, 2));
    }
    let y = y.into_iter().map(usize::from).collect();
    learners::fit(spec, &SingleLabelDataset::new(x, y, 2, dim)?)
}

pub(crate) fn positive(m: &ProbabilisticClassifier, x: &SparseVec) -> f64 {
    m.predict_proba(x)[1]
}

/// One independent binary classifier per label; label `j` uses slot `j` of `spec`.
pub fn fit_br(ds: &MultiLabelDataset, spec: &ClassifierSpec) -> Result<MultiLabelModel> {
    spec.validate()?;
    let view = TrainView::of(ds)?;
    let targets = (0..view.width)
        .map(|j| view.y.iter().map(|y| y.contains(j)).collect())
        .collect();
    let state = BinaryRelevance::fit(&view.x, targets, view.dim, spec)?;
    Ok(MultiLabelModel::new(ds.space().clone(), MethodState::Br(state)))
}

/// BR with one LSTM per label over token sequences. Label `j` trains with
/// the seed derived from `cfg.seed` and `j`.
pub fn fit_br_lstm(ds: &MultiLabelDataset, cfg: &TrainConfig, table: Arc<EmbeddingTable>) -> Result<MultiLabelModel> {
    let state = LstmRelevance::fit(ds, cfg, table)?;
    Ok(MultiLabelModel::new(ds.space().clone(), MethodState::BrLstm(state)))
}

/// Classifier chain along `order`; position `p` sees the features plus the
/// `p` labels earlier in the chain.
pub fn fit_cc(ds: &MultiLabelDataset, spec: &ClassifierSpec, order: &ChainOrder) -> Result<MultiLabelModel> {
    spec.validate()?;
    if order.len() != ds.n_labels() {
        return Err(Error::invalid(format!(
            "chain order covers {} labels, the dataset has {}",
            order.len(),
            ds.n_labels()
        )));
    }
    let view = TrainView::of(ds)?;
    let state = ClassifierChain::fit(&view, spec, order.clone())?;
    Ok(MultiLabelModel::new(ds.space().clone(), MethodState::Cc(state)))
}

/// Label powerset: one multiclass classifier over the label combinations
/// seen in training.
pub fn fit_lp(ds: &MultiLabelDataset, spec: &ClassifierSpec) -> Result<MultiLabelModel> {
    spec.validate()?;
    let view = TrainView::of(ds)?;
    let state = LabelPowerset::fit(&view.x, &view.y, view.dim, &spec.for_slot(0))?;
    Ok(MultiLabelModel::new(ds.space().clone(), MethodState::Lp(state)))
}

/// `m` distinct random `k`-label subsets, one LP model each; label scores are
/// the share of covering models voting for the label.
pub fn fit_rakel(
    ds: &MultiLabelDataset,
    spec: &ClassifierSpec,
    m: usize,
    k: usize,
    seed: u64,
) -> Result<MultiLabelModel> {
    spec.validate()?;
    let view = TrainView::of(ds)?;
    let state = Rakel::fit(&view, spec, m, k, seed)?;
    Ok(MultiLabelModel::new(ds.space().clone(), MethodState::Rakel(state)))
}

/// Hierarchy of BR models over balanced label clusters.
pub fn fit_homer(
    ds: &MultiLabelDataset,
    spec: &ClassifierSpec,
    branching: usize,
    seed: u64,
) -> Result<MultiLabelModel> {
    spec.validate()?;
    if branching < 2 {
        return Err(Error::invalid("HOMER branching factor must be at least 2"));
    }
    let view = TrainView::of(ds)?;
    let state = Homer::fit(&view, spec, branching, seed)?;
    Ok(MultiLabelModel::new(ds.space().clone(), MethodState::Homer(state)))
}

/// Pairwise label comparisons plus a virtual calibration label.
pub fn fit_clr(ds: &MultiLabelDataset, spec: &ClassifierSpec) -> Result<MultiLabelModel> {
    spec.validate()?;
    let view = TrainView::of(ds)?;
    let state = CalibratedLabelRanking::fit(&view, spec)?;
    Ok(MultiLabelModel::new(ds.space().clone(), MethodState::Clr(state)))
}

/// MLkNN with Euclidean distance.
pub fn fit_mlknn(ds: &MultiLabelDataset, k: usize, s: f64) -> Result<MultiLabelModel> {
    fit_mlknn_with(ds, k, s, Distance::Euclidean)
}

pub fn fit_mlknn_with(ds: &MultiLabelDataset, k: usize, s: f64, metric: Distance) -> Result<MultiLabelModel> {
    let view = TrainView::of(ds)?;
    let state = Mlknn::fit(&view, k, s, metric)?;
    Ok(MultiLabelModel::new(ds.space().clone(), MethodState::Mlknn(state)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    fn all_models(ds: &MultiLabelDataset) -> Vec<MultiLabelModel> {
        let spec = ClassifierSpec::naive_bayes();
        vec![
            fit_br(ds, &spec).unwrap(),
            fit_cc(ds, &spec, &ChainOrder::identity(ds.n_labels())).unwrap(),
            fit_lp(ds, &spec).unwrap(),
            fit_rakel(ds, &spec, 3, 2, 1).unwrap(),
            fit_homer(ds, &spec, 2, 1).unwrap(),
            fit_clr(ds, &spec).unwrap(),
            fit_mlknn(ds, 5, 1.0).unwrap(),
        ]
    }

    #[test]
    fn uniform_contract() {
        let ds = synthetic::noisy_dataset(60, 4, 6, 0.2, 3);
        for model in all_models(&ds) {
            for inst in ds.instances() {
                let s = model.score(&inst.features).unwrap();
                assert_eq!(s.len(), 4, "{}", model.method());
                assert!(s.iter().all(|v| (0.0..=1.0).contains(v)), "{}: {s:?}", model.method());
                let p = model.predict(&inst.features).unwrap();
                assert_eq!(p.width(), 4);
                assert_eq!(p, model.predict(&inst.features).unwrap());
            }
        }
    }

    #[test]
    fn threshold_is_inclusive() {
        let ds = synthetic::indicator_dataset(20, 3, 0, 0);
        let model = fit_br(&ds, &ClassifierSpec::naive_bayes()).unwrap();
        let x = &ds.instances()[0].features;
        let s = model.score(x).unwrap();
        let t = s[0].clamp(1e-9, 1.0 - 1e-9);
        let at = model.clone().with_threshold(t).unwrap().predict(x).unwrap();
        assert_eq!(at.contains(0), s[0] >= t);
        assert!(model.clone().with_threshold(0.0).is_err());
        assert!(model.with_threshold(1.0).is_err());
    }

    #[test]
    fn representation_mismatch_is_an_error() {
        let ds = synthetic::indicator_dataset(20, 3, 1, 0);
        let model = fit_br(&ds, &ClassifierSpec::naive_bayes()).unwrap();
        let seq = Features::Sequence(crate::corpus::TokenSequence { ids: vec![2], len: 1 });
        assert!(matches!(model.score(&seq), Err(Error::Representation(_))));
        let text = synthetic::separable_corpus_sized(5, 0);
        assert!(fit_br(&text, &ClassifierSpec::naive_bayes()).is_err());
    }

    #[test]
    fn container_round_trip() {
        let ds = synthetic::noisy_dataset(40, 3, 5, 0.1, 8);
        for model in all_models(&ds) {
            let back = MultiLabelModel::from_bytes(&model.to_bytes().unwrap()).unwrap();
            for inst in ds.instances() {
                assert_eq!(
                    back.score(&inst.features).unwrap(),
                    model.score(&inst.features).unwrap()
                );
            }
        }
        assert!(MultiLabelModel::from_bytes(b"MLRMODEL\x09\0\0\0{}").is_err());
        assert!(MultiLabelModel::from_bytes(b"junk").is_err());
    }

    #[test]
    fn method_config_dispatch() {
        let ds = synthetic::indicator_dataset(30, 3, 2, 1);
        let cfg: MethodConfig = serde_json::from_str(r#"{"method":"RAkEL","m":2,"k":2}"#).unwrap();
        assert_eq!(cfg.method(), Method::Rakel);
        let model = cfg.fit(&ds, &ClassifierSpec::naive_bayes()).unwrap();
        assert_eq!(model.method(), Method::Rakel);
        let bad = MethodConfig::Homer { branching: 1, seed: 0 };
        assert!(bad.validate().is_err());
    }
}
