//! Single-label probabilistic base learners.
//!
//! Every learner is fitted from a [`SingleLabelDataset`] and answers
//! [`ProbabilisticClassifier::predict_proba`] with a length-`C` distribution.
//! Transformation methods only ever talk to this contract.

mod forest;
mod knn;
mod linear;
mod naive_bayes;

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseVec;

pub use forest::{ForestParams, MaxFeatures, RandomForest};
pub use knn::{knn_neighbors, knn_neighbors_excluding, Distance, KnnClassifier, KnnParams};
pub use linear::{LinearMargin, LinearParams};
pub use naive_bayes::{NaiveBayes, NaiveBayesParams};

/// Feature vectors with one class id each.
#[derive(Debug, Clone)]
pub struct SingleLabelDataset<'a> {
    pub x: Vec<Cow<'a, SparseVec>>,
    pub y: Vec<usize>,
    pub n_classes: usize,
    pub dim: usize,
}

impl<'a> SingleLabelDataset<'a> {
    pub fn new(x: Vec<Cow<'a, SparseVec>>, y: Vec<usize>, n_classes: usize, dim: usize) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::invalid(format!(
                "{} feature vectors but {} class ids",
                x.len(),
                y.len()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
            return Err(Error::invalid(format!("class id {bad} outside 0..{n_classes}")));
        }
        Ok(Self { x, y, n_classes, dim })
    }

    pub fn borrowed(x: &'a [SparseVec], y: Vec<usize>, n_classes: usize, dim: usize) -> Result<Self> {
        Self::new(x.iter().map(Cow::Borrowed).collect(), y, n_classes, dim)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &c in &self.y {
            counts[c] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LearnerParams {
    NaiveBayes(NaiveBayesParams),
    RandomForest(ForestParams),
    LinearMargin(LinearParams),
    Knn(KnnParams),
}

impl LearnerParams {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerParams::NaiveBayes(_) => "NB",
            LearnerParams::RandomForest(_) => "RF",
            LearnerParams::LinearMargin(_) => "SVM",
            LearnerParams::Knn(_) => "KNN",
        }
    }
}

/// Which learner to fit, with its hyperparameters and the seed of all its randomness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub params: LearnerParams,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn naive_bayes() -> Self {
        Self::new(LearnerParams::NaiveBayes(NaiveBayesParams::default()))
    }

    pub fn random_forest() -> Self {
        Self::new(LearnerParams::RandomForest(ForestParams::default()))
    }

    pub fn linear_margin() -> Self {
        Self::new(LearnerParams::LinearMargin(LinearParams::default()))
    }

    pub fn knn(k: usize) -> Self {
        Self::new(LearnerParams::Knn(KnnParams {
            k,
            ..KnnParams::default()
        }))
    }

    pub fn new(params: LearnerParams) -> Self {
        Self { params, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Same learner, seed of sub-stream `slot`. Member classifiers of a
    /// transformation method use their slot index so that methods which
    /// degenerate into one another train identical members.
    pub fn for_slot(&self, slot: u64) -> Self {
        Self {
            params: self.params.clone(),
            seed: crate::rng::derive(self.seed, slot),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.params {
            LearnerParams::NaiveBayes(p) => p.validate(),
            LearnerParams::RandomForest(p) => p.validate(),
            LearnerParams::LinearMargin(p) => p.validate(),
            LearnerParams::Knn(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Model {
    Constant(usize),
    NaiveBayes(NaiveBayes),
    RandomForest(RandomForest),
    LinearMargin(LinearMargin),
    Knn(KnnClassifier),
}

/// A fitted single-label model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticClassifier {
    n_classes: usize,
    model: Model,
}

impl ProbabilisticClassifier {
    /// Always predicts `class` with probability 1.
    pub fn constant(class: usize, n_classes: usize) -> Self {
        assert!(class < n_classes);
        Self {
            n_classes,
            model: Model::Constant(class),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn is_constant(&self) -> Option<usize> {
        match self.model {
            Model::Constant(c) => Some(c),
            _ => None,
        }
    }

    pub fn predict_proba(&self, x: &SparseVec) -> Vec<f64> {
        match &self.model {
            Model::Constant(c) => {
                let mut p = vec![0.0; self.n_classes];
                p[*c] = 1.0;
                p
            }
            Model::NaiveBayes(m) => m.predict_proba(x),
            Model::RandomForest(m) => m.predict_proba(x),
            Model::LinearMargin(m) => m.predict_proba(x),
            Model::Knn(m) => m.predict_proba(x),
        }
    }

    /// Most probable class; ties go to the lowest id.
    pub fn predict(&self, x: &SparseVec) -> usize {
        argmax(&self.predict_proba(x))
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Fit `spec` on `data`. Data with a single represented class yields the
/// constant classifier for that class.
pub fn fit(spec: &ClassifierSpec, data: &SingleLabelDataset<'_>) -> Result<ProbabilisticClassifier> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot fit a classifier on empty data"));
    }
    if data.n_classes == 0 {
        return Err(Error::invalid("class count must be positive"));
    }
    let counts = data.class_counts();
    let represented: Vec<usize> = (0..data.n_classes).filter(|&c| counts[c] > 0).collect();
    if represented.len() == 1 {
        return Ok(ProbabilisticClassifier::constant(represented[0], data.n_classes));
    }
    let model = match &spec.params {
        LearnerParams::NaiveBayes(p) => Model::NaiveBayes(NaiveBayes::fit(p, data)),
        LearnerParams::RandomForest(p) => Model::RandomForest(RandomForest::fit(p, data, spec.seed)),
        LearnerParams::LinearMargin(p) => Model::LinearMargin(LinearMargin::fit(p, data, spec.seed)),
        LearnerParams::Knn(p) => Model::Knn(KnnClassifier::fit(p, data)),
    };
    Ok(ProbabilisticClassifier {
        n_classes: data.n_classes,
        model,
    })
}

/// Normalise log-scores into probabilities; `-inf` entries get probability 0.
pub(crate) fn softmax_logs(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![1.0 / logs.len() as f64; logs.len()];
    }
    let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
