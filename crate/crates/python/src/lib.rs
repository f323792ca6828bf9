//! Python bindings: corpus loading and statistics, tokenization, model
//! fitting and prediction, cross-validation, metrics, the paired t-test and
//! the LSTM gradient check.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mlreact::corpus::{self, LabelSet, MultiLabelDataset};
use mlreact::evaluation::{self, Aggregation, FoldMode, Learner, ModelFitter};
use mlreact::learners::{ClassifierSpec, LearnerParams};
use mlreact::textprep::{self, PipelineConfig, Stemmer};
use mlreact::transforms::{MethodConfig, MultiLabelModel};
use mlreact::{lstm, synthetic, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Diverged { .. } | Error::NonFinite(_) | Error::Fold { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Serialise a Python object with the `json` module and decode it as `T`.
fn from_python<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let json: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&json).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// A method is a name (`"BR"`) or a dict with a `method` key and its parameters.
fn method_config(obj: &Bound<'_, PyAny>) -> PyResult<MethodConfig> {
    match obj.extract::<String>() {
        Ok(name) => serde_json::from_value(serde_json::json!({ "method": name }))
            .map_err(|e| PyValueError::new_err(e.to_string())),
        Err(_) => from_python(obj),
    }
}

/// A learner is a kind (`"naive-bayes"`) or a dict with `kind`, its parameters
/// and an optional `seed`.
fn learner_spec(obj: &Bound<'_, PyAny>, seed: u64) -> PyResult<ClassifierSpec> {
    let mut value: serde_json::Value = match obj.extract::<String>() {
        Ok(kind) => serde_json::json!({ "kind": kind }),
        Err(_) => from_python(obj)?,
    };
    let seed = match value.as_object_mut().and_then(|m| m.remove("seed")) {
        None => seed,
        Some(v) => v
            .as_u64()
            .ok_or_else(|| PyValueError::new_err("learner seed must be a non-negative integer"))?,
    };
    let params: LearnerParams = serde_json::from_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let spec = ClassifierSpec::new(params).with_seed(seed);
    spec.validate().map_err(to_py)?;
    Ok(spec)
}

fn stemmer(name: &str) -> PyResult<Stemmer> {
    match name {
        "identity" => Ok(Stemmer::Identity),
        "portuguese" => Ok(Stemmer::Portuguese),
        other => Err(PyValueError::new_err(format!(
            "unknown stemmer {other:?}; use \"identity\" or \"portuguese\""
        ))),
    }
}

fn label_sets(sets: Vec<Vec<usize>>, n_labels: usize) -> PyResult<Vec<LabelSet>> {
    sets.into_iter()
        .map(|s| {
            if let Some(&j) = s.iter().find(|&&j| j >= n_labels) {
                return Err(PyValueError::new_err(format!("label index {j} outside 0..{n_labels}")));
            }
            Ok(LabelSet::from_indices(n_labels, s))
        })
        .collect()
}

/// A multi-label dataset of text or sparse feature vectors.
#[pyclass(module = "mlreact_py", frozen)]
struct Dataset {
    inner: MultiLabelDataset,
}

#[pymethods]
impl Dataset {
    /// Load a JSONL corpus.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: corpus::load_jsonl(path, None).map_err(to_py)?,
        })
    }

    /// The synthetic separable corpus (600 documents, 4 labels).
    #[staticmethod]
    #[pyo3(signature = (seed = 0))]
    fn separable(seed: u64) -> Self {
        Self {
            inner: synthetic::separable_corpus(seed),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({} instances, {} labels, {} features)",
            self.inner.len(),
            self.inner.n_labels(),
            self.inner.feature_dim()
        )
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.space().names().to_vec()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    /// Label indices of every instance.
    fn label_sets(&self) -> Vec<Vec<usize>> {
        self.inner.label_sets().iter().map(|s| s.iter().collect()).collect()
    }

    /// Instance count, label count, cardinality, density and per-label counts.
    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        d.set_item("instances", self.inner.len())?;
        d.set_item("labels", self.inner.n_labels())?;
        d.set_item("cardinality", corpus::label_cardinality(&self.inner).map_err(to_py)?)?;
        d.set_item("density", corpus::label_density(&self.inner).map_err(to_py)?)?;
        d.set_item("counts", corpus::class_distribution(&self.inner))?;
        Ok(d)
    }

    /// Replace text with TF-IDF vectors fitted on this corpus.
    #[pyo3(signature = (min_df = 1, stemmer = "identity", stopwords = None))]
    fn vectorize(&self, min_df: usize, stemmer: &str, stopwords: Option<Vec<String>>) -> PyResult<Self> {
        let cfg = PipelineConfig {
            stemmer: self::stemmer(stemmer)?,
            ..PipelineConfig::default()
        }
        .with_stopwords(stopwords.unwrap_or_default());
        let (_, inner) = textprep::vectorize_tfidf(&self.inner, &cfg, min_df).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn subset(&self, indices: Vec<usize>) -> PyResult<Self> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.inner.len()) {
            return Err(PyValueError::new_err(format!("index {i} out of range")));
        }
        Ok(Self {
            inner: self.inner.subset(&indices),
        })
    }

    /// Fold index of every instance.
    #[pyo3(signature = (n_folds = 3, seed = 0, stratified = false))]
    fn folds(&self, n_folds: usize, seed: u64, stratified: bool) -> PyResult<Vec<usize>> {
        let mode = if stratified {
            FoldMode::Stratified
        } else {
            FoldMode::Random
        };
        let plan = evaluation::make_folds_with(&self.inner, n_folds, seed, mode).map_err(to_py)?;
        Ok(plan.assignment().to_vec())
    }
}

/// A fitted multi-label model.
#[pyclass(module = "mlreact_py", frozen)]
struct Model {
    inner: MultiLabelModel,
}

#[pymethods]
impl Model {
    /// Fit `method` with base `learner` (omit for MLkNN) on a vectorized dataset.
    #[staticmethod]
    #[pyo3(signature = (dataset, method, learner = None, threshold = 0.5, seed = 0))]
    fn fit(
        dataset: &Dataset,
        method: &Bound<'_, PyAny>,
        learner: Option<&Bound<'_, PyAny>>,
        threshold: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let fitter = fitter(method, learner, seed)?
            .with_threshold(threshold)
            .map_err(to_py)?;
        Ok(Self {
            inner: fitter.fit_model(&dataset.inner).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: MultiLabelModel::load(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method().name()
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold()
    }

    /// Predicted label names per instance.
    fn predict(&self, dataset: &Dataset) -> PyResult<Vec<Vec<String>>> {
        let sets = self.inner.predict_dataset(&dataset.inner).map_err(to_py)?;
        let space = self.inner.space();
        Ok(sets
            .into_iter()
            .map(|s| space.decode(s).into_iter().map(str::to_string).collect())
            .collect())
    }

    /// Per-label scores in `[0, 1]` per instance.
    fn scores(&self, dataset: &Dataset) -> PyResult<Vec<Vec<f64>>> {
        dataset
            .inner
            .instances()
            .iter()
            .map(|i| self.inner.score(&i.features).map_err(to_py))
            .collect()
    }
}

fn fitter(method: &Bound<'_, PyAny>, learner: Option<&Bound<'_, PyAny>>, seed: u64) -> PyResult<ModelFitter> {
    let method = method_config(method)?;
    let learner = learner
        .map(|l| learner_spec(l, seed))
        .transpose()?
        .map(Learner::Classic);
    ModelFitter::new(method, learner).map_err(to_py)
}

/// Lowercase, replace URLs/emails/numbers/currency/percentages, strip
/// punctuation, drop stopwords and stem.
#[pyfunction]
#[pyo3(signature = (text, stemmer = "identity", stopwords = None, lowercase = true, strip_special = true))]
fn tokenize(
    text: &str,
    stemmer: &str,
    stopwords: Option<Vec<String>>,
    lowercase: bool,
    strip_special: bool,
) -> PyResult<Vec<String>> {
    let cfg = PipelineConfig {
        lowercase,
        strip_special,
        stemmer: self::stemmer(stemmer)?,
        ..PipelineConfig::default()
    }
    .with_stopwords(stopwords.unwrap_or_default());
    Ok(textprep::tokenize_and_normalize(text, &cfg))
}

/// k-fold cross-validation of one (method, learner) cell.
#[pyfunction]
#[pyo3(signature = (dataset, method, learner = None, folds = 3, seed = 0, stratified = false))]
fn cross_validate<'py>(
    py: Python<'py>,
    dataset: &Dataset,
    method: &Bound<'py, PyAny>,
    learner: Option<&Bound<'py, PyAny>>,
    folds: usize,
    seed: u64,
    stratified: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let fitter = fitter(method, learner, seed)?;
    let mode = if stratified {
        FoldMode::Stratified
    } else {
        FoldMode::Random
    };
    let plan = evaluation::make_folds_with(&dataset.inner, folds, seed, mode).map_err(to_py)?;
    let r = py
        .detach(|| evaluation::cross_validate(&dataset.inner, &fitter, &plan))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("method", &r.method)?;
    d.set_item("learner", &r.learner)?;
    d.set_item("micro_f1", r.fold_micro_f1())?;
    d.set_item("hamming_loss", r.fold_hamming_loss())?;
    d.set_item("mean", r.aggregate(Aggregation::Mean))?;
    d.set_item("pooled", r.aggregate(Aggregation::Pooled))?;
    Ok(d)
}

/// Fraction of misclassified instance-label pairs; label sets are index lists.
#[pyfunction]
fn hamming_loss(preds: Vec<Vec<usize>>, truths: Vec<Vec<usize>>, n_labels: usize) -> PyResult<f64> {
    evaluation::hamming_loss(&label_sets(preds, n_labels)?, &label_sets(truths, n_labels)?, n_labels).map_err(to_py)
}

/// Micro-averaged F1; label sets are index lists.
#[pyfunction]
fn micro_f1(preds: Vec<Vec<usize>>, truths: Vec<Vec<usize>>, n_labels: usize) -> PyResult<f64> {
    evaluation::micro_f1(&label_sets(preds, n_labels)?, &label_sets(truths, n_labels)?, n_labels).map_err(to_py)
}

/// Two-tailed paired t-test on `a[i] - b[i]`.
#[pyfunction]
#[pyo3(signature = (a, b, confidence = 0.95))]
fn paired_t_test<'py>(py: Python<'py>, a: Vec<f64>, b: Vec<f64>, confidence: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = evaluation::paired_t_test(&a, &b, confidence).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("t", r.t)?;
    d.set_item("df", r.df)?;
    d.set_item("critical", r.critical)?;
    d.set_item("reject", r.reject)?;
    Ok(d)
}

/// Gradient-check the LSTM on `cases` random small networks.
#[pyfunction]
#[pyo3(signature = (cases = 20, seed = 0))]
fn gradient_check<'py>(py: Python<'py>, cases: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let c = py.detach(|| lstm::certify(cases, seed)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("max_error", c.max_error())?;
    d.set_item("min_fault_error", c.min_fault_error())?;
    d.set_item("roundoff_limited", c.roundoff_limited())?;
    d.set_item("passed", c.passed())?;
    Ok(d)
}

#[pymodule]
fn mlreact_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(hamming_loss, m)?)?;
    m.add_function(wrap_pyfunction!(micro_f1, m)?)?;
    m.add_function(wrap_pyfunction!(paired_t_test, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_check, m)?)?;
    Ok(())
}
