use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::FoldPlan;
use super::metrics::{f_beta, hamming_loss, micro_confusion, ConfusionTotals};
use crate::corpus::{LabelSet, MultiLabelDataset};
use crate::error::{Error, Result};
use crate::learners::ClassifierSpec;
use crate::lstm::TrainConfig;
use crate::textprep::EmbeddingTable;
use crate::transforms::{self, MethodConfig, MultiLabelModel};

/// Something that predicts label sets for a held-out dataset.
pub trait Predictor: Send + Sync {
    fn predict(&self, test: &MultiLabelDataset) -> Result<Vec<LabelSet>>;
}

/// Something that can be trained on one fold's training split.
pub trait Fitter: Sync {
    fn method_name(&self) -> String;
    fn learner_name(&self) -> String;
    fn fit(&self, train: &MultiLabelDataset) -> Result<Box<dyn Predictor>>;
}

impl Predictor for MultiLabelModel {
    fn predict(&self, test: &MultiLabelDataset) -> Result<Vec<LabelSet>> {
        self.predict_dataset(test)
    }
}

/// Base learner of a grid cell.
#[derive(Debug, Clone)]
pub enum Learner {
    Classic(ClassifierSpec),
    Lstm {
        config: TrainConfig,
        table: Arc<EmbeddingTable>,
    },
}

impl Learner {
    pub fn name(&self) -> &'static str {
        match self {
            Learner::Classic(spec) => spec.params.name(),
            Learner::Lstm { .. } => "LSTM",
        }
    }
}

/// A (method, learner) cell of the experiment grid.
#[derive(Debug, Clone)]
pub struct ModelFitter {
    method: MethodConfig,
    learner: Option<Learner>,
    threshold: f64,
}

impl ModelFitter {
    /// MLkNN takes no learner; every other method needs one, and the LSTM
    /// learner only pairs with BR.
    pub fn new(method: MethodConfig, learner: Option<Learner>) -> Result<Self> {
        method.validate()?;
        match (&method, &learner) {
            (MethodConfig::Mlknn { .. }, Some(_)) => return Err(Error::Config("MLkNN takes no base learner".into())),
            (MethodConfig::Mlknn { .. }, None) => {}
            (_, None) => return Err(Error::Config(format!("{} needs a base learner", method.method()))),
            (MethodConfig::Br, Some(Learner::Lstm { config, .. })) => config.validate()?,
            (_, Some(Learner::Lstm { .. })) => {
                return Err(Error::Config(format!(
                    "the LSTM learner is only available with BR, not {}",
                    method.method()
                )))
            }
            (_, Some(Learner::Classic(spec))) => spec.validate()?,
        }
        Ok(Self {
            method,
            learner,
            threshold: transforms::DEFAULT_THRESHOLD,
        })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::invalid(format!("threshold must lie in (0, 1), got {threshold}")));
        }
        self.threshold = threshold;
        Ok(self)
    }

    pub fn method(&self) -> &MethodConfig {
        &self.method
    }

    pub fn learner(&self) -> Option<&Learner> {
        self.learner.as_ref()
    }

    /// Whether the cell consumes token sequences rather than TF-IDF vectors.
    pub fn needs_sequences(&self) -> bool {
        matches!(self.learner, Some(Learner::Lstm { .. }))
    }

    pub fn fit_model(&self, train: &MultiLabelDataset) -> Result<MultiLabelModel> {
        let model = match (&self.method, &self.learner) {
            (MethodConfig::Mlknn { k, s }, _) => transforms::fit_mlknn(train, *k, *s)?,
            (_, Some(Learner::Lstm { config, table })) => transforms::fit_br_lstm(train, config, table.clone())?,
            (m, Some(Learner::Classic(spec))) => m.fit(train, spec)?,
            (_, None) => unreachable!("validated at construction"),
        };
        model.with_threshold(self.threshold)
    }
}

impl Fitter for ModelFitter {
    fn method_name(&self) -> String {
        self.method.method().name().to_string()
    }

    fn learner_name(&self) -> String {
        match &self.learner {
            Some(l) => l.name().to_string(),
            None => "KNN".to_string(),
        }
    }

    fn fit(&self, train: &MultiLabelDataset) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(self.fit_model(train)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_test: usize,
    pub micro_f1: f64,
    pub hamming_loss: f64,
    pub confusion: ConfusionTotals,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
}

/// How fold metrics are combined into one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Unweighted mean of the per-fold metrics.
    #[default]
    Mean,
    /// Metrics of the confusion totals summed over folds.
    Pooled,
}

impl Aggregation {
    pub fn label(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::Pooled => "pooled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub corpus: String,
    pub method: String,
    pub learner: String,
    pub folds: Vec<FoldResult>,
}

impl ExperimentResult {
    pub fn with_corpus(mut self, corpus: impl Into<String>) -> Self {
        self.corpus = corpus.into();
        self
    }

    pub fn fold_micro_f1(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.micro_f1).collect()
    }

    pub fn fold_hamming_loss(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.hamming_loss).collect()
    }

    /// `(micro-F1, hamming loss)` under `agg`.
    pub fn aggregate(&self, agg: Aggregation) -> (f64, f64) {
        match agg {
            Aggregation::Mean => {
                let n = self.folds.len() as f64;
                (
                    self.folds.iter().map(|f| f.micro_f1).sum::<f64>() / n,
                    self.folds.iter().map(|f| f.hamming_loss).sum::<f64>() / n,
                )
            }
            Aggregation::Pooled => {
                let total: ConfusionTotals = self.folds.iter().map(|f| f.confusion).sum();
                (f_beta(&total, 1.0), total.error_rate())
            }
        }
    }

    pub fn fit_seconds(&self) -> f64 {
        self.folds.iter().map(|f| f.fit_seconds).sum()
    }

    pub fn predict_seconds(&self) -> f64 {
        self.folds.iter().map(|f| f.predict_seconds).sum()
    }
}

/// Fit on all folds but one and score the held-out fold, for every fold.
/// Folds run in parallel; results are reported in fold order.
pub fn cross_validate(ds: &MultiLabelDataset, fitter: &dyn Fitter, plan: &FoldPlan) -> Result<ExperimentResult> {
    if plan.assignment().len() != ds.len() {
        return Err(Error::invalid(format!(
            "fold plan covers {} instances, the dataset has {}",
            plan.assignment().len(),
            ds.len()
        )));
    }
    let width = ds.n_labels();
    let folds = (0..plan.n_folds())
        .into_par_iter()
        .map(|f| -> Result<FoldResult> {
            let wrap = |e: Error| Error::Fold {
                fold: f,
                source: Box::new(e),
            };
            let train = ds.subset(&plan.train_indices(f));
            let test = ds.subset(&plan.test_indices(f));
            let t0 = Instant::now();
            let model = fitter.fit(&train).map_err(wrap)?;
            let fit_seconds = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let preds = model.predict(&test).map_err(wrap)?;
            let predict_seconds = t1.elapsed().as_secs_f64();
            let truths = test.label_sets();
            let confusion = micro_confusion(&preds, &truths, width).map_err(wrap)?;
            Ok(FoldResult {
                fold: f,
                n_test: test.len(),
                micro_f1: f_beta(&confusion, 1.0),
                hamming_loss: hamming_loss(&preds, &truths, width).map_err(wrap)?,
                confusion,
                fit_seconds,
                predict_seconds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        corpus: String::new(),
        method: fitter.method_name(),
        learner: fitter.learner_name(),
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::super::make_folds;
    use super::*;
    use crate::synthetic;

    struct Oracle;

    impl Predictor for Oracle {
        fn predict(&self, test: &MultiLabelDataset) -> Result<Vec<LabelSet>> {
            Ok(test.label_sets())
        }
    }

    impl Fitter for Oracle {
        fn method_name(&self) -> String {
            "oracle".into()
        }
        fn learner_name(&self) -> String {
            "-".into()
        }
        fn fit(&self, _: &MultiLabelDataset) -> Result<Box<dyn Predictor>> {
            Ok(Box::new(Oracle))
        }
    }

    /// Predicts every label for every instance.
    struct AllLabels;

    impl Predictor for AllLabels {
        fn predict(&self, test: &MultiLabelDataset) -> Result<Vec<LabelSet>> {
            Ok(test
                .label_sets()
                .iter()
                .map(|s| LabelSet::from_bits(u64::MAX, s.width()))
                .collect())
        }
    }

    impl Fitter for AllLabels {
        fn method_name(&self) -> String {
            "all".into()
        }
        fn learner_name(&self) -> String {
            "-".into()
        }
        fn fit(&self, _: &MultiLabelDataset) -> Result<Box<dyn Predictor>> {
            Ok(Box::new(AllLabels))
        }
    }

    struct Failing;

    impl Fitter for Failing {
        fn method_name(&self) -> String {
            "fail".into()
        }
        fn learner_name(&self) -> String {
            "-".into()
        }
        fn fit(&self, _: &MultiLabelDataset) -> Result<Box<dyn Predictor>> {
            Err(Error::invalid("boom"))
        }
    }

    #[test]
    fn oracle_is_perfect() {
        let ds = synthetic::indicator_dataset(90, 3, 2, 0);
        let plan = make_folds(&ds, 3, 0).unwrap();
        let r = cross_validate(&ds, &Oracle, &plan).unwrap();
        assert_eq!(r.folds.len(), 3);
        for agg in [Aggregation::Mean, Aggregation::Pooled] {
            assert_eq!(r.aggregate(agg), (1.0, 0.0));
        }
    }

    #[test]
    fn predict_all_baseline_matches_closed_form() {
        // precision = p, recall = 1, so micro-F1 = 2p / (1 + p) with p = 0.4
        let ds = synthetic::indicator_dataset(900, 4, 0, 1);
        let plan = make_folds(&ds, 3, 0).unwrap();
        let r = cross_validate(&ds, &AllLabels, &plan).unwrap();
        let expected = 2.0 * 0.4 / 1.4;
        assert!((r.aggregate(Aggregation::Mean).0 - expected).abs() <= 0.05);
        assert!((r.aggregate(Aggregation::Mean).1 - 0.6).abs() <= 0.05);
    }

    #[test]
    fn aggregates_are_fold_means() {
        let ds = synthetic::noisy_dataset(120, 3, 5, 0.2, 2);
        let plan = make_folds(&ds, 4, 1).unwrap();
        let f = ModelFitter::new(MethodConfig::Br, Some(Learner::Classic(ClassifierSpec::naive_bayes()))).unwrap();
        let r = cross_validate(&ds, &f, &plan).unwrap();
        let (f1, hl) = r.aggregate(Aggregation::Mean);
        assert!((f1 - r.fold_micro_f1().iter().sum::<f64>() / 4.0).abs() < 1e-15);
        assert!((hl - r.fold_hamming_loss().iter().sum::<f64>() / 4.0).abs() < 1e-15);
        assert_eq!(r.method, "BR");
        assert_eq!(r.learner, "NB");
    }

    #[test]
    fn results_do_not_depend_on_scheduling() {
        let ds = synthetic::noisy_dataset(90, 3, 5, 0.2, 3);
        let plan = make_folds(&ds, 3, 2).unwrap();
        let f = ModelFitter::new(
            MethodConfig::Br,
            Some(Learner::Classic(ClassifierSpec::random_forest())),
        )
        .unwrap();
        let strip =
            |r: ExperimentResult| -> Vec<(f64, f64)> { r.folds.iter().map(|f| (f.micro_f1, f.hamming_loss)).collect() };
        let parallel = strip(cross_validate(&ds, &f, &plan).unwrap());
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = strip(pool.install(|| cross_validate(&ds, &f, &plan)).unwrap());
        assert_eq!(parallel, serial);
    }

    #[test]
    fn errors_carry_the_fold() {
        let ds = synthetic::indicator_dataset(30, 2, 0, 0);
        let plan = make_folds(&ds, 3, 0).unwrap();
        let err = cross_validate(&ds, &Failing, &plan).unwrap_err();
        assert!(matches!(err, Error::Fold { fold: 0, .. }), "{err}");
    }

    #[test]
    fn cell_validation() {
        let nb = || Some(Learner::Classic(ClassifierSpec::naive_bayes()));
        assert!(ModelFitter::new(MethodConfig::Mlknn { k: 3, s: 1.0 }, nb()).is_err());
        assert!(ModelFitter::new(MethodConfig::Lp, None).is_err());
        let lstm = Some(Learner::Lstm {
            config: TrainConfig::g1(),
            table: Arc::new(synthetic::separable_embeddings(2, 0)),
        });
        assert!(ModelFitter::new(MethodConfig::Cc { order_seed: None }, lstm.clone()).is_err());
        assert!(ModelFitter::new(MethodConfig::Br, lstm).unwrap().needs_sequences());
    }
}
