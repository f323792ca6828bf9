use std::borrow::Cow;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_binary, positive};
use crate::corpus::{MultiLabelDataset, TokenSequence};
use crate::error::{Error, Result};
use crate::learners::{ClassifierSpec, ProbabilisticClassifier};
use crate::lstm::{self, LstmModel, TrainConfig};
use crate::sparse::SparseVec;
use crate::textprep::EmbeddingTable;

/// One binary classifier per target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryRelevance {
    members: Vec<ProbabilisticClassifier>,
}

impl BinaryRelevance {
    /// Target `t` is fitted with slot `t` of `spec`.
    pub(crate) fn fit(x: &[&SparseVec], targets: Vec<Vec<bool>>, dim: usize, spec: &ClassifierSpec) -> Result<Self> {
        let members = targets
            .into_par_iter()
            .enumerate()
            .map(|(t, y)| {
                let xs = x.iter().map(|v| Cow::Borrowed(*v)).collect();
                fit_binary(&spec.for_slot(t as u64), xs, y, dim)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { members })
    }

    pub fn members(&self) -> &[ProbabilisticClassifier] {
        &self.members
    }

    pub(crate) fn scores(&self, x: &SparseVec) -> Vec<f64> {
        self.members.iter().map(|m| positive(m, x)).collect()
    }
}

/// BR over token sequences with one LSTM per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmRelevance {
    config: TrainConfig,
    table: Arc<EmbeddingTable>,
    members: Vec<LstmModel>,
}

impl LstmRelevance {
    pub(crate) fn fit(ds: &MultiLabelDataset, cfg: &TrainConfig, table: Arc<EmbeddingTable>) -> Result<Self> {
        cfg.validate()?;
        if ds.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let seqs = ds
            .instances()
            .iter()
            .map(|inst| inst.features.as_sequence())
            .collect::<Result<Vec<&TokenSequence>>>()?;
        let members = (0..ds.n_labels())
            .into_par_iter()
            .map(|j| {
                let data: Vec<(TokenSequence, bool)> = seqs
                    .iter()
                    .zip(ds.instances())
                    .map(|(s, inst)| ((*s).clone(), inst.labels.contains(j)))
                    .collect();
                let cfg = TrainConfig {
                    seed: crate::rng::derive(cfg.seed, j as u64),
                    ..cfg.clone()
                };
                lstm::train(&data, &cfg, &table)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: cfg.clone(),
            table,
            members,
        })
    }

    pub fn members(&self) -> &[LstmModel] {
        &self.members
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub(crate) fn scores(&self, x: &TokenSequence) -> Result<Vec<f64>> {
        let len = x.len.min(self.config.max_sequence_length);
        let x = TokenSequence {
            ids: x.ids[..len.min(x.ids.len())].to_vec(),
            len,
        };
        self.members.iter().map(|m| m.probability(&x, &self.table)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use crate::corpus::{Features, LabelSet, MultiLabelInstance};
    use crate::synthetic;

    #[test]
    fn one_model_per_label() {
        let ds = synthetic::indicator_dataset(30, 3, 2, 0);
        let model = fit_br(&ds, &ClassifierSpec::naive_bayes()).unwrap();
        let MethodState::Br(br) = model.state() else { panic!() };
        assert_eq!(br.members().len(), 3);
    }

    #[test]
    fn absent_label_is_never_predicted() {
        let ds = synthetic::indicator_dataset(40, 3, 3, 1);
        let instances: Vec<MultiLabelInstance> = ds
            .instances()
            .iter()
            .map(|i| {
                let mut labels = i.labels;
                labels.remove(2);
                MultiLabelInstance { labels, ..i.clone() }
            })
            .collect();
        let ds = MultiLabelDataset::new(ds.space().clone(), instances, ds.feature_dim()).unwrap();
        let model = fit_br(&ds, &ClassifierSpec::random_forest()).unwrap();
        let MethodState::Br(br) = model.state() else { panic!() };
        assert_eq!(br.members()[2].is_constant(), Some(0));
        let probe = Features::Sparse(SparseVec::from_dense(&[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]).unwrap());
        assert!(!model.predict(&probe).unwrap().contains(2));
    }

    #[test]
    fn indicator_labels_recovered_exactly() {
        let ds = synthetic::indicator_dataset(200, 4, 5, 2);
        let model = fit_br(&ds, &ClassifierSpec::naive_bayes()).unwrap();
        let preds = model.predict_dataset(&ds).unwrap();
        let truth: Vec<LabelSet> = ds.label_sets();
        assert_eq!(preds, truth);
    }

    #[test]
    fn lstm_members_need_sequences() {
        let ds = synthetic::indicator_dataset(10, 2, 1, 0);
        let table = Arc::new(synthetic::separable_embeddings(3, 0));
        assert!(matches!(
            fit_br_lstm(&ds, &TrainConfig::g1(), table),
            Err(Error::Representation(_))
        ));
    }
}
