use std::borrow::Cow;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{fit_binary, positive, TrainView};
use crate::error::{Error, Result};
use crate::learners::{ClassifierSpec, ProbabilisticClassifier};
use crate::sparse::SparseVec;

/// Order in which a chain visits the labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ChainOrder(Vec<usize>);

impl ChainOrder {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &j in &order {
            if j >= order.len() || std::mem::replace(&mut seen[j], true) {
                return Err(Error::invalid(format!("{order:?} is not a permutation")));
            }
        }
        Ok(Self(order))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn random(n: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut crate::rng::stream(seed, 0));
        Self(order)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<usize>> for ChainOrder {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ChainOrder> for Vec<usize> {
    fn from(o: ChainOrder) -> Self {
        o.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierChain {
    order: ChainOrder,
    dim: usize,
    /// `members[p]` predicts label `order[p]`.
    members: Vec<ProbabilisticClassifier>,
}

impl ClassifierChain {
    /// Position `p` is fitted with slot `p` of `spec` on features augmented
    /// with the true bits of the labels before it.
    pub(crate) fn fit(view: &TrainView<'_>, spec: &ClassifierSpec, order: ChainOrder) -> Result<Self> {
        let offset = view.dim as u32;
        let mut members = Vec::with_capacity(order.len());
        for (p, &label) in order.as_slice().iter().enumerate() {
            let earlier = &order.as_slice()[..p];
            let x: Vec<Cow<'_, SparseVec>> = view
                .x
                .iter()
                .zip(&view.y)
                .map(|(x, y)| {
                    if p == 0 {
                        Cow::Borrowed(*x)
                    } else {
                        let flags: Vec<bool> = earlier.iter().map(|&j| y.contains(j)).collect();
                        Cow::Owned(x.with_flags(offset, &flags))
                    }
                })
                .collect();
            let y = view.y.iter().map(|y| y.contains(label)).collect();
            members.push(fit_binary(&spec.for_slot(p as u64), x, y, view.dim + p)?);
        }
        Ok(Self {
            order,
            dim: view.dim,
            members,
        })
    }

    pub fn order(&self) -> &ChainOrder {
        &self.order
    }

    /// Feature width seen by each chain position.
    pub fn input_dims(&self) -> Vec<usize> {
        (0..self.members.len()).map(|p| self.dim + p).collect()
    }

    pub fn members(&self) -> &[ProbabilisticClassifier] {
        &self.members
    }

    /// Walk the chain, feeding each thresholded prediction forward.
    pub(crate) fn scores(&self, x: &SparseVec, threshold: f64) -> Vec<f64> {
        let mut scores = vec![0.0; self.members.len()];
        let mut flags = Vec::with_capacity(self.members.len());
        for (p, m) in self.members.iter().enumerate() {
            let s = if p == 0 {
                positive(m, x)
            } else {
                positive(m, &x.with_flags(self.dim as u32, &flags))
            };
            scores[self.order.as_slice()[p]] = s;
            flags.push(s >= threshold);
        }
        scores
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use crate::corpus::{Features, LabelSet, MultiLabelDataset, MultiLabelInstance};
    use crate::synthetic;
    use rand::Rng;

    #[test]
    fn order_validation() {
        assert!(ChainOrder::new(vec![1, 0, 2]).is_ok());
        assert!(ChainOrder::new(vec![0, 0, 2]).is_err());
        assert!(ChainOrder::new(vec![0, 3]).is_err());
        let r = ChainOrder::random(6, 4);
        let mut sorted = r.as_slice().to_vec();
        sorted.sort();
        assert_eq!(sorted, (0..6).collect::<Vec<_>>());
        assert_eq!(r, ChainOrder::random(6, 4));
    }

    #[test]
    fn position_input_dimensions() {
        let ds = synthetic::indicator_dataset(30, 4, 3, 0);
        let model = fit_cc(&ds, &ClassifierSpec::naive_bayes(), &ChainOrder::identity(4)).unwrap();
        let MethodState::Cc(cc) = model.state() else { panic!() };
        assert_eq!(cc.input_dims(), vec![7, 8, 9, 10]);
    }

    /// Label 1 copies label 0; only label 0 has an informative feature.
    fn copied_label_dataset(n: usize, seed: u64) -> MultiLabelDataset {
        let mut rng = crate::rng::rng(seed);
        let instances = (0..n)
            .map(|i| {
                let on = rng.random_bool(0.5);
                let noise = rng.random_range(1..4) as f64;
                let dense = [if on { 1.0 } else { 0.0 }, noise, 1.0];
                MultiLabelInstance {
                    id: i.to_string(),
                    features: Features::Sparse(SparseVec::from_dense(&dense).unwrap()),
                    labels: LabelSet::from_flags(&[on, on]),
                }
            })
            .collect();
        MultiLabelDataset::new(synthetic::label_space(2), instances, 3).unwrap()
    }

    #[test]
    fn chain_propagates_correlated_label() {
        let train = copied_label_dataset(200, 1);
        let test = copied_label_dataset(200, 2);
        let model = fit_cc(&train, &ClassifierSpec::random_forest(), &ChainOrder::identity(2)).unwrap();
        let MethodState::Cc(cc) = model.state() else { panic!() };
        // the second position can see the propagated bit at index d
        let with_bit = SparseVec::from_dense(&[0.0, 2.0, 1.0, 1.0]).unwrap();
        let without = SparseVec::from_dense(&[0.0, 2.0, 1.0, 0.0]).unwrap();
        assert!(positive(&cc.members()[1], &with_bit) > positive(&cc.members()[1], &without));

        let preds = model.predict_dataset(&test).unwrap();
        let correct = preds
            .iter()
            .zip(test.instances())
            .filter(|(p, t)| p.contains(1) == t.labels.contains(1))
            .count();
        assert!(correct as f64 / 200.0 >= 0.95, "{correct}");
    }

    #[test]
    fn second_position_consumes_first_prediction() {
        let train = copied_label_dataset(100, 3);
        let model = fit_cc(&train, &ClassifierSpec::naive_bayes(), &ChainOrder::identity(2)).unwrap();
        let MethodState::Cc(cc) = model.state() else { panic!() };
        let x = SparseVec::from_dense(&[1.0, 2.0, 1.0]).unwrap();
        let first = positive(&cc.members()[0], &x) >= 0.5;
        let expected = positive(&cc.members()[1], &x.with_flags(3, &[first]));
        assert_eq!(cc.scores(&x, 0.5)[1], expected);
    }

    #[test]
    fn chain_head_matches_binary_relevance() {
        for seed in 0..3 {
            let ds = synthetic::noisy_dataset(80, 3, 5, 0.2, seed);
            let spec = ClassifierSpec::random_forest().with_seed(seed);
            let br = fit_br(&ds, &spec).unwrap();
            let cc = fit_cc(&ds, &spec, &ChainOrder::identity(3)).unwrap();
            for inst in ds.instances() {
                let a = br.score(&inst.features).unwrap()[0];
                let b = cc.score(&inst.features).unwrap()[0];
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn label_permutation_equivariance() {
        let ds = synthetic::noisy_dataset(80, 4, 6, 0.2, 5);
        let perm = synthetic::permutation(4, 9); // old label j becomes perm[j]
        let permuted: Vec<MultiLabelInstance> = ds
            .instances()
            .iter()
            .map(|i| MultiLabelInstance {
                labels: LabelSet::from_indices(4, i.labels.iter().map(|j| perm[j])),
                ..i.clone()
            })
            .collect();
        let pds = MultiLabelDataset::new(ds.space().clone(), permuted, ds.feature_dim()).unwrap();
        let spec = ClassifierSpec::random_forest().with_seed(2);
        let order = ChainOrder::new(vec![2, 0, 3, 1]).unwrap();
        let porder = ChainOrder::new(order.as_slice().iter().map(|&j| perm[j]).collect()).unwrap();
        let a = fit_cc(&ds, &spec, &order).unwrap();
        let b = fit_cc(&pds, &spec, &porder).unwrap();
        for inst in ds.instances() {
            let pa = a.predict(&inst.features).unwrap();
            let pb = b.predict(&inst.features).unwrap();
            assert_eq!(LabelSet::from_indices(4, pa.iter().map(|j| perm[j])), pb);
        }
    }
}
