use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_binary, positive, TrainView};
use crate::corpus::LabelSet;
use crate::error::Result;
use crate::learners::{ClassifierSpec, ProbabilisticClassifier};
use crate::sparse::SparseVec;

/// Calibrated label ranking: one classifier per label pair plus one per label
/// against a virtual calibration label. Votes are soft: a pairwise model
/// giving `p` to label `a` adds `p` to `a` and `1 - p` to `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedLabelRanking {
    width: usize,
    pairs: Vec<(usize, usize)>,
    /// `None` for pairs without eligible training instances; they vote 0.5
    /// to each side.
    pair_models: Vec<Option<ProbabilisticClassifier>>,
    calibration: Vec<ProbabilisticClassifier>,
}

impl CalibratedLabelRanking {
    /// Pair `p` uses slot `p` of `spec`; the calibration model of label `j`
    /// uses slot `pairs + j`.
    pub(crate) fn fit(view: &TrainView<'_>, spec: &ClassifierSpec) -> Result<Self> {
        let width = view.width;
        let pairs: Vec<(usize, usize)> = (0..width).flat_map(|a| (a + 1..width).map(move |b| (a, b))).collect();
        let pair_models = pairs
            .par_iter()
            .enumerate()
            .map(|(p, &(a, b))| {
                let rows: Vec<usize> = (0..view.y.len())
                    .filter(|&r| view.y[r].contains(a) != view.y[r].contains(b))
                    .collect();
                if rows.is_empty() {
                    return Ok(None);
                }
                let x = rows.iter().map(|&r| Cow::Borrowed(view.x[r])).collect();
                let y = rows.iter().map(|&r| view.y[r].contains(a)).collect();
                fit_binary(&spec.for_slot(p as u64), x, y, view.dim).map(Some)
            })
            .collect::<Result<Vec<_>>>()?;
        let offset = pairs.len() as u64;
        let calibration = (0..width)
            .into_par_iter()
            .map(|j| {
                let x = view.x.iter().map(|v| Cow::Borrowed(*v)).collect();
                let y = view.y.iter().map(|y| y.contains(j)).collect();
                fit_binary(&spec.for_slot(offset + j as u64), x, y, view.dim)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            width,
            pairs,
            pair_models,
            calibration,
        })
    }

    pub fn n_classifiers(&self) -> usize {
        self.pair_models.len() + self.calibration.len()
    }

    /// Pairs trained on no instances.
    pub fn degenerate_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs
            .iter()
            .zip(&self.pair_models)
            .filter(|(_, m)| m.is_none())
            .map(|(p, _)| *p)
            .collect()
    }

    /// Votes of every label and of the calibration label.
    pub fn votes(&self, x: &SparseVec) -> (Vec<f64>, f64) {
        let mut votes = vec![0.0; self.width];
        for (&(a, b), m) in self.pairs.iter().zip(&self.pair_models) {
            let p = m.as_ref().map_or(0.5, |m| positive(m, x));
            votes[a] += p;
            votes[b] += 1.0 - p;
        }
        let mut calibration = 0.0;
        for (j, m) in self.calibration.iter().enumerate() {
            let p = positive(m, x);
            votes[j] += p;
            calibration += 1.0 - p;
        }
        (votes, calibration)
    }

    /// Votes over the `|L|` a label can collect at most.
    pub(crate) fn scores(&self, x: &SparseVec) -> Vec<f64> {
        let (votes, _) = self.votes(x);
        votes
            .into_iter()
            .map(|v| (v / self.width as f64).clamp(0.0, 1.0))
            .collect()
    }

    /// Labels ranked strictly above the calibration label.
    pub(crate) fn predict(&self, x: &SparseVec) -> LabelSet {
        let (votes, cal) = self.votes(x);
        LabelSet::from_indices(self.width, (0..self.width).filter(|&j| votes[j] > cal))
    }
}
