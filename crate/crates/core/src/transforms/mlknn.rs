use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainView;
use crate::corpus::LabelSet;
use crate::error::{Error, Result};
use crate::learners::{knn_neighbors, knn_neighbors_excluding, Distance};
use crate::sparse::SparseVec;

/// Multi-label k-nearest neighbours with the maximum a posteriori rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlknn {
    k: usize,
    s: f64,
    metric: Distance,
    width: usize,
    points: Vec<SparseVec>,
    labels: Vec<LabelSet>,
    /// `P(H_j)`.
    prior: Vec<f64>,
    /// `P(E_c | H_j)` for `c = 0..=k`, one row per label.
    cond_true: Vec<Vec<f64>>,
    /// `P(E_c | not H_j)`.
    cond_false: Vec<Vec<f64>>,
}

impl Mlknn {
    pub(crate) fn fit(view: &TrainView<'_>, k: usize, s: f64, metric: Distance) -> Result<Self> {
        let n = view.x.len();
        if k == 0 {
            return Err(Error::invalid("MLkNN needs k >= 1"));
        }
        if k >= n {
            return Err(Error::invalid(format!("MLkNN needs k < N, got k = {k} with N = {n}")));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::invalid(format!("MLkNN smoothing must be positive, got {s}")));
        }
        let width = view.width;
        let points: Vec<SparseVec> = view.x.iter().map(|v| (*v).clone()).collect();
        let labels = view.y.clone();

        let neighbor_counts: Vec<Vec<usize>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let nn = knn_neighbors_excluding(&points, &points[i], k, metric, Some(i))?;
                Ok(count_labels(&nn, &labels, width))
            })
            .collect::<Result<_>>()?;

        let mut prior = vec![0.0; width];
        let mut cond_true = vec![vec![0.0; k + 1]; width];
        let mut cond_false = vec![vec![0.0; k + 1]; width];
        for j in 0..width {
            let mut hits = vec![0usize; k + 1];
            let mut misses = vec![0usize; k + 1];
            let mut count = 0usize;
            for i in 0..n {
                let c = neighbor_counts[i][j];
                if labels[i].contains(j) {
                    hits[c] += 1;
                    count += 1;
                } else {
                    misses[c] += 1;
                }
            }
            prior[j] = (s + count as f64) / (2.0 * s + n as f64);
            let (sum_h, sum_m) = (hits.iter().sum::<usize>() as f64, misses.iter().sum::<usize>() as f64);
            let bins = s * (k + 1) as f64;
            for c in 0..=k {
                cond_true[j][c] = (s + hits[c] as f64) / (bins + sum_h);
                cond_false[j][c] = (s + misses[c] as f64) / (bins + sum_m);
            }
        }
        Ok(Self {
            k,
            s,
            metric,
            width,
            points,
            labels,
            prior,
            cond_true,
            cond_false,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn smoothing(&self) -> f64 {
        self.s
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn posterior_tables(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.cond_true, &self.cond_false)
    }

    /// `(P(H_j) P(E_c|H_j), P(not H_j) P(E_c|not H_j))` per label.
    fn joint(&self, x: &SparseVec) -> Vec<(f64, f64)> {
        let nn = knn_neighbors(&self.points, x, self.k, self.metric).expect("k < N checked at fit");
        let counts = count_labels(&nn, &self.labels, self.width);
        (0..self.width)
            .map(|j| {
                let c = counts[j];
                (
                    self.prior[j] * self.cond_true[j][c],
                    (1.0 - self.prior[j]) * self.cond_false[j][c],
                )
            })
            .collect()
    }

    /// Normalised posterior of each label.
    pub(crate) fn scores(&self, x: &SparseVec) -> Vec<f64> {
        self.joint(x).into_iter().map(|(a, b)| a / (a + b)).collect()
    }

    pub(crate) fn predict(&self, x: &SparseVec) -> LabelSet {
        let joint = self.joint(x);
        LabelSet::from_indices(self.width, (0..self.width).filter(|&j| joint[j].0 >= joint[j].1))
    }
}

fn count_labels(nn: &[(usize, f64)], labels: &[LabelSet], width: usize) -> Vec<usize> {
    let mut counts = vec![0; width];
    for &(i, _) in nn {
        for j in labels[i].iter() {
            counts[j] += 1;
        }
    }
    counts
}
