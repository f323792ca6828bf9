use serde::{Deserialize, Serialize};

use super::{softmax_logs, SingleLabelDataset};
use crate::error::{Error, Result};
use crate::sparse::SparseVec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NaiveBayesParams {
    /// Additive (Laplace) smoothing.
    pub alpha: f64,
}

impl Default for NaiveBayesParams {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

impl NaiveBayesParams {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!(
                "naive Bayes smoothing must be positive, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Multinomial naive Bayes: feature weights act as event counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    dim: usize,
    /// `None` for classes without training instances.
    log_prior: Vec<Option<f64>>,
    /// Row-major `n_classes x dim` smoothed log likelihoods.
    log_likelihood: Vec<f64>,
}

impl NaiveBayes {
    pub(crate) fn fit(params: &NaiveBayesParams, data: &SingleLabelDataset<'_>) -> Self {
        let (c, dim) = (data.n_classes, data.dim);
        let mut mass = vec![0.0; c * dim];
        let mut totals = vec![0.0; c];
        for (x, &y) in data.x.iter().zip(&data.y) {
            for (i, v) in x.iter() {
                if (i as usize) < dim {
                    mass[y * dim + i as usize] += v;
                    totals[y] += v;
                }
            }
        }
        let n = data.len() as f64;
        let log_prior = data
            .class_counts()
            .into_iter()
            .map(|k| (k > 0).then(|| (k as f64 / n).ln()))
            .collect();
        let alpha = params.alpha;
        let log_likelihood = (0..c * dim)
            .map(|cell| {
                let class = cell / dim;
                ((mass[cell] + alpha) / (totals[class] + alpha * dim as f64)).ln()
            })
            .collect();
        Self {
            dim,
            log_prior,
            log_likelihood,
        }
    }

    pub(crate) fn predict_proba(&self, x: &SparseVec) -> Vec<f64> {
        let logs: Vec<f64> = self
            .log_prior
            .iter()
            .enumerate()
            .map(|(c, prior)| match prior {
                None => f64::NEG_INFINITY,
                Some(lp) => {
                    let row = &self.log_likelihood[c * self.dim..(c + 1) * self.dim];
                    lp + x.dot_dense(row)
                }
            })
            .collect();
        softmax_logs(&logs)
    }
}
