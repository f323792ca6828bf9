use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{softmax_logs, SingleLabelDataset};
use crate::error::{Error, Result};
use crate::sparse::SparseVec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearParams {
    /// L2 regularisation strength.
    pub lambda: f64,
    /// Initial step size; decays as `lr / (1 + t / n)` with `t` the step count.
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            learning_rate: 0.5,
            epochs: 20,
        }
    }
}

impl LinearParams {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("linear-margin learning rate must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("linear-margin lambda must be non-negative"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("linear-margin needs at least one epoch"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Hyperplane {
    w: Vec<f64>,
    b: f64,
}

impl Hyperplane {
    fn margin(&self, x: &SparseVec) -> f64 {
        x.dot_dense(&self.w) + self.b
    }
}

/// Linear max-margin classifier: hinge loss with L2 regularisation, trained by
/// stochastic sub-gradient descent. Two classes use one hyperplane, more use
/// one-vs-rest. Probabilities come from a logistic link on the margins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMargin {
    planes: Vec<Hyperplane>,
    n_classes: usize,
}

/// Mean objective (hinge + L2 penalty) of every epoch, per hyperplane.
pub type LossTrace = Vec<Vec<f64>>;

impl LinearMargin {
    pub(crate) fn fit(params: &LinearParams, data: &SingleLabelDataset<'_>, seed: u64) -> Self {
        Self::fit_with_trace(params, data, seed).0
    }

    pub fn fit_with_trace(params: &LinearParams, data: &SingleLabelDataset<'_>, seed: u64) -> (Self, LossTrace) {
        let targets: Vec<usize> = if data.n_classes == 2 {
            vec![1]
        } else {
            (0..data.n_classes).collect()
        };
        let (planes, trace) = targets
            .iter()
            .map(|&positive| train_plane(params, data, positive, crate::rng::derive(seed, positive as u64)))
            .unzip();
        (
            Self {
                planes,
                n_classes: data.n_classes,
            },
            trace,
        )
    }

    pub(crate) fn predict_proba(&self, x: &SparseVec) -> Vec<f64> {
        if self.n_classes == 2 {
            let p = sigmoid(self.planes[0].margin(x));
            return vec![1.0 - p, p];
        }
        let logs: Vec<f64> = self.planes.iter().map(|h| log_sigmoid(h.margin(x))).collect();
        softmax_logs(&logs)
    }
}

fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        -(-m).exp().ln_1p()
    } else {
        m - m.exp().ln_1p()
    }
}

fn train_plane(
    params: &LinearParams,
    data: &SingleLabelDataset<'_>,
    positive: usize,
    seed: u64,
) -> (Hyperplane, Vec<f64>) {
    let n = data.len();
    let lambda = params.lambda;
    // w = scale * v keeps the shrink step O(1)
    let mut v = vec![0.0; data.dim];
    let mut scale = 1.0f64;
    let mut sq_norm_v = 0.0f64;
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0usize;
    let mut trace = Vec::with_capacity(params.epochs);

    for epoch in 0..params.epochs {
        order.shuffle(&mut crate::rng::stream(seed, epoch as u64));
        let mut epoch_loss = 0.0;
        for &i in &order {
            let x = &data.x[i];
            let y = if data.y[i] == positive { 1.0 } else { -1.0 };
            let eta = params.learning_rate / (1.0 + t as f64 / n as f64);
            let margin = scale * x.dot_dense(&v) + b;
            let hinge = (1.0 - y * margin).max(0.0);
            epoch_loss += hinge + 0.5 * lambda * scale * scale * sq_norm_v;

            scale *= 1.0 - eta * lambda;
            if hinge > 0.0 {
                let step = eta * y / scale;
                for (idx, val) in x.iter() {
                    let k = idx as usize;
                    if k < v.len() {
                        let old = v[k];
                        v[k] += step * val;
                        sq_norm_v += v[k] * v[k] - old * old;
                    }
                }
                b += eta * y;
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                sq_norm_v *= scale * scale;
                scale = 1.0;
            }
            t += 1;
        }
        trace.push(epoch_loss / n as f64);
    }
    let w = v.into_iter().map(|x| x * scale).collect();
    (Hyperplane { w, b }, trace)
}
