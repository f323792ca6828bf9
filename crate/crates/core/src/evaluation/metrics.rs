use serde::{Deserialize, Serialize};

use crate::corpus::LabelSet;
use crate::error::{Error, Result};

/// Binary confusion counts summed over all labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionTotals {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionTotals {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// Share of label decisions that are wrong.
    pub fn error_rate(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => (self.fp + self.fn_) as f64 / t as f64,
        }
    }
}

impl std::ops::Add for ConfusionTotals {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl std::iter::Sum for ConfusionTotals {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

fn check(preds: &[LabelSet], truths: &[LabelSet], n_labels: usize) -> Result<()> {
    if preds.len() != truths.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} instances",
            preds.len(),
            truths.len()
        )));
    }
    if let Some(bad) = preds.iter().chain(truths).find(|s| s.width() != n_labels) {
        return Err(Error::invalid(format!(
            "label set of width {} in a {n_labels}-label evaluation",
            bad.width()
        )));
    }
    Ok(())
}

/// Mean over instances of the symmetric difference size, divided by `|L|`.
pub fn hamming_loss(preds: &[LabelSet], truths: &[LabelSet], n_labels: usize) -> Result<f64> {
    check(preds, truths, n_labels)?;
    if preds.is_empty() {
        return Err(Error::invalid("hamming loss of an empty evaluation"));
    }
    let diff: usize = preds.iter().zip(truths).map(|(p, t)| p.hamming(t)).sum();
    Ok(diff as f64 / (preds.len() * n_labels) as f64)
}

pub fn micro_confusion(preds: &[LabelSet], truths: &[LabelSet], n_labels: usize) -> Result<ConfusionTotals> {
    check(preds, truths, n_labels)?;
    let mut t = ConfusionTotals::default();
    for (p, y) in preds.iter().zip(truths) {
        let (p, y) = (p.bits(), y.bits());
        let tp = (p & y).count_ones() as u64;
        let fp = (p & !y).count_ones() as u64;
        let fn_ = (!p & y).count_ones() as u64;
        t.tp += tp;
        t.fp += fp;
        t.fn_ += fn_;
        t.tn += n_labels as u64 - tp - fp - fn_;
    }
    Ok(t)
}

/// `(1 + b²) tp / ((1 + b²) tp + b² fn + fp)`, and 0 when the denominator is 0.
pub fn f_beta(t: &ConfusionTotals, beta: f64) -> f64 {
    assert!(beta > 0.0, "beta must be positive");
    let b2 = beta * beta;
    let num = (1.0 + b2) * t.tp as f64;
    let den = num + b2 * t.fn_ as f64 + t.fp as f64;
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn micro_f1(preds: &[LabelSet], truths: &[LabelSet], n_labels: usize) -> Result<f64> {
    Ok(f_beta(&micro_confusion(preds, truths, n_labels)?, 1.0))
}
