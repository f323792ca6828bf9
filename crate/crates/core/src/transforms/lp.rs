use std::borrow::Cow;
use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainView;
use crate::corpus::LabelSet;
use crate::error::{Error, Result};
use crate::learners::{self, argmax, ClassifierSpec, ProbabilisticClassifier, SingleLabelDataset};
use crate::sparse::SparseVec;

/// Bijection between the label sets seen in training and class ids; codes
/// follow the ascending order of the bit patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsetCodebook {
    width: usize,
    patterns: Vec<u64>,
}

impl LabelsetCodebook {
    pub fn build(sets: &[LabelSet], width: usize) -> Self {
        let patterns: BTreeSet<u64> = sets.iter().map(|s| s.bits()).collect();
        Self {
            width,
            patterns: patterns.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn encode(&self, set: LabelSet) -> Option<usize> {
        self.patterns.binary_search(&set.bits()).ok()
    }

    pub fn decode(&self, code: usize) -> LabelSet {
        LabelSet::from_bits(self.patterns[code], self.width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPowerset {
    codebook: LabelsetCodebook,
    classifier: ProbabilisticClassifier,
}

impl LabelPowerset {
    /// Fit with `spec` as given (callers choose the slot).
    pub(crate) fn fit(x: &[&SparseVec], sets: &[LabelSet], dim: usize, spec: &ClassifierSpec) -> Result<Self> {
        let width = sets.first().map_or(0, |s| s.width());
        let codebook = LabelsetCodebook::build(sets, width);
        let y = sets
            .iter()
            .map(|s| codebook.encode(*s).expect("every training set has a code"))
            .collect();
        let xs = x.iter().map(|v| Cow::Borrowed(*v)).collect();
        let data = SingleLabelDataset::new(xs, y, codebook.len(), dim)?;
        let classifier = learners::fit(spec, &data)?;
        Ok(Self { codebook, classifier })
    }

    pub fn codebook(&self) -> &LabelsetCodebook {
        &self.codebook
    }

    /// Label `j` scores the total probability of codes containing `j`.
    pub(crate) fn scores(&self, x: &SparseVec) -> Vec<f64> {
        let p = self.classifier.predict_proba(x);
        let mut s = vec![0.0; self.codebook.width];
        for (code, pc) in p.iter().enumerate() {
            for j in self.codebook.decode(code).iter() {
                s[j] += pc;
            }
        }
        s.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        s
    }

    /// The most probable training label set; ties go to the lowest code.
    pub(crate) fn predict(&self, x: &SparseVec) -> LabelSet {
        self.codebook.decode(argmax(&self.classifier.predict_proba(x)))
    }
}

/// Random k-labelsets ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rakel {
    width: usize,
    subsets: Vec<Vec<usize>>,
    members: Vec<LabelPowerset>,
    coverage: Vec<usize>,
}

/// Largest subset space enumerated exhaustively before sampling.
const ENUMERATION_LIMIT: u128 = 100_000;

impl Rakel {
    pub(crate) fn fit(view: &TrainView<'_>, spec: &ClassifierSpec, m: usize, k: usize, seed: u64) -> Result<Self> {
        let width = view.width;
        if k == 0 || k > width {
            return Err(Error::invalid(format!("RAkEL needs 1 <= k <= {width}, got k = {k}")));
        }
        if m == 0 {
            return Err(Error::invalid("RAkEL needs m >= 1"));
        }
        let subsets = sample_subsets(width, k, m, seed)?;
        let members = subsets
            .par_iter()
            .enumerate()
            .map(|(i, subset)| {
                let sets: Vec<LabelSet> = view.y.iter().map(|y| y.project(subset)).collect();
                LabelPowerset::fit(&view.x, &sets, view.dim, &spec.for_slot(i as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut coverage = vec![0; width];
        for s in &subsets {
            for &j in s {
                coverage[j] += 1;
            }
        }
        Ok(Self {
            width,
            subsets,
            members,
            coverage,
        })
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn coverage(&self) -> &[usize] {
        &self.coverage
    }

    /// Labels no subset covers; they always score 0.
    pub fn uncovered(&self) -> Vec<usize> {
        (0..self.width).filter(|&j| self.coverage[j] == 0).collect()
    }

    pub(crate) fn scores(&self, x: &SparseVec) -> Vec<f64> {
        let mut votes = vec![0usize; self.width];
        for (subset, member) in self.subsets.iter().zip(&self.members) {
            let pred = member.predict(x);
            for (pos, &j) in subset.iter().enumerate() {
                if pred.contains(pos) {
                    votes[j] += 1;
                }
            }
        }
        vote_shares(&votes, &self.coverage)
    }
}

/// Positive votes over covering models; uncovered labels score 0.
pub(crate) fn vote_shares(votes: &[usize], coverage: &[usize]) -> Vec<f64> {
    votes
        .iter()
        .zip(coverage)
        .map(|(&v, &c)| if c == 0 { 0.0 } else { v as f64 / c as f64 })
        .collect()
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        out.push(c.clone());
        let Some(i) = (0..k).rev().find(|&i| c[i] < n - k + i) else {
            return out;
        };
        c[i] += 1;
        for t in i + 1..k {
            c[t] = c[t - 1] + 1;
        }
    }
}

/// `m` distinct sorted `k`-subsets of `0..n`.
pub(crate) fn sample_subsets(n: usize, k: usize, m: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let total = binomial(n, k);
    if m as u128 > total {
        return Err(Error::invalid(format!(
            "RAkEL asks for {m} distinct subsets of size {k}, only {total} exist over {n} labels"
        )));
    }
    let mut rng = crate::rng::stream(seed, 0);
    if total <= ENUMERATION_LIMIT {
        let mut all = combinations(n, k);
        let (chosen, _) = all.partial_shuffle(&mut rng, m);
        return Ok(chosen.to_vec());
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(m);
    let labels: Vec<usize> = (0..n).collect();
    while out.len() < m {
        let mut s: Vec<usize> = labels.choose_multiple(&mut rng, k).copied().collect();
        s.sort_unstable();
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    Ok(out)
}
