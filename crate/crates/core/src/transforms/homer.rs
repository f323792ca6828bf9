use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{BinaryRelevance, TrainView};
use crate::corpus::LabelSet;
use crate::error::Result;
use crate::learners::ClassifierSpec;
use crate::sparse::SparseVec;

/// A node of the label hierarchy. Leaves hold one label; internal nodes hold
/// a BR model over their children's meta-labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomerNode {
    labels: Vec<usize>,
    children: Vec<HomerNode>,
    model: Option<BinaryRelevance>,
}

impl HomerNode {
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn children(&self) -> &[HomerNode] {
        &self.children
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    fn active(&self, y: &LabelSet) -> bool {
        self.labels.iter().any(|&j| y.contains(j))
    }

    fn fill(&self, scores: &mut [f64], value: f64) {
        for &j in &self.labels {
            scores[j] = value;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Homer {
    width: usize,
    branching: usize,
    root: HomerNode,
}

/// Slot offset separating non-root node seeds from member slots.
const NODE_SLOT_BASE: u64 = 1 << 32;
const KMEANS_ROUNDS: usize = 20;

struct Builder<'v, 'a> {
    view: &'v TrainView<'a>,
    spec: &'v ClassifierSpec,
    branching: usize,
    seed: u64,
    next_id: u64,
}

impl Builder<'_, '_> {
    fn node(&mut self, labels: Vec<usize>, rows: &[usize]) -> Result<HomerNode> {
        let id = self.next_id;
        self.next_id += 1;
        if labels.len() == 1 {
            return Ok(HomerNode {
                labels,
                children: Vec::new(),
                model: None,
            });
        }
        let groups = if labels.len() <= self.branching {
            labels.iter().map(|&j| vec![j]).collect()
        } else {
            balanced_clusters(
                &labels,
                rows,
                &self.view.y,
                self.branching,
                crate::rng::derive(self.seed, id),
            )
        };
        let shells: Vec<HomerNode> = groups
            .into_iter()
            .map(|labels| HomerNode {
                labels,
                children: Vec::new(),
                model: None,
            })
            .collect();
        let x: Vec<&SparseVec> = rows.iter().map(|&r| self.view.x[r]).collect();
        let targets = shells
            .iter()
            .map(|c| rows.iter().map(|&r| c.active(&self.view.y[r])).collect())
            .collect();
        let spec = if id == 0 {
            self.spec.clone()
        } else {
            self.spec.for_slot(NODE_SLOT_BASE + id)
        };
        let model = BinaryRelevance::fit(&x, targets, self.view.dim, &spec)?;
        let mut children = Vec::with_capacity(shells.len());
        for shell in shells {
            let child_rows: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|&r| shell.active(&self.view.y[r]))
                .collect();
            children.push(self.node(shell.labels, &child_rows)?);
        }
        Ok(HomerNode {
            labels,
            children,
            model: Some(model),
        })
    }
}

impl Homer {
    pub(crate) fn fit(view: &TrainView<'_>, spec: &ClassifierSpec, branching: usize, seed: u64) -> Result<Self> {
        let rows: Vec<usize> = (0..view.x.len()).collect();
        let mut b = Builder {
            view,
            spec,
            branching,
            seed,
            next_id: 0,
        };
        let root = b.node((0..view.width).collect(), &rows)?;
        Ok(Self {
            width: view.width,
            branching,
            root,
        })
    }

    pub fn root(&self) -> &HomerNode {
        &self.root
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    /// Each label scores the smallest activation on its root-to-leaf path.
    /// Subtrees below an inactive child are not evaluated; their labels take
    /// that child's (sub-threshold) activation.
    pub(crate) fn scores(&self, x: &SparseVec, threshold: f64) -> Vec<f64> {
        let mut scores = vec![0.0; self.width];
        descend(&self.root, x, 1.0, threshold, &mut scores);
        scores
    }
}

fn descend(node: &HomerNode, x: &SparseVec, upper: f64, threshold: f64, scores: &mut [f64]) {
    let Some(model) = &node.model else {
        node.fill(scores, upper);
        return;
    };
    for (child, s) in node.children.iter().zip(model.scores(x)) {
        let v = upper.min(s);
        if v >= threshold {
            descend(child, x, v, threshold, scores);
        } else {
            child.fill(scores, v);
        }
    }
}

/// Partition `labels` into `b` clusters whose sizes differ by at most one,
/// by k-means over the labels' occurrence vectors on `rows` with capacity
/// constrained assignment. Clusters come out ordered by smallest label.
pub(crate) fn balanced_clusters(
    labels: &[usize],
    rows: &[usize],
    sets: &[LabelSet],
    b: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    let n = labels.len();
    assert!(b >= 2 && n > b);
    let vectors: Vec<Vec<f64>> = labels
        .iter()
        .map(|&j| rows.iter().map(|&r| f64::from(u8::from(sets[r].contains(j)))).collect())
        .collect();
    let capacity: Vec<usize> = (0..b).map(|c| n / b + usize::from(c < n % b)).collect();

    let mut init: Vec<usize> = (0..n).collect();
    init.shuffle(&mut crate::rng::rng(seed));
    let mut centers: Vec<Vec<f64>> = init[..b].iter().map(|&i| vectors[i].clone()).collect();
    let mut assign: Vec<usize> = Vec::new();
    for _ in 0..KMEANS_ROUNDS {
        let mut triples: Vec<(f64, usize, usize)> = (0..n)
            .flat_map(|i| {
                let v = &vectors[i];
                centers
                    .iter()
                    .enumerate()
                    .map(move |(c, ctr)| (v.iter().zip(ctr).map(|(a, b)| (a - b) * (a - b)).sum(), i, c))
            })
            .collect();
        triples.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut next = vec![usize::MAX; n];
        let mut load = vec![0usize; b];
        for (_, i, c) in triples {
            if next[i] == usize::MAX && load[c] < capacity[c] {
                next[i] = c;
                load[c] += 1;
            }
        }
        if next == assign {
            break;
        }
        assign = next;
        for (c, ctr) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assign[i] == c).collect();
            for (k, v) in ctr.iter_mut().enumerate() {
                *v = members.iter().map(|&i| vectors[i][k]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = (0..b)
        .map(|c| (0..n).filter(|&i| assign[i] == c).map(|i| labels[i]).collect())
        .collect();
    groups.iter_mut().for_each(|g| g.sort_unstable());
    groups.sort();
    groups
}
