use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SingleLabelDataset;
use crate::error::{Error, Result};
use crate::sparse::SparseVec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    /// `ceil(sqrt(d))`
    #[default]
    Sqrt,
    All,
    #[serde(untagged)]
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, dim: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => (dim as f64).sqrt().ceil() as usize,
            MaxFeatures::All => dim,
            MaxFeatures::Count(n) => n,
        }
        .max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or cannot be split.
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            max_features: MaxFeatures::Sqrt,
            min_samples_split: 2,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::invalid("random forest needs at least one tree"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::invalid("min_samples_split must be at least 2"));
        }
        if self.max_features == MaxFeatures::Count(0) {
            return Err(Error::invalid("max_features must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(Vec<f64>),
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, x: &SparseVec) -> &[f64] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf(p) => return p,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x.get(*feature) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub(crate) fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left as usize).max(go(nodes, *right as usize)),
            }
        }
        go(&self.nodes, 0)
    }
}

/// Bagged CART trees with Gini impurity; the forest's probability is the mean of
/// the leaf class distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    n_classes: usize,
    trees: Vec<Tree>,
}

impl RandomForest {
    pub(crate) fn fit(params: &ForestParams, data: &SingleLabelDataset<'_>, seed: u64) -> Self {
        let columns = Columns::build(data);
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = crate::rng::stream(seed, t as u64);
                TreeBuilder::new(params, data, &columns).grow(&mut rng)
            })
            .collect();
        Self {
            n_classes: data.n_classes,
            trees,
        }
    }

    pub(crate) fn predict_proba(&self, x: &SparseVec) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes];
        for tree in &self.trees {
            for (acc, v) in p.iter_mut().zip(tree.leaf(x)) {
                *acc += v;
            }
        }
        let n = self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v /= n);
        p
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }
}

/// Column-major copy of the training matrix: per feature, `(row, value)` pairs.
struct Columns {
    cols: Vec<Vec<(u32, f64)>>,
}

impl Columns {
    fn build(data: &SingleLabelDataset<'_>) -> Self {
        let mut cols = vec![Vec::new(); data.dim];
        for (row, x) in data.x.iter().enumerate() {
            for (f, v) in x.iter() {
                if (f as usize) < data.dim {
                    cols[f as usize].push((row as u32, v));
                }
            }
        }
        Self { cols }
    }
}

struct Candidate {
    feature: u32,
    threshold: f64,
    score: f64,
}

struct TreeBuilder<'a, 'd> {
    params: &'a ForestParams,
    data: &'a SingleLabelDataset<'d>,
    columns: &'a Columns,
    max_features: usize,
    /// Bootstrap multiplicity of every row.
    weight: Vec<f64>,
    /// `stamp[row] == node_stamp` marks membership of the current node.
    stamp: Vec<u32>,
    feature_stamp: Vec<u32>,
    next_stamp: u32,
    nodes: Vec<Node>,
}

impl<'a, 'd> TreeBuilder<'a, 'd> {
    fn new(params: &'a ForestParams, data: &'a SingleLabelDataset<'d>, columns: &'a Columns) -> Self {
        Self {
            params,
            data,
            columns,
            max_features: params.max_features.resolve(data.dim),
            weight: vec![0.0; data.len()],
            stamp: vec![0; data.len()],
            feature_stamp: vec![0; data.dim],
            next_stamp: 0,
            nodes: Vec::new(),
        }
    }

    fn grow(mut self, rng: &mut ChaCha8Rng) -> Tree {
        let n = self.data.len();
        if self.params.bootstrap {
            for _ in 0..n {
                self.weight[rng.random_range(0..n)] += 1.0;
            }
        } else {
            self.weight.iter_mut().for_each(|w| *w = 1.0);
        }
        let root: Vec<u32> = (0..n as u32).filter(|&i| self.weight[i as usize] > 0.0).collect();

        // (node slot, rows, depth)
        let mut stack = vec![(0u32, root, 0usize)];
        self.nodes.push(Node::Leaf(Vec::new()));
        while let Some((slot, rows, depth)) = stack.pop() {
            let counts = self.class_weights(&rows);
            let total: f64 = counts.iter().sum();
            let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
            let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
            let too_small = total < self.params.min_samples_split as f64;
            let split = if pure || depth_capped || too_small {
                None
            } else {
                self.best_split(&rows, &counts, rng)
            };
            match split {
                None => {
                    self.nodes[slot as usize] = Node::Leaf(counts.iter().map(|c| c / total).collect());
                }
                Some(c) => {
                    let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
                        .iter()
                        .partition(|&&r| self.data.x[r as usize].get(c.feature) <= c.threshold);
                    let left = self.nodes.len() as u32;
                    self.nodes.push(Node::Leaf(Vec::new()));
                    self.nodes.push(Node::Leaf(Vec::new()));
                    self.nodes[slot as usize] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    stack.push((left + 1, right_rows, depth + 1));
                    stack.push((left, left_rows, depth + 1));
                }
            }
        }
        Tree { nodes: self.nodes }
    }

    fn class_weights(&self, rows: &[u32]) -> Vec<f64> {
        let mut counts = vec![0.0; self.data.n_classes];
        for &r in rows {
            counts[self.data.y[r as usize]] += self.weight[r as usize];
        }
        counts
    }

    fn fresh_stamp(&mut self) -> u32 {
        self.next_stamp += 1;
        self.next_stamp
    }

    /// Inspect features present in the node in random order until at least
    /// `max_features` were looked at and one valid split was found.
    fn best_split(&mut self, rows: &[u32], counts: &[f64], rng: &mut ChaCha8Rng) -> Option<Candidate> {
        let node = self.fresh_stamp();
        for &r in rows {
            self.stamp[r as usize] = node;
        }
        let mut pool = Vec::new();
        for &r in rows {
            for &f in self.data.x[r as usize].indices() {
                let f = f as usize;
                if f < self.feature_stamp.len() && self.feature_stamp[f] != node {
                    self.feature_stamp[f] = node;
                    pool.push(f as u32);
                }
            }
        }
        pool.sort_unstable();

        let mut best: Option<Candidate> = None;
        let mut visited = 0;
        let mut remaining = pool.len();
        while remaining > 0 && (visited < self.max_features || best.is_none()) {
            let pick = rng.random_range(0..remaining);
            pool.swap(pick, remaining - 1);
            remaining -= 1;
            let feature = pool[remaining];
            visited += 1;
            if let Some(c) = self.evaluate(feature, rows, counts, node) {
                if best.as_ref().is_none_or(|b| c.score < b.score) {
                    best = Some(c);
                }
            }
        }
        best
    }

    /// Lowest weighted child Gini over the thresholds of one feature.
    fn evaluate(&self, feature: u32, rows: &[u32], counts: &[f64], node: u32) -> Option<Candidate> {
        let column = &self.columns.cols[feature as usize];
        let mut entries: Vec<(f64, usize, f64)> = if rows.len() * 8 < column.len() {
            rows.iter()
                .filter_map(|&r| {
                    let v = self.data.x[r as usize].get(feature);
                    (v != 0.0).then(|| (v, self.data.y[r as usize], self.weight[r as usize]))
                })
                .collect()
        } else {
            column
                .iter()
                .filter(|(r, v)| self.stamp[*r as usize] == node && *v != 0.0)
                .map(|&(r, v)| (v, self.data.y[r as usize], self.weight[r as usize]))
                .collect()
        };
        let mut zero_counts = counts.to_vec();
        for &(_, y, w) in &entries {
            zero_counts[y] -= w;
        }
        let zero_total: f64 = zero_counts.iter().sum();
        if zero_total > 1e-9 {
            entries.push((0.0, usize::MAX, zero_total));
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));

        let total: f64 = counts.iter().sum();
        let mut left = vec![0.0; counts.len()];
        let mut left_total = 0.0;
        let mut best: Option<Candidate> = None;
        for i in 0..entries.len() - 1 {
            let (v, y, w) = entries[i];
            if y == usize::MAX {
                for (l, z) in left.iter_mut().zip(&zero_counts) {
                    *l += z;
                }
            } else {
                left[y] += w;
            }
            left_total += w;
            let next = entries[i + 1].0;
            if next <= v {
                continue;
            }
            let right_total = total - left_total;
            let score =
                (weighted_gini(&left, left_total) + weighted_gini_complement(counts, &left, right_total)) / total;
            if best.as_ref().is_none_or(|b| score < b.score) {
                best = Some(Candidate {
                    feature,
                    threshold: v + (next - v) / 2.0,
                    score,
                });
            }
        }
        best
    }
}

/// `n * gini(counts)` for a child holding `n` weight.
fn weighted_gini(counts: &[f64], n: f64) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|c| c * c).sum();
    n - sq / n
}

fn weighted_gini_complement(total: &[f64], left: &[f64], n: f64) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    let sq: f64 = total
        .iter()
        .zip(left)
        .map(|(t, l)| {
            let r = t - l;
            r * r
        })
        .sum();
    n - sq / n
}
