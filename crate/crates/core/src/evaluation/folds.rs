use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabelSet, MultiLabelDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldMode {
    /// Seeded shuffle, then round-robin.
    #[default]
    Random,
    /// Iterative stratification: rarest labels are distributed first, each
    /// instance going to the fold that most lacks its label.
    Stratified,
}

/// Assignment of every instance to one of `n_folds` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    n_folds: usize,
    seed: u64,
    mode: FoldMode,
    assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> FoldMode {
        self.mode
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_folds];
        self.assignment.iter().for_each(|&f| s[f] += 1);
        s
    }

    /// Held-out indices of fold `f`, ascending.
    pub fn test_indices(&self, f: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == f)
            .collect()
    }

    /// Training indices for fold `f`, ascending.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != f)
            .collect()
    }
}

pub fn make_folds(ds: &MultiLabelDataset, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    make_folds_with(ds, n_folds, seed, FoldMode::Random)
}

pub fn make_folds_with(ds: &MultiLabelDataset, n_folds: usize, seed: u64, mode: FoldMode) -> Result<FoldPlan> {
    let n = ds.len();
    if n_folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {n_folds}")));
    }
    if n_folds > n {
        return Err(Error::invalid(format!("{n_folds} folds for {n} instances")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::rng::stream(seed, 0));
    let assignment = match mode {
        FoldMode::Random => {
            let mut a = vec![0; n];
            for (pos, &i) in order.iter().enumerate() {
                a[i] = pos % n_folds;
            }
            a
        }
        FoldMode::Stratified => stratify(&ds.label_sets(), &order, n_folds),
    };
    Ok(FoldPlan {
        n_folds,
        seed,
        mode,
        assignment,
    })
}

/// Iterative stratification under fixed fold capacities (sizes differ by at
/// most one). `order` fixes the visiting order inside each label.
fn stratify(sets: &[LabelSet], order: &[usize], n_folds: usize) -> Vec<usize> {
    let n = sets.len();
    let width = sets.first().map_or(0, |s| s.width());
    let capacity: Vec<usize> = (0..n_folds)
        .map(|f| n / n_folds + usize::from(f < n % n_folds))
        .collect();
    let desired: Vec<Vec<f64>> = capacity
        .iter()
        .map(|&c| {
            (0..width)
                .map(|j| c as f64 / n as f64 * sets.iter().filter(|s| s.contains(j)).count() as f64)
                .collect()
        })
        .collect();
    let remaining: Vec<usize> = (0..width)
        .map(|j| sets.iter().filter(|s| s.contains(j)).count())
        .collect();

    let mut st = State {
        assignment: vec![usize::MAX; n],
        capacity,
        desired,
        remaining,
    };

    while let Some(j) = (0..width)
        .filter(|&j| st.remaining[j] > 0)
        .min_by_key(|&j| (st.remaining[j], j))
    {
        let members: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| st.assignment[i] == usize::MAX && sets[i].contains(j))
            .collect();
        for i in members {
            let fold = (0..n_folds)
                .filter(|&f| st.capacity[f] > 0)
                .max_by(|&a, &b| {
                    st.desired[a][j]
                        .total_cmp(&st.desired[b][j])
                        .then(st.capacity[a].cmp(&st.capacity[b]))
                        .then(b.cmp(&a))
                })
                .expect("capacities sum to the instance count");
            st.place(i, fold, sets);
        }
    }
    for &i in order {
        if st.assignment[i] == usize::MAX {
            let fold = (0..n_folds)
                .max_by(|&a, &b| st.capacity[a].cmp(&st.capacity[b]).then(b.cmp(&a)))
                .expect("at least two folds");
            st.place(i, fold, sets);
        }
    }
    st.assignment
}

struct State {
    assignment: Vec<usize>,
    capacity: Vec<usize>,
    /// Per fold and label, how many more instances of the label the fold should take.
    desired: Vec<Vec<f64>>,
    /// Unassigned instances per label.
    remaining: Vec<usize>,
}

impl State {
    fn place(&mut self, i: usize, fold: usize, sets: &[LabelSet]) {
        self.assignment[i] = fold;
        self.capacity[fold] -= 1;
        for l in sets[i].iter() {
            self.desired[fold][l] -= 1.0;
            self.remaining[l] -= 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    #[test]
    fn sizes_for_two_thousand() {
        let ds = synthetic::indicator_dataset(2000, 2, 0, 0);
        let plan = make_folds(&ds, 3, 1).unwrap();
        let mut sizes = plan.sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![666, 667, 667]);
    }

    #[test]
    fn seeded_plans() {
        let ds = synthetic::indicator_dataset(100, 2, 0, 0);
        assert_eq!(make_folds(&ds, 3, 5).unwrap(), make_folds(&ds, 3, 5).unwrap());
        assert_ne!(make_folds(&ds, 3, 5).unwrap(), make_folds(&ds, 3, 6).unwrap());
        assert!(make_folds(&ds, 1, 0).is_err());
        assert!(make_folds(&ds, 101, 0).is_err());
    }

    #[test]
    fn folds_partition_the_data() {
        let ds = synthetic::indicator_dataset(50, 3, 0, 2);
        for mode in [FoldMode::Random, FoldMode::Stratified] {
            let plan = make_folds_with(&ds, 4, 3, mode).unwrap();
            let mut all: Vec<usize> = (0..4).flat_map(|f| plan.test_indices(f)).collect();
            all.sort_unstable();
            assert_eq!(all, (0..50).collect::<Vec<_>>());
            let sizes = plan.sizes();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for f in 0..4 {
                assert_eq!(plan.train_indices(f).len() + plan.test_indices(f).len(), 50);
            }
        }
    }

    #[test]
    fn stratified_label_frequency() {
        use crate::corpus::{MultiLabelDataset, MultiLabelInstance};
        let ds = synthetic::indicator_dataset(600, 2, 0, 0);
        // exactly 180 of 600 instances carry label 0
        let instances: Vec<MultiLabelInstance> = ds
            .instances()
            .iter()
            .enumerate()
            .map(|(i, inst)| MultiLabelInstance {
                labels: LabelSet::from_flags(&[(i * 7919) % 600 < 180, inst.labels.contains(1)]),
                ..inst.clone()
            })
            .collect();
        let ds = MultiLabelDataset::new(ds.space().clone(), instances, ds.feature_dim()).unwrap();
        let plan = make_folds_with(&ds, 3, 9, FoldMode::Stratified).unwrap();
        for f in 0..3 {
            let test = plan.test_indices(f);
            let freq =
                test.iter().filter(|&&i| ds.instances()[i].labels.contains(0)).count() as f64 / test.len() as f64;
            assert!((freq - 0.30).abs() <= 0.05, "fold {f}: {freq}");
        }
    }
}
