use serde::{Deserialize, Serialize};

use super::SingleLabelDataset;
use crate::error::{Error, Result};
use crate::sparse::SparseVec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    #[default]
    Euclidean,
    Cosine,
}

impl Distance {
    pub fn between(&self, a: &SparseVec, b: &SparseVec) -> f64 {
        match self {
            Distance::Euclidean => a.sq_distance(b).sqrt(),
            Distance::Cosine => a.cosine_distance(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnParams {
    pub k: usize,
    pub metric: Distance,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self {
            k: 5,
            metric: Distance::Euclidean,
        }
    }
}

impl KnnParams {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("kNN needs k >= 1"));
        }
        Ok(())
    }
}

/// The `k` nearest stored points to `query`, sorted by `(distance, index)`.
pub fn knn_neighbors(points: &[SparseVec], query: &SparseVec, k: usize, metric: Distance) -> Result<Vec<(usize, f64)>> {
    knn_neighbors_excluding(points, query, k, metric, None)
}

/// As [`knn_neighbors`], skipping the point at index `exclude`.
pub fn knn_neighbors_excluding(
    points: &[SparseVec],
    query: &SparseVec,
    k: usize,
    metric: Distance,
    exclude: Option<usize>,
) -> Result<Vec<(usize, f64)>> {
    let available = points.len() - usize::from(exclude.is_some_and(|e| e < points.len()));
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > available {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {available} available points"
        )));
    }
    let mut all: Vec<(usize, f64)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, p)| (i, metric.between(p, query)))
        .collect();
    let order = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, order);
        all.truncate(k);
    }
    all.sort_by(order);
    Ok(all)
}

/// Majority vote over the `k` nearest training points; the vote shares are the
/// class probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnClassifier {
    k: usize,
    metric: Distance,
    n_classes: usize,
    points: Vec<SparseVec>,
    classes: Vec<usize>,
}

impl KnnClassifier {
    pub(crate) fn fit(params: &KnnParams, data: &SingleLabelDataset<'_>) -> Self {
        Self {
            k: params.k.min(data.len()),
            metric: params.metric,
            n_classes: data.n_classes,
            points: data.x.iter().map(|x| x.clone().into_owned()).collect(),
            classes: data.y.clone(),
        }
    }

    pub(crate) fn predict_proba(&self, x: &SparseVec) -> Vec<f64> {
        let neighbors =
            knn_neighbors(&self.points, x, self.k, self.metric).expect("k is clamped to the training size at fit");
        let mut p = vec![0.0; self.n_classes];
        for (i, _) in &neighbors {
            p[self.classes[*i]] += 1.0;
        }
        let n = neighbors.len() as f64;
        p.iter_mut().for_each(|v| *v /= n);
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(coords: &[(f64, f64)]) -> Vec<SparseVec> {
        coords
            .iter()
            .map(|&(a, b)| SparseVec::from_dense(&[a, b]).unwrap())
            .collect()
    }

    #[test]
    fn nearest_two_on_a_line() {
        let p = pts(&[(0.0, 0.0), (1.0, 0.0), (5.0, 0.0)]);
        let q = SparseVec::from_dense(&[0.4, 0.0]).unwrap();
        let nn = knn_neighbors(&p, &q, 2, Distance::Euclidean).unwrap();
        assert_eq!(nn.iter().map(|n| n.0).collect::<Vec<_>>(), [0, 1]);
        assert!((nn[0].1 - 0.4).abs() < 1e-12);
        assert!((nn[1].1 - 0.6).abs() < 1e-12);
    }

    #[test]
    fn exact_match_has_zero_distance() {
        let p = pts(&[(0.0, 0.0), (1.0, 0.0), (5.0, 0.0)]);
        let nn = knn_neighbors(&p, &p[2], 1, Distance::Euclidean).unwrap();
        assert_eq!(nn, vec![(2, 0.0)]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let p = pts(&[(3.0, 3.0), (1.0, 0.0), (-1.0, 0.0)]);
        let q = SparseVec::default();
        let nn = knn_neighbors(&p, &q, 2, Distance::Euclidean).unwrap();
        assert_eq!(nn, vec![(1, 1.0), (2, 1.0)]);
    }

    #[test]
    fn k_too_large() {
        let p = pts(&[(0.0, 0.0)]);
        assert!(knn_neighbors(&p, &p[0], 2, Distance::Euclidean).is_err());
        assert!(knn_neighbors_excluding(&p, &p[0], 1, Distance::Euclidean, Some(0)).is_err());
    }

    #[test]
    fn k1_exact_match_probability_one() {
        let x = pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]);
        let data = SingleLabelDataset::borrowed(&x, vec![0, 1, 0], 2, 2).unwrap();
        let m = KnnClassifier::fit(
            &KnnParams {
                k: 1,
                ..KnnParams::default()
            },
            &data,
        );
        assert_eq!(m.predict_proba(&x[1]), vec![0.0, 1.0]);
    }

    proptest! {
        #[test]
        fn agrees_with_exhaustive_sort(
            coords in proptest::collection::vec((-3i32..3, -3i32..3), 1..40),
            q in (-3i32..3, -3i32..3),
            k in 1usize..10,
        ) {
            let p: Vec<SparseVec> = coords.iter()
                .map(|&(a, b)| SparseVec::from_dense(&[a as f64, b as f64]).unwrap())
                .collect();
            let q = SparseVec::from_dense(&[q.0 as f64, q.1 as f64]).unwrap();
            let k = k.min(p.len());
            let got = knn_neighbors(&p, &q, k, Distance::Euclidean).unwrap();
            let mut all: Vec<(usize, f64)> = p.iter().enumerate()
                .map(|(i, x)| (i, x.sq_distance(&q).sqrt()))
                .collect();
            all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            all.truncate(k);
            prop_assert_eq!(got, all);
        }
    }
}
