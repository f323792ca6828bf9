use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse feature vector with strictly increasing indices and finite weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVec {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVec {
    pub fn new(indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::invalid(format!(
                "sparse vector has {} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("sparse indices must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sparse vector".into()));
        }
        Ok(Self { indices, values })
    }

    /// Build from unordered pairs; duplicate indices are summed.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Result<Self> {
        pairs.sort_by_key(|p| p.0);
        let mut indices: Vec<u32> = Vec::with_capacity(pairs.len());
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            if indices.last() == Some(&i) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(i);
                values.push(v);
            }
        }
        Self::new(indices, values)
    }

    /// Dense slice to sparse, dropping exact zeros.
    pub fn from_dense(dense: &[f64]) -> Result<Self> {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .unzip();
        Self::new(indices, values)
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// One past the largest stored index, or 0 when empty.
    pub fn dim_hint(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }

    pub fn get(&self, index: u32) -> f64 {
        match self.indices.binary_search(&index) {
            Ok(p) => self.values[p],
            Err(_) => 0.0,
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (mut a, mut b) = (0, 0);
        let mut acc = 0.0;
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter()
            .filter(|(i, _)| (*i as usize) < dense.len())
            .map(|(i, v)| v * dense[i as usize])
            .sum()
    }

    /// Squared Euclidean distance, accumulated term by term over the union of
    /// supports so that identical vectors are at distance exactly 0.
    pub fn sq_distance(&self, other: &SparseVec) -> f64 {
        let (mut a, mut b) = (0, 0);
        let mut acc = 0.0;
        while a < self.indices.len() || b < other.indices.len() {
            let ia = self.indices.get(a).copied().unwrap_or(u32::MAX);
            let ib = other.indices.get(b).copied().unwrap_or(u32::MAX);
            let d = if ia < ib {
                a += 1;
                self.values[a - 1]
            } else if ib < ia {
                b += 1;
                other.values[b - 1]
            } else {
                a += 1;
                b += 1;
                self.values[a - 1] - other.values[b - 1]
            };
            acc += d * d;
        }
        acc
    }

    pub fn cosine_distance(&self, other: &SparseVec) -> f64 {
        let na = self.sq_norm().sqrt();
        let nb = other.sq_norm().sqrt();
        if na == 0.0 || nb == 0.0 {
            return if na == nb { 0.0 } else { 1.0 };
        }
        1.0 - self.dot(other) / (na * nb)
    }

    /// Scale to unit L2 norm; zero vectors are left untouched.
    pub fn normalize(&mut self) {
        let n = self.sq_norm().sqrt();
        if n > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= n);
        }
    }

    /// Copy with extra entries appended at indices `offset + k` for every set
    /// flag `k`. All appended indices must lie beyond the current support.
    pub fn with_flags(&self, offset: u32, flags: &[bool]) -> SparseVec {
        let mut out = self.clone();
        // features beyond `offset` would break ordering; callers pass offset >= dim
        out.indices.retain(|&i| i < offset);
        out.values.truncate(out.indices.len());
        for (k, &on) in flags.iter().enumerate() {
            if on {
                out.indices.push(offset + k as u32);
                out.values.push(1.0);
            }
        }
        out
    }

    /// Drop every entry with index >= `dim`.
    pub fn truncated(&self, dim: usize) -> SparseVec {
        let keep = self.indices.partition_point(|&i| (i as usize) < dim);
        SparseVec {
            indices: self.indices[..keep].to_vec(),
            values: self.values[..keep].to_vec(),
        }
    }
}
