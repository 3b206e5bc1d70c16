use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 5 }
    }
}

/// Uniform-vote Euclidean nearest neighbours over the stored training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbours {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

impl Neighbours {
    /// Vote fractions among the `k` nearest rows; equal distances resolve to
    /// the earlier training row.
    pub fn proba(&self, k: usize, classes: usize, row: &[f64]) -> Vec<f64> {
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let k = k.min(d.len());
        let mut p = alloc::vec![0.0; classes];
        for &(_, i) in &d[..k] {
            p[self.y[i]] += 1.0;
        }
        p.iter_mut().for_each(|v| *v /= k as f64);
        p
    }
}
