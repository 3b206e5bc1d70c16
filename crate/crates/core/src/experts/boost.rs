use alloc::vec::Vec;

#[allow(unused_imports)] // inherent std methods shadow it when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::tree::{Tree, TreeParams};
use crate::encoder::softmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub stump_depth: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_rounds: 50,
            stump_depth: 1,
        }
    }
}

/// Multi-class SAMME ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boosted {
    pub stumps: Vec<Tree>,
    pub alphas: Vec<f64>,
    /// Weighted training error of each admitted round.
    pub errors: Vec<f64>,
}

pub(crate) fn fit_samme(x: &[Vec<f64>], y: &[usize], k: usize, params: &BoostParams) -> Boosted {
    let n = x.len();
    let kf = k as f64;
    let limit = 1.0 - 1.0 / kf;
    let stump_params = TreeParams {
        max_depth: Some(params.stump_depth),
        ..TreeParams::default()
    };
    // stumps examine every feature, so this stream is never drawn from
    let mut unused = crate::rng::stream(0, "samme", 0);
    let mut w = alloc::vec![1.0 / n as f64; n];
    let mut out = Boosted {
        stumps: Vec::new(),
        alphas: Vec::new(),
        errors: Vec::new(),
    };
    for _ in 0..params.n_rounds {
        let stump = Tree::fit(x, y, k, &w, &stump_params, &mut unused);
        let wrong: Vec<bool> = x.iter().zip(y).map(|(r, &c)| stump.predict(r) != c).collect();
        let total: f64 = w.iter().sum();
        let err = w.iter().zip(&wrong).filter(|(_, &m)| m).map(|(v, _)| v).sum::<f64>() / total;
        if err <= 0.0 {
            // a perfect learner ends boosting with unit weight
            out.stumps.push(stump);
            out.alphas.push(1.0);
            out.errors.push(0.0);
            break;
        }
        if err >= limit {
            break;
        }
        let alpha = ((1.0 - err) / err).ln() + (kf - 1.0).ln();
        for (v, &m) in w.iter_mut().zip(&wrong) {
            if m {
                *v *= alpha.exp();
            }
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        out.stumps.push(stump);
        out.alphas.push(alpha);
        out.errors.push(err);
    }
    out
}

impl Boosted {
    /// Symmetric SAMME decision: each round adds `alpha` to its predicted
    /// class and `-alpha / (K-1)` to the others, normalised by the alpha sum.
    pub fn decision(&self, k: usize, row: &[f64]) -> Vec<f64> {
        let off = -1.0 / (k as f64 - 1.0);
        let mut d = alloc::vec![0.0; k];
        for (s, a) in self.stumps.iter().zip(&self.alphas) {
            let c = s.predict(row);
            for (j, v) in d.iter_mut().enumerate() {
                *v += a * if j == c { 1.0 } else { off };
            }
        }
        let total: f64 = self.alphas.iter().sum();
        if total > 0.0 {
            d.iter_mut().for_each(|v| *v /= total);
        }
        d
    }

    pub fn proba(&self, k: usize, row: &[f64]) -> Vec<f64> {
        let scale = k as f64 - 1.0;
        let d: Vec<f64> = self.decision(k, row).into_iter().map(|v| v / scale).collect();
        softmax(&d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn three_bands() -> (Vec<Vec<f64>>, Vec<usize>) {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let y = (0..30).map(|i| i / 10).collect();
        (x, y)
    }

    #[test]
    fn rounds_respect_the_admission_bound() {
        let (x, y) = three_bands();
        let b = fit_samme(&x, &y, 3, &BoostParams::default());
        assert!(!b.stumps.is_empty());
        assert!(b.errors.iter().all(|&e| e < 2.0 / 3.0));
        let acc = x
            .iter()
            .zip(&y)
            .filter(|(r, &c)| crate::encoder::argmax(&b.proba(3, r)) == c)
            .count();
        assert_eq!(acc, 30);
    }

    #[test]
    fn perfect_stump_stops_early() {
        let x = vec![vec![0.0], vec![1.0]];
        let b = fit_samme(&x, &[0, 1], 2, &BoostParams::default());
        assert_eq!(b.alphas, vec![1.0]);
        let p = b.proba(2, &[1.0]);
        assert!(p[1] > p[0]);
    }
}
