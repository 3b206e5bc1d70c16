use alloc::vec::Vec;

#[allow(unused_imports)] // inherent std methods shadow it when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::encoder::softmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    /// RBF width; `None` picks `1 / (d · Var(X))` from the training data.
    pub gamma: Option<f64>,
    /// Stop once the maximal KKT violation falls below this.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            gamma: None,
            tolerance: 1e-3,
            max_iter: 10_000_000,
        }
    }
}

/// One binary machine: `f(x) = Σ coef_i K(sv_i, x) − rho`, with
/// `coef_i = alpha_i · y_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub sv_index: Vec<usize>,
    pub support: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// One-vs-rest RBF machines, one per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvrSvm {
    pub gamma: f64,
    pub c: f64,
    pub machines: Vec<BinarySvm>,
}

pub fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    (-gamma * d2).exp()
}

/// `1 / (d · Var(X))` over all entries; 1 when the data is constant.
pub fn scale_gamma(x: &[Vec<f64>]) -> f64 {
    let d = x[0].len();
    let n = (x.len() * d) as f64;
    let mean = x.iter().flatten().sum::<f64>() / n;
    let var = x.iter().flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0
    }
}

const TAU: f64 = 1e-12;

/// SMO on `min ½αᵀQα − Σα` s.t. `0 ≤ α ≤ C`, `yᵀα = 0`, with second-order
/// working-set selection. `kernel` is the full Gram matrix, row-major.
fn smo(kernel: &[f64], y: &[f64], params: &SvmParams) -> (Vec<f64>, f64, usize, bool) {
    let n = y.len();
    let c = params.c;
    let k = |i: usize, j: usize| kernel[i * n + j];
    let mut alpha = alloc::vec![0.0; n];
    let mut grad = alloc::vec![-1.0; n];
    let mut iter = 0;
    let mut converged = false;
    while iter < params.max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            if up && v >= gmax {
                gmax = v;
                i = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        if i != usize::MAX {
            for t in 0..n {
                let low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
                if !low {
                    continue;
                }
                let v = y[t] * grad[t];
                if v >= gmax2 {
                    gmax2 = v;
                }
                let diff = gmax + v;
                if diff > 0.0 {
                    let mut quad = k(i, i) + k(t, t) - 2.0 * k(i, t);
                    if quad <= 0.0 {
                        quad = TAU;
                    }
                    let obj = -diff * diff / quad;
                    if obj <= best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax + gmax2 < params.tolerance {
            converged = true;
            break;
        }
        iter += 1;

        let (ai, aj) = (alpha[i], alpha[j]);
        let mut quad = k(i, i) + k(j, j) - 2.0 * k(i, j);
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k(t, i) * di + y[j] * k(t, j) * dj);
        }
    }

    // bias: mean over free vectors, else the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum += yg;
            free += 1;
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
    (alpha, rho, iter, converged)
}

impl BinarySvm {
    pub fn decision(&self, gamma: f64, row: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * rbf(gamma, s, row))
            .sum::<f64>()
            - self.rho
    }

    /// Per-sample KKT violation on the training set, in margin units:
    /// `α = 0` needs `y f ≥ 1`, `0 < α < C` needs `y f = 1`, `α = C` needs
    /// `y f ≤ 1`. `y` holds ±1.
    pub fn kkt_violations(&self, gamma: f64, c: f64, x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let mut alpha = alloc::vec![0.0; x.len()];
        for (&i, coef) in self.sv_index.iter().zip(&self.coef) {
            alpha[i] = coef.abs();
        }
        x.iter()
            .zip(y)
            .zip(&alpha)
            .map(|((r, &yt), &a)| {
                let m = yt * self.decision(gamma, r);
                if a <= 0.0 {
                    (1.0 - m).max(0.0)
                } else if a >= c {
                    (m - 1.0).max(0.0)
                } else {
                    (1.0 - m).abs()
                }
            })
            .collect()
    }
}

pub(crate) fn fit_ovr(x: &[Vec<f64>], y: &[usize], k: usize, params: &SvmParams) -> OvrSvm {
    let n = x.len();
    let gamma = params.gamma.unwrap_or_else(|| scale_gamma(x));
    let mut kernel = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = rbf(gamma, &x[i], &x[j]);
            kernel[i * n + j] = v;
            kernel[j * n + i] = v;
        }
    }
    let machines = (0..k)
        .map(|class| {
            let yb: Vec<f64> = y.iter().map(|&c| if c == class { 1.0 } else { -1.0 }).collect();
            let (alpha, rho, iterations, converged) = smo(&kernel, &yb, params);
            let sv_index: Vec<usize> = (0..n).filter(|&i| alpha[i] > 0.0).collect();
            BinarySvm {
                support: sv_index.iter().map(|&i| x[i].clone()).collect(),
                coef: sv_index.iter().map(|&i| alpha[i] * yb[i]).collect(),
                sv_index,
                rho,
                iterations,
                converged,
            }
        })
        .collect();
    OvrSvm {
        gamma,
        c: params.c,
        machines,
    }
}

impl OvrSvm {
    pub fn decisions(&self, row: &[f64]) -> Vec<f64> {
        self.machines.iter().map(|m| m.decision(self.gamma, row)).collect()
    }

    /// Softmax over the one-vs-rest decision values.
    pub fn proba(&self, row: &[f64]) -> Vec<f64> {
        softmax(&self.decisions(row))
    }

    /// Largest per-sample KKT violation over every machine.
    pub fn max_kkt_violation(&self, x: &[Vec<f64>], y: &[usize]) -> f64 {
        let mut worst: f64 = 0.0;
        for (class, m) in self.machines.iter().enumerate() {
            let yb: Vec<f64> = y.iter().map(|&c| if c == class { 1.0 } else { -1.0 }).collect();
            for v in m.kkt_violations(self.gamma, self.c, x, &yb) {
                worst = worst.max(v);
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;

    #[test]
    fn separable_blobs() {
        let mut r = crate::rng::stream(1, "svm", 0);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..60 {
            let c = i % 3;
            x.push(vec![c as f64 * 3.0 + r.random_range(-0.5..0.5), r.random_range(-0.5..0.5)]);
            y.push(c);
        }
        let m = fit_ovr(&x, &y, 3, &SvmParams::default());
        assert!(m.machines.iter().all(|b| b.converged));
        assert!(m.max_kkt_violation(&x, &y) <= 1e-3);
        for (row, &c) in x.iter().zip(&y) {
            assert_eq!(crate::encoder::argmax(&m.proba(row)), c);
        }
    }

    #[test]
    fn dual_stays_feasible() {
        let mut r = crate::rng::stream(2, "svm", 0);
        let x: Vec<Vec<f64>> = (0..40).map(|_| vec![r.random(), r.random(), r.random()]).collect();
        let y: Vec<usize> = (0..40).map(|_| r.random_range(0..2)).collect();
        let m = fit_ovr(&x, &y, 2, &SvmParams::default());
        for b in &m.machines {
            assert!(b.coef.iter().map(|c| c.abs()).all(|a| a > 0.0 && a <= 1.0 + 1e-12));
            assert!(b.coef.iter().sum::<f64>().abs() < 1e-9);
        }
        assert!(m.max_kkt_violation(&x, &y) <= 1e-3);
    }

    #[test]
    fn gamma_scales_with_variance() {
        let x = vec![vec![0.0, 2.0], vec![2.0, 0.0]];
        assert!((scale_gamma(&x) - 0.5).abs() < 1e-12);
        assert_eq!(scale_gamma(&[vec![3.0, 3.0]]), 1.0);
    }
}
