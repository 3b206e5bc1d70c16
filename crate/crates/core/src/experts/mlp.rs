use alloc::vec::Vec;

#[allow(unused_imports)] // inherent std methods shadow it when std is linked
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::softmax;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LrSchedule {
    /// Fixed rate; stop after `n_iter_no_change` epochs without a `tol`
    /// improvement in training loss.
    Constant { n_iter_no_change: usize },
    /// Halve the rate after `patience` consecutive epochs without a `tol`
    /// improvement; stop once it falls below `min_lr`.
    Halving { patience: usize, min_lr: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub tol: f64,
    pub batch_size: usize,
    /// L2 penalty on weights (not biases).
    pub l2: f64,
    pub schedule: LrSchedule,
}

impl MlpParams {
    pub fn small() -> Self {
        MlpParams {
            hidden: alloc::vec![100],
            learning_rate: 1e-3,
            max_epochs: 200,
            tol: 1e-4,
            batch_size: 200,
            l2: 1e-4,
            schedule: LrSchedule::Constant {
                n_iter_no_change: 10,
            },
        }
    }

    pub fn large() -> Self {
        MlpParams {
            hidden: alloc::vec![128, 64, 32],
            schedule: LrSchedule::Halving {
                patience: 2,
                min_lr: 1e-6,
            },
            ..MlpParams::small()
        }
    }
}

/// Dense layer, weights row-major `[in][out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// ReLU network with a softmax output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    /// Mean training loss (cross-entropy plus L2 term) per epoch.
    pub loss_curve: Vec<f64>,
}

impl Layer {
    fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
        let weight = draw(inputs * outputs);
        let bias = draw(outputs);
        Layer {
            inputs,
            outputs,
            weight,
            bias,
        }
    }

    fn apply(&self, x: &[f64], relu: bool) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.weight[i * self.outputs..(i + 1) * self.outputs];
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
        if relu {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        out
    }
}

impl Mlp {
    /// Activations of every layer, input first; the last entry is logits.
    fn activations(&self, row: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = alloc::vec![row.to_vec()];
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let next = layer.apply(&acts[l], l < last);
            acts.push(next);
        }
        acts
    }

    pub fn proba(&self, row: &[f64]) -> Vec<f64> {
        softmax(self.activations(row).last().expect("output layer"))
    }
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

pub(crate) fn fit_mlp(x: &[Vec<f64>], y: &[usize], k: usize, params: &MlpParams, seed: u64) -> Mlp {
    let n = x.len();
    let d = x[0].len();
    let mut init = rng::stream(seed, "mlp-init", 0);
    let mut sizes = alloc::vec![d];
    sizes.extend(&params.hidden);
    sizes.push(k);
    let mut net = Mlp {
        layers: sizes.windows(2).map(|w| Layer::glorot(w[0], w[1], &mut init)).collect(),
        loss_curve: Vec::new(),
    };
    // flat parameter list: (weight, bias) per layer
    let shapes: Vec<usize> = net
        .layers
        .iter()
        .flat_map(|l| [l.weight.len(), l.bias.len()])
        .collect();
    let mut adam = AdamState {
        m: shapes.iter().map(|&s| alloc::vec![0.0; s]).collect(),
        v: shapes.iter().map(|&s| alloc::vec![0.0; s]).collect(),
        t: 0,
    };
    let batch = params.batch_size.min(n).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut lr = params.learning_rate;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..params.max_epochs {
        order.shuffle(&mut rng::stream(seed, "mlp-epoch", epoch as u64));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let (loss, grads) = batch_gradient(&net, x, y, chunk, params.l2);
            epoch_loss += loss * chunk.len() as f64;
            adam_step(&mut net, &grads, &mut adam, lr);
        }
        let loss = epoch_loss / n as f64;
        net.loss_curve.push(loss);
        if loss > best - params.tol {
            stale += 1;
        } else {
            stale = 0;
        }
        if loss < best {
            best = loss;
        }
        match params.schedule {
            LrSchedule::Constant { n_iter_no_change } => {
                if stale > n_iter_no_change {
                    break;
                }
            }
            LrSchedule::Halving { patience, min_lr } => {
                if stale >= patience {
                    lr /= 2.0;
                    stale = 0;
                    if lr < min_lr {
                        break;
                    }
                }
            }
        }
    }
    net
}

/// Mean cross-entropy over the batch plus `l2 / (2B) · Σ‖W‖²`, and its
/// gradient in the flat (weight, bias) layout.
fn batch_gradient(net: &Mlp, x: &[Vec<f64>], y: &[usize], batch: &[usize], l2: f64) -> (f64, Vec<Vec<f64>>) {
    let b = batch.len() as f64;
    let mut grads: Vec<Vec<f64>> = net
        .layers
        .iter()
        .flat_map(|l| [alloc::vec![0.0; l.weight.len()], alloc::vec![0.0; l.bias.len()]])
        .collect();
    let mut loss = 0.0;
    for &i in batch {
        let acts = net.activations(&x[i]);
        let p = softmax(acts.last().expect("output layer"));
        loss -= p[y[i]].max(1e-300).ln();
        let mut delta: Vec<f64> = p;
        delta[y[i]] -= 1.0;
        for l in (0..net.layers.len()).rev() {
            let layer = &net.layers[l];
            let input = &acts[l];
            let gw = &mut grads[2 * l];
            for (a, &xi) in input.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (o, &dv) in delta.iter().enumerate() {
                    gw[a * layer.outputs + o] += xi * dv;
                }
            }
            for (g, dv) in grads[2 * l + 1].iter_mut().zip(&delta) {
                *g += dv;
            }
            if l == 0 {
                break;
            }
            let mut prev = alloc::vec![0.0; layer.inputs];
            for (a, pv) in prev.iter_mut().enumerate() {
                if input[a] <= 0.0 {
                    continue;
                }
                let row = &layer.weight[a * layer.outputs..(a + 1) * layer.outputs];
                *pv = row.iter().zip(&delta).map(|(w, dv)| w * dv).sum();
            }
            delta = prev;
        }
    }
    let mut penalty = 0.0;
    for (l, layer) in net.layers.iter().enumerate() {
        for (g, w) in grads[2 * l].iter_mut().zip(&layer.weight) {
            *g = (*g + l2 * w) / b;
            penalty += w * w;
        }
        grads[2 * l + 1].iter_mut().for_each(|g| *g /= b);
    }
    (loss / b + 0.5 * l2 * penalty / b, grads)
}

fn adam_step(net: &mut Mlp, grads: &[Vec<f64>], st: &mut AdamState, lr: f64) {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    st.t += 1;
    let step = lr * (1.0 - B2.powi(st.t)).sqrt() / (1.0 - B1.powi(st.t));
    for (l, layer) in net.layers.iter_mut().enumerate() {
        for (slot, param) in [(2 * l, &mut layer.weight), (2 * l + 1, &mut layer.bias)] {
            let (m, v, g) = (&mut st.m[slot], &mut st.v[slot], &grads[slot]);
            for j in 0..param.len() {
                m[j] = B1 * m[j] + (1.0 - B1) * g[j];
                v[j] = B2 * v[j] + (1.0 - B2) * g[j] * g[j];
                param[j] -= step * m[j] / (v[j].sqrt() + EPS);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn loss_at(net: &Mlp, x: &[Vec<f64>], y: &[usize], l2: f64) -> f64 {
        let idx: Vec<usize> = (0..x.len()).collect();
        batch_gradient(net, x, y, &idx, l2).0
    }

    #[test]
    #[allow(clippy::needless_range_loop)] // perturbs parameters in place by index
    fn gradient_matches_finite_differences() {
        let mut r = rng::stream(3, "mlp-test", 0);
        let x: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let y = vec![0, 1, 2, 0, 1, 2];
        let params = MlpParams {
            hidden: vec![5, 4],
            max_epochs: 0,
            ..MlpParams::small()
        };
        let mut net = fit_mlp(&x, &y, 3, &params, 9);
        let idx: Vec<usize> = (0..6).collect();
        let (_, grads) = batch_gradient(&net, &x, &y, &idx, 0.1);
        let h = 1e-6;
        for l in 0..net.layers.len() {
            for j in 0..net.layers[l].weight.len() {
                let w0 = net.layers[l].weight[j];
                net.layers[l].weight[j] = w0 + h;
                let up = loss_at(&net, &x, &y, 0.1);
                net.layers[l].weight[j] = w0 - h;
                let down = loss_at(&net, &x, &y, 0.1);
                net.layers[l].weight[j] = w0;
                let num = (up - down) / (2.0 * h);
                assert!((num - grads[2 * l][j]).abs() < 1e-6, "layer {l} w{j}");
            }
            for j in 0..net.layers[l].bias.len() {
                let b0 = net.layers[l].bias[j];
                net.layers[l].bias[j] = b0 + h;
                let up = loss_at(&net, &x, &y, 0.1);
                net.layers[l].bias[j] = b0 - h;
                let down = loss_at(&net, &x, &y, 0.1);
                net.layers[l].bias[j] = b0;
                assert!(((up - down) / (2.0 * h) - grads[2 * l + 1][j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn early_stopping_bounds_epochs() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0]).collect();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let net = fit_mlp(&x, &y, 2, &MlpParams::small(), 0);
        assert!(!net.loss_curve.is_empty() && net.loss_curve.len() <= 200);
        assert!(net.loss_curve.last().unwrap() < &net.loss_curve[0]);
        let large = fit_mlp(&x, &y, 2, &MlpParams::large(), 0);
        assert_eq!(large.layers.len(), 4);
    }
}
