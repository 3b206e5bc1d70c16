use alloc::vec::Vec;

#[allow(unused_imports)] // inherent std methods shadow it when std is linked
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::shift::{shift_count, shift_into};
use crate::data::Clip;
use crate::rng::StreamRng;
use crate::schema::TrainConfig;
use crate::{Error, Result};

/// Shape of an encoder; everything needed to interpret a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub frame_side: usize,
    pub channels: usize,
    pub blocks: usize,
    pub out_dim: usize,
    /// Channels shifted in each temporal direction.
    pub shift: usize,
}

impl EncoderDims {
    pub fn from_config(config: &TrainConfig, out_dim: usize) -> Result<Self> {
        config.validate()?;
        Ok(EncoderDims {
            frame_side: config.frame_side,
            channels: config.channels,
            blocks: config.blocks,
            out_dim,
            shift: shift_count(config.channels, config.shift_fraction)?,
        })
    }

    pub fn pixels(&self) -> usize {
        self.frame_side * self.frame_side
    }

    pub fn same_trunk(&self, other: &EncoderDims) -> bool {
        self.frame_side == other.frame_side
            && self.channels == other.channels
            && self.blocks == other.blocks
            && self.shift == other.shift
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    /// `channels × channels`, row-major `[input][output]`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// All trainable tensors: per-frame patch embedding, residual shift blocks and
/// a linear head. Matrices are row-major `[input][output]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub dims: EncoderDims,
    pub embed_weight: Vec<f64>,
    pub embed_bias: Vec<f64>,
    pub blocks: Vec<BlockParams>,
    pub head_weight: Vec<f64>,
    pub head_bias: Vec<f64>,
}

fn uniform(n: usize, limit: f64, rng: &mut StreamRng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-limit..limit)).collect()
}

impl EncoderParams {
    pub fn zeros(dims: EncoderDims) -> Self {
        let c = dims.channels;
        EncoderParams {
            dims,
            embed_weight: alloc::vec![0.0; dims.pixels() * c],
            embed_bias: alloc::vec![0.0; c],
            blocks: (0..dims.blocks)
                .map(|_| BlockParams {
                    weight: alloc::vec![0.0; c * c],
                    bias: alloc::vec![0.0; c],
                })
                .collect(),
            head_weight: alloc::vec![0.0; c * dims.out_dim],
            head_bias: alloc::vec![0.0; dims.out_dim],
        }
    }

    /// He-uniform trunk, Glorot-uniform head, zero biases. Block weights are
    /// scaled down so the residual stack starts close to identity.
    pub fn init(dims: EncoderDims, rng: &mut StreamRng) -> Self {
        let c = dims.channels;
        let mut p = Self::zeros(dims);
        p.embed_weight = uniform(dims.pixels() * c, (6.0 / dims.pixels() as f64).sqrt(), rng);
        for b in &mut p.blocks {
            b.weight = uniform(c * c, 0.5 * (6.0 / c as f64).sqrt(), rng);
        }
        p.head_weight = p.fresh_head(dims.out_dim, rng).0;
        p
    }

    fn fresh_head(&self, out_dim: usize, rng: &mut StreamRng) -> (Vec<f64>, Vec<f64>) {
        let c = self.dims.channels;
        let limit = (6.0 / (c + out_dim) as f64).sqrt();
        (uniform(c * out_dim, limit, rng), alloc::vec![0.0; out_dim])
    }

    /// Same trunk, newly initialised head of width `out_dim`.
    pub fn with_fresh_head(&self, out_dim: usize, rng: &mut StreamRng) -> Self {
        let (head_weight, head_bias) = self.fresh_head(out_dim, rng);
        EncoderParams {
            dims: EncoderDims {
                out_dim,
                ..self.dims
            },
            embed_weight: self.embed_weight.clone(),
            embed_bias: self.embed_bias.clone(),
            blocks: self.blocks.clone(),
            head_weight,
            head_bias,
        }
    }

    /// Tensors in declaration order: embedding, blocks, head.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = alloc::vec![&self.embed_weight, &self.embed_bias];
        for b in &self.blocks {
            out.push(&b.weight);
            out.push(&b.bias);
        }
        out.push(&self.head_weight);
        out.push(&self.head_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = alloc::vec![&mut self.embed_weight, &mut self.embed_bias];
        for b in &mut self.blocks {
            out.push(&mut b.weight);
            out.push(&mut b.bias);
        }
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    /// Expected tensor lengths in declaration order.
    pub fn tensor_shapes(dims: &EncoderDims) -> Vec<usize> {
        let c = dims.channels;
        let mut out = alloc::vec![dims.pixels() * c, c];
        for _ in 0..dims.blocks {
            out.push(c * c);
            out.push(c);
        }
        out.push(c * dims.out_dim);
        out.push(dims.out_dim);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Trunk tensors (everything but the head) compare equal.
    pub fn trunk_eq(&self, other: &EncoderParams) -> bool {
        self.dims.same_trunk(&other.dims)
            && self.embed_weight == other.embed_weight
            && self.embed_bias == other.embed_bias
            && self.blocks == other.blocks
    }
}

/// Logits and the pooled trunk feature feeding the head.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub logits: Vec<f64>,
    pub feature: Vec<f64>,
}

/// Intermediate activations retained for the backward pass.
pub(crate) struct Trace {
    frames: usize,
    /// Embedding pre-activations, `T × C`.
    embed_pre: Vec<f64>,
    /// Shifted block inputs, each `T × C`.
    shifted: Vec<Vec<f64>>,
    /// Block pre-activations, each `T × C`.
    block_pre: Vec<Vec<f64>>,
    feature: Vec<f64>,
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn check_clip(params: &EncoderParams, clip: &Clip) -> Result<()> {
    if clip.side() != params.dims.frame_side || clip.is_empty() {
        return Err(Error::shape(
            alloc::format!("frames of side {}", params.dims.frame_side),
            alloc::format!("{} frames of side {}", clip.len(), clip.side()),
        ));
    }
    Ok(())
}

pub(crate) fn forward_trace(params: &EncoderParams, clip: &Clip) -> Result<(Vec<f64>, Trace)> {
    check_clip(params, clip)?;
    let d = params.dims;
    let (t_len, c) = (clip.len(), d.channels);

    let mut embed_pre = alloc::vec![0.0; t_len * c];
    for row in embed_pre.chunks_exact_mut(c) {
        row.copy_from_slice(&params.embed_bias);
    }
    for (p, w_row) in params.embed_weight.chunks_exact(c).enumerate() {
        for t in 0..t_len {
            let x = clip.frame(t)[p];
            if x != 0.0 {
                for (e, w) in embed_pre[t * c..(t + 1) * c].iter_mut().zip(w_row) {
                    *e += x * w;
                }
            }
        }
    }

    let mut h: Vec<f64> = embed_pre.iter().map(|&v| relu(v)).collect();
    let mut shifted = Vec::with_capacity(d.blocks);
    let mut block_pre = Vec::with_capacity(d.blocks);
    for block in &params.blocks {
        let mut s = alloc::vec![0.0; t_len * c];
        shift_into(&h, &mut s, t_len, c, d.shift, false);
        let mut u = alloc::vec![0.0; t_len * c];
        for t in 0..t_len {
            let u_row = &mut u[t * c..(t + 1) * c];
            u_row.copy_from_slice(&block.bias);
            for (i, w_row) in block.weight.chunks_exact(c).enumerate() {
                let si = s[t * c + i];
                if si != 0.0 {
                    for (o, w) in u_row.iter_mut().zip(w_row) {
                        *o += si * w;
                    }
                }
            }
        }
        let next: Vec<f64> = h.iter().zip(&u).map(|(&hv, &uv)| hv + relu(uv)).collect();
        shifted.push(s);
        block_pre.push(u);
        h = next;
    }

    let mut feature = alloc::vec![0.0; c];
    for row in h.chunks_exact(c) {
        for (f, v) in feature.iter_mut().zip(row) {
            *f += v;
        }
    }
    for f in &mut feature {
        *f /= t_len as f64;
    }

    let mut logits = params.head_bias.clone();
    for (f, w_row) in feature.iter().zip(params.head_weight.chunks_exact(d.out_dim)) {
        for (l, w) in logits.iter_mut().zip(w_row) {
            *l += f * w;
        }
    }

    Ok((
        logits,
        Trace {
            frames: t_len,
            embed_pre,
            shifted,
            block_pre,
            feature,
        },
    ))
}

/// Per-frame embedding, residual temporal-shift blocks, temporal mean pool and
/// linear head.
pub fn forward(params: &EncoderParams, clip: &Clip) -> Result<ForwardOutput> {
    let (logits, trace) = forward_trace(params, clip)?;
    Ok(ForwardOutput {
        logits,
        feature: trace.feature,
    })
}

/// Accumulates parameter gradients for upstream gradient `dlogits` into `grads`.
pub(crate) fn backward(
    params: &EncoderParams,
    clip: &Clip,
    trace: &Trace,
    dlogits: &[f64],
    grads: &mut EncoderParams,
) {
    let d = params.dims;
    let (t_len, c, out) = (trace.frames, d.channels, d.out_dim);

    let mut dfeature = alloc::vec![0.0; c];
    for (i, f) in trace.feature.iter().enumerate() {
        let w_row = &params.head_weight[i * out..(i + 1) * out];
        let g_row = &mut grads.head_weight[i * out..(i + 1) * out];
        let mut acc = 0.0;
        for ((g, w), dl) in g_row.iter_mut().zip(w_row).zip(dlogits) {
            *g += f * dl;
            acc += w * dl;
        }
        dfeature[i] = acc;
    }
    for (g, dl) in grads.head_bias.iter_mut().zip(dlogits) {
        *g += dl;
    }

    // gradient w.r.t. the current hidden state, T × C
    let mut dh: Vec<f64> = (0..t_len)
        .flat_map(|_| dfeature.iter().map(|v| v / t_len as f64))
        .collect();
    let mut du = alloc::vec![0.0; t_len * c];
    let mut ds = alloc::vec![0.0; t_len * c];
    let mut dh_shift = alloc::vec![0.0; t_len * c];
    for (l, block) in params.blocks.iter().enumerate().rev() {
        let u = &trace.block_pre[l];
        let s = &trace.shifted[l];
        for ((g, &uv), &dv) in du.iter_mut().zip(u).zip(&dh) {
            *g = if uv > 0.0 { dv } else { 0.0 };
        }
        let gb = &mut grads.blocks[l];
        for t in 0..t_len {
            let du_row = &du[t * c..(t + 1) * c];
            for (g, v) in gb.bias.iter_mut().zip(du_row) {
                *g += v;
            }
            for i in 0..c {
                let si = s[t * c + i];
                let w_row = &block.weight[i * c..(i + 1) * c];
                let g_row = &mut gb.weight[i * c..(i + 1) * c];
                let mut acc = 0.0;
                for ((g, w), dv) in g_row.iter_mut().zip(w_row).zip(du_row) {
                    *g += si * dv;
                    acc += w * dv;
                }
                ds[t * c + i] = acc;
            }
        }
        shift_into(&ds, &mut dh_shift, t_len, c, d.shift, true);
        for (a, b) in dh.iter_mut().zip(&dh_shift) {
            *a += b;
        }
    }

    let de: Vec<f64> = dh
        .iter()
        .zip(&trace.embed_pre)
        .map(|(&g, &e)| if e > 0.0 { g } else { 0.0 })
        .collect();
    for row in de.chunks_exact(c) {
        for (g, v) in grads.embed_bias.iter_mut().zip(row) {
            *g += v;
        }
    }
    for (p, g_row) in grads.embed_weight.chunks_exact_mut(c).enumerate() {
        for t in 0..t_len {
            let x = clip.frame(t)[p];
            if x != 0.0 {
                for (g, v) in g_row.iter_mut().zip(&de[t * c..(t + 1) * c]) {
                    *g += x * v;
                }
            }
        }
    }
}

/// Training target for one clip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target<'a> {
    /// Multi-label targets in `[0, 1]`, scored with mean binary cross-entropy.
    Biomarkers(&'a [f64]),
    /// Class index, scored with softmax cross-entropy.
    Class(usize),
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Loss value and its gradient with respect to the logits.
pub fn loss_and_dlogits(logits: &[f64], target: Target<'_>) -> Result<(f64, Vec<f64>)> {
    match target {
        Target::Biomarkers(y) => {
            if y.len() != logits.len() {
                return Err(Error::shape(logits.len(), y.len()));
            }
            let n = y.len() as f64;
            let mut loss = 0.0;
            let mut grad = Vec::with_capacity(y.len());
            for (&z, &t) in logits.iter().zip(y) {
                // log(1 + e^z) - t z, evaluated stably
                loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
                grad.push((sigmoid(z) - t) / n);
            }
            Ok((loss / n, grad))
        }
        Target::Class(k) => {
            if k >= logits.len() {
                return Err(Error::invalid(alloc::format!(
                    "class {k} outside {} outputs",
                    logits.len()
                )));
            }
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + logits.iter().map(|&l| (l - m).exp()).sum::<f64>().ln();
            let mut grad = softmax(logits);
            grad[k] -= 1.0;
            Ok((lse - logits[k], grad))
        }
    }
}

/// Loss of one clip and the gradient of every parameter.
pub fn loss_and_gradient(
    params: &EncoderParams,
    clip: &Clip,
    target: Target<'_>,
) -> Result<(f64, EncoderParams)> {
    let mut grads = EncoderParams::zeros(params.dims);
    let loss = accumulate_gradient(params, clip, target, &mut grads)?;
    Ok((loss, grads))
}

pub(crate) fn accumulate_gradient(
    params: &EncoderParams,
    clip: &Clip,
    target: Target<'_>,
    grads: &mut EncoderParams,
) -> Result<f64> {
    let (logits, trace) = forward_trace(params, clip)?;
    let (loss, dlogits) = loss_and_dlogits(&logits, target)?;
    backward(params, clip, &trace, &dlogits, grads);
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn dims() -> EncoderDims {
        EncoderDims {
            frame_side: 4,
            channels: 8,
            blocks: 2,
            out_dim: 3,
            shift: 1,
        }
    }

    fn random_clip(len: usize, side: usize, seed: u64) -> Clip {
        let mut r = rng::stream(seed, "clip", 0);
        Clip::new(len, side, (0..len * side * side).map(|_| r.random_range(0.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn zero_everything_gives_head_bias() {
        let mut p = EncoderParams::zeros(dims());
        p.head_bias = alloc::vec![0.5, -1.0, 2.0];
        let out = forward(&p, &Clip::zeros(3, 4)).unwrap();
        assert_eq!(out.logits, p.head_bias);
        assert!(out.feature.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn head_is_linear() {
        let p = EncoderParams::init(dims(), &mut rng::stream(1, "init", 0));
        let clip = random_clip(3, 4, 2);
        let mut doubled = p.clone();
        doubled.head_weight.iter_mut().for_each(|w| *w *= 2.0);
        doubled.head_bias = alloc::vec![0.25, 0.5, -0.75];
        let mut base = p.clone();
        base.head_bias = alloc::vec![0.125, 0.25, -0.375];
        let a = forward(&base, &clip).unwrap();
        let b = forward(&doubled, &clip).unwrap();
        for (x, y) in a.logits.iter().zip(&b.logits) {
            assert_eq!(2.0 * x, *y);
        }
        assert_eq!(a.feature, b.feature);
    }

    #[test]
    fn frame_order_matters() {
        let p = EncoderParams::init(dims(), &mut rng::stream(3, "init", 0));
        let clip = random_clip(3, 4, 4);
        let a = forward(&p, &clip).unwrap();
        let b = forward(&p, &clip.reversed()).unwrap();
        assert_ne!(a.feature, b.feature);
    }

    #[test]
    fn rejects_wrong_side() {
        let p = EncoderParams::zeros(dims());
        assert!(matches!(
            forward(&p, &Clip::zeros(3, 5)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn fresh_head_keeps_trunk() {
        let p = EncoderParams::init(dims(), &mut rng::stream(5, "init", 0));
        let q = p.with_fresh_head(7, &mut rng::stream(5, "head", 0));
        assert!(q.trunk_eq(&p));
        assert_eq!(q.head_weight.len(), 8 * 7);
        assert_eq!(
            EncoderParams::tensor_shapes(&q.dims),
            q.tensors().iter().map(|t| t.len()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn losses_match_closed_forms() {
        let (l, g) = loss_and_dlogits(&[0.0, 0.0], Target::Biomarkers(&[1.0, 0.0])).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-12);
        assert!((g[0] + 0.25).abs() < 1e-12 && (g[1] - 0.25).abs() < 1e-12);
        let (l, g) = loss_and_dlogits(&[1.0, 1.0, 1.0], Target::Class(2)).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
        assert!((g[2] + 2.0 / 3.0).abs() < 1e-12);
        assert!(loss_and_dlogits(&[1.0], Target::Class(1)).is_err());
    }
}
