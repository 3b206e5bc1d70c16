use alloc::vec::Vec;

use rand::seq::index;

use super::model::{loss_and_gradient, EncoderParams, Target};
use crate::data::Clip;
use crate::rng;
use crate::Result;

pub const FD_STEP: f64 = 1e-5;

/// Compares the analytic gradient with central finite differences on
/// `coords` randomly chosen parameters (all of them if fewer exist) and
/// returns the largest `|a - n| / max(1e-8, |a| + |n|)`.
pub fn grad_check(
    params: &EncoderParams,
    clip: &Clip,
    target: Target<'_>,
    coords: usize,
    seed: u64,
) -> Result<f64> {
    let (_, grads) = loss_and_gradient(params, clip, target)?;
    let analytic: Vec<f64> = grads.tensors().concat();
    let total = analytic.len();
    let picks = index::sample(&mut rng::stream(seed, "grad-check", 0), total, coords.min(total));

    let loss_at = |flat: usize, delta: f64| -> Result<f64> {
        let mut p = params.clone();
        let mut offset = flat;
        for t in p.tensors_mut() {
            if offset < t.len() {
                t[offset] += delta;
                break;
            }
            offset -= t.len();
        }
        Ok(loss_and_gradient(&p, clip, target)?.0)
    };

    let mut worst: f64 = 0.0;
    for flat in picks.iter() {
        let numeric = (loss_at(flat, FD_STEP)? - loss_at(flat, -FD_STEP)?) / (2.0 * FD_STEP);
        let a = analytic[flat];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}
