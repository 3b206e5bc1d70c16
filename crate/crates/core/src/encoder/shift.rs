use alloc::vec::Vec;

use crate::{Error, Result};

/// Number of channels moved in each direction for `fraction = (num, den)`.
pub fn shift_count(channels: usize, fraction: (usize, usize)) -> Result<usize> {
    let (num, den) = fraction;
    if den == 0 || num == 0 || !(num * channels).is_multiple_of(den) {
        return Err(Error::invalid(alloc::format!(
            "{num}/{den} of {channels} channels is not a whole number"
        )));
    }
    let k = num * channels / den;
    if k == 0 || 2 * k > channels {
        return Err(Error::invalid(alloc::format!(
            "cannot shift {k} channels each way out of {channels}"
        )));
    }
    Ok(k)
}

/// Bidirectional temporal shift of a `frames × channels` row-major tensor.
///
/// Channels `[0, k)` take their value from the previous time step, channels
/// `[k, 2k)` from the next one, the rest pass through. Missing neighbours at
/// either end read as zero.
pub fn temporal_shift(
    features: &[f64],
    frames: usize,
    channels: usize,
    fraction: (usize, usize),
) -> Result<Vec<f64>> {
    if features.len() != frames * channels || frames == 0 {
        return Err(Error::shape(
            alloc::format!("{frames}x{channels}"),
            features.len(),
        ));
    }
    let k = shift_count(channels, fraction)?;
    let mut out = alloc::vec![0.0; features.len()];
    shift_into(features, &mut out, frames, channels, k, false);
    Ok(out)
}

/// Writes the shift (or, with `transpose`, its adjoint: the same move with
/// directions swapped) of `src` into `dst`.
pub(crate) fn shift_into(
    src: &[f64],
    dst: &mut [f64],
    frames: usize,
    channels: usize,
    k: usize,
    transpose: bool,
) {
    let (from_prev, from_next) = if transpose { (k..2 * k, 0..k) } else { (0..k, k..2 * k) };
    for t in 0..frames {
        let row = t * channels;
        for c in from_prev.clone() {
            dst[row + c] = if t > 0 { src[row - channels + c] } else { 0.0 };
        }
        for c in from_next.clone() {
            dst[row + c] = if t + 1 < frames { src[row + channels + c] } else { 0.0 };
        }
        dst[row + 2 * k..row + channels].copy_from_slice(&src[row + 2 * k..row + channels]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_frame_zeroes_shifted_channels() {
        let x: Vec<f64> = (1..=8).map(f64::from).collect();
        let y = temporal_shift(&x, 1, 8, (1, 8)).unwrap();
        assert_eq!(y, vec![0.0, 0.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn forward_channel_moves_down_in_time() {
        // channel 0 carries (a, b, c) = (1, 2, 3) over three frames
        let mut x = vec![0.0; 3 * 8];
        for t in 0..3 {
            x[t * 8] = (t + 1) as f64;
            x[t * 8 + 1] = 10.0 * (t + 1) as f64;
            x[t * 8 + 5] = 100.0 * (t + 1) as f64;
        }
        let y = temporal_shift(&x, 3, 8, (1, 8)).unwrap();
        assert_eq!([y[0], y[8], y[16]], [0.0, 1.0, 2.0]);
        assert_eq!([y[1], y[9], y[17]], [20.0, 30.0, 0.0]);
        assert_eq!([y[5], y[13], y[21]], [100.0, 200.0, 300.0]);
    }

    #[test]
    fn rejects_fractional_channel_counts() {
        assert!(temporal_shift(&[0.0; 12], 1, 12, (1, 8)).is_err());
        assert!(temporal_shift(&[0.0; 8], 1, 8, (5, 8)).is_err());
        assert!(temporal_shift(&[0.0; 7], 1, 8, (1, 8)).is_err());
    }

    #[test]
    fn transpose_is_the_adjoint() {
        let (t, c, k) = (4, 8, 2);
        let x: Vec<f64> = (0..t * c).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..t * c).map(|i| (i as f64 * 0.91).cos()).collect();
        let mut sx = vec![0.0; t * c];
        let mut sty = vec![0.0; t * c];
        shift_into(&x, &mut sx, t, c, k, false);
        shift_into(&y, &mut sty, t, c, k, true);
        let lhs: f64 = sx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&sty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn shift_conserves_values(t in 1usize..6, seed in 0u64..1000) {
            let c = 16;
            let x: Vec<f64> = (0..t * c).map(|i| ((i as u64 * 2654435761 + seed) % 997) as f64 + 1.0).collect();
            let y = temporal_shift(&x, t, c, (1, 8)).unwrap();
            for ch in 0..4 {
                let mut before: Vec<f64> = (0..t).map(|i| x[i * c + ch]).collect();
                let mut after: Vec<f64> = (0..t).map(|i| y[i * c + ch]).collect();
                // one boundary value leaves, one zero enters
                let dropped = if ch < 2 { before.pop() } else { Some(before.remove(0)) };
                proptest::prop_assert!(dropped.is_some());
                before.push(0.0);
                before.sort_by(f64::total_cmp);
                after.sort_by(f64::total_cmp);
                proptest::prop_assert_eq!(before, after);
            }
            for i in 0..t {
                proptest::prop_assert_eq!(&x[i * c + 4..(i + 1) * c], &y[i * c + 4..(i + 1) * c]);
            }
        }
    }
}
