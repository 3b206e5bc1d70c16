use alloc::vec::Vec;

#[allow(unused_imports)] // inherent std methods shadow it when std is linked
use num_traits::Float;
use rand::Rng;

use super::Frames;
use crate::{Error, Result};

/// Fixed-length frame sequence fed to the encoder, `len × side × side`.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    len: usize,
    side: usize,
    data: Vec<f64>,
}

impl Clip {
    pub fn new(len: usize, side: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != len * side * side || len == 0 {
            return Err(Error::shape(
                alloc::format!("{len}x{side}x{side} clip"),
                data.len(),
            ));
        }
        Ok(Clip { len, side, data })
    }

    pub fn zeros(len: usize, side: usize) -> Self {
        Clip {
            len,
            side,
            data: alloc::vec![0.0; len * side * side],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.side * self.side;
        &self.data[t * n..(t + 1) * n]
    }

    /// Frames in reverse temporal order.
    pub fn reversed(&self) -> Clip {
        let n = self.side * self.side;
        let data = (0..self.len)
            .rev()
            .flat_map(|t| self.data[t * n..(t + 1) * n].iter().copied())
            .collect();
        Clip { data, ..*self }
    }
}

/// Frame indices `offset, offset + L, …` for `count` equal segments of
/// length `L = floor(total / count)`. Tail frames past `count·L` are unused.
pub fn segment_indices(total: usize, count: usize, offset: usize) -> Result<Vec<usize>> {
    if count == 0 || total < count {
        return Err(Error::TooFewFrames {
            needed: count,
            found: total,
        });
    }
    let seg = total / count;
    if offset >= seg {
        return Err(Error::invalid(alloc::format!(
            "offset {offset} outside segment length {seg}"
        )));
    }
    Ok((0..count).map(|i| offset + i * seg).collect())
}

/// Samples one clip: a single random start offset within the first segment,
/// then one frame per segment at that offset.
pub fn sample_clip<R: Rng + ?Sized>(frames: &Frames, count: usize, rng: &mut R) -> Result<Clip> {
    if count == 0 || frames.count() < count {
        return Err(Error::TooFewFrames {
            needed: count,
            found: frames.count(),
        });
    }
    let seg = frames.count() / count;
    let offset = rng.random_range(0..seg);
    let idx = segment_indices(frames.count(), count, offset)?;
    let mut data = Vec::with_capacity(count * frames.side() * frames.side());
    for i in idx {
        data.extend(frames.frame(i).iter().map(|&p| p as f64));
    }
    Clip::new(count, frames.side(), data)
}

/// One draw of every augmentation, shared by all frames of a clip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub flip: bool,
    pub intensity: f64,
    pub scale: f64,
    pub rotation_deg: f64,
    /// Translation as a fraction of the frame side, `(x, y)`.
    pub translate: (f64, f64),
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        flip: false,
        intensity: 1.0,
        scale: 1.0,
        rotation_deg: 0.0,
        translate: (0.0, 0.0),
    };

    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        AugmentParams {
            flip: rng.random_bool(0.5),
            intensity: rng.random_range(0.8..=1.1),
            scale: rng.random_range(0.8..=1.2),
            rotation_deg: rng.random_range(-15.0..=15.0),
            translate: (
                rng.random_range(-0.05..=0.05),
                rng.random_range(-0.05..=0.05),
            ),
        }
    }

    fn has_warp(&self) -> bool {
        self.scale != 1.0 || self.rotation_deg != 0.0 || self.translate != (0.0, 0.0)
    }

    /// Warp (scale, rotation, translation about the frame centre, bilinear,
    /// zero fill), then horizontal flip, then intensity scaling clamped to
    /// `[0, 1]`.
    pub fn apply(&self, clip: &Clip) -> Clip {
        let side = clip.side;
        let n = side * side;
        let mut out = clip.clone();
        if self.has_warp() {
            let c = (side as f64 - 1.0) / 2.0;
            let (sin, cos) = self.rotation_deg.to_radians().sin_cos();
            let (tx, ty) = (self.translate.0 * side as f64, self.translate.1 * side as f64);
            for t in 0..clip.len {
                let src = clip.frame(t);
                let dst = &mut out.data[t * n..(t + 1) * n];
                for y in 0..side {
                    for x in 0..side {
                        let u = x as f64 - c - tx;
                        let v = y as f64 - c - ty;
                        let sx = (cos * u + sin * v) / self.scale + c;
                        let sy = (-sin * u + cos * v) / self.scale + c;
                        dst[y * side + x] = bilinear_zero(src, side, sx, sy);
                    }
                }
            }
        }
        if self.flip {
            for row in out.data.chunks_mut(side) {
                row.reverse();
            }
        }
        if self.intensity != 1.0 {
            for p in &mut out.data {
                *p = (*p * self.intensity).clamp(0.0, 1.0);
            }
        }
        out
    }
}

fn bilinear_zero(img: &[f64], side: usize, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let at = |xi: f64, yi: f64| -> f64 {
        if xi < 0.0 || yi < 0.0 || xi >= side as f64 || yi >= side as f64 {
            0.0
        } else {
            img[yi as usize * side + xi as usize]
        }
    };
    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1.0, y0) * fx;
    let bottom = at(x0, y0 + 1.0) * (1.0 - fx) + at(x0 + 1.0, y0 + 1.0) * fx;
    (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0)
}

/// Applies one random draw of every augmentation to the whole clip, or
/// returns it unchanged when disabled.
pub fn augment<R: Rng + ?Sized>(clip: &Clip, rng: &mut R, enabled: bool) -> Clip {
    if !enabled {
        return clip.clone();
    }
    AugmentParams::draw(rng).apply(clip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use alloc::vec;

    fn ramp_frames(count: usize, side: usize) -> Frames {
        let n = side * side;
        let pixels = (0..count * n)
            .map(|i| (i / n) as f32 / count as f32)
            .collect();
        Frames::new(count, side, pixels).unwrap()
    }

    fn frame_index(clip: &Clip, t: usize, count: usize) -> usize {
        (clip.frame(t)[0] * count as f64).round() as usize
    }

    #[test]
    fn exact_length_takes_every_frame() {
        let frames = ramp_frames(15, 2);
        for seed in 0..5 {
            let clip = sample_clip(&frames, 15, &mut rng::stream(seed, "t", 0)).unwrap();
            let idx: Vec<usize> = (0..15).map(|t| frame_index(&clip, t, 15)).collect();
            assert_eq!(idx, (0..15).collect::<Vec<_>>());
        }
    }

    #[test]
    fn stride_three_indices() {
        assert_eq!(
            segment_indices(45, 15, 2).unwrap(),
            (0..15).map(|i| 2 + 3 * i).collect::<Vec<_>>()
        );
        assert_eq!(*segment_indices(45, 15, 2).unwrap().last().unwrap(), 44);
        assert!(segment_indices(45, 15, 3).is_err());
        assert!(matches!(
            segment_indices(14, 15, 0),
            Err(Error::TooFewFrames { needed: 15, found: 14 })
        ));
    }

    #[test]
    fn sampled_clips_have_constant_stride() {
        let frames = ramp_frames(47, 1);
        for seed in 0..20 {
            let clip = sample_clip(&frames, 15, &mut rng::stream(seed, "t", 1)).unwrap();
            let idx: Vec<usize> = (0..15).map(|t| frame_index(&clip, t, 47)).collect();
            assert!(idx[0] < 3);
            assert!(idx.windows(2).all(|w| w[1] - w[0] == 3));
        }
        assert!(sample_clip(&ramp_frames(10, 1), 15, &mut rng::stream(0, "t", 0)).is_err());
    }

    #[test]
    fn disabled_augmentation_is_identity() {
        let clip = sample_clip(&ramp_frames(15, 4), 15, &mut rng::stream(0, "t", 0)).unwrap();
        assert_eq!(augment(&clip, &mut rng::stream(0, "a", 0), false), clip);
        assert_eq!(AugmentParams::IDENTITY.apply(&clip), clip);
    }

    #[test]
    fn flip_is_an_involution() {
        let data: Vec<f64> = (0..2 * 9).map(|i| i as f64 / 18.0).collect();
        let clip = Clip::new(2, 3, data).unwrap();
        let flip = AugmentParams {
            flip: true,
            ..AugmentParams::IDENTITY
        };
        let once = flip.apply(&clip);
        assert_eq!(once.frame(0)[..3], [2.0 / 18.0, 1.0 / 18.0, 0.0]);
        assert_eq!(flip.apply(&once), clip);
    }

    #[test]
    fn intensity_scaling_is_pointwise() {
        let clip = Clip::new(2, 3, vec![1.0; 18]).unwrap();
        let dim = AugmentParams {
            intensity: 0.8,
            ..AugmentParams::IDENTITY
        };
        assert!(dim.apply(&clip).data().iter().all(|&p| p == 0.8));
        let bright = AugmentParams {
            intensity: 1.1,
            ..AugmentParams::IDENTITY
        };
        assert!(bright.apply(&clip).data().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn translation_shifts_and_zero_fills() {
        let mut data = vec![0.0; 25];
        data[2 * 5 + 2] = 1.0;
        let clip = Clip::new(1, 5, data).unwrap();
        let shift = AugmentParams {
            translate: (1.0 / 5.0, 0.0),
            ..AugmentParams::IDENTITY
        };
        let out = shift.apply(&clip);
        assert!((out.frame(0)[2 * 5 + 3] - 1.0).abs() < 1e-12);
        assert!(out.frame(0)[2 * 5 + 2].abs() < 1e-12);
        assert!((0..5).all(|y| out.frame(0)[y * 5].abs() < 1e-12));
    }

    #[test]
    fn rotation_by_zero_scale_one_is_exact() {
        let clip = Clip::new(1, 4, (0..16).map(|i| i as f64 / 16.0).collect()).unwrap();
        let p = AugmentParams {
            rotation_deg: 90.0,
            ..AugmentParams::IDENTITY
        };
        let out = p.apply(&p.apply(&p.apply(&p.apply(&clip))));
        for (a, b) in out.data().iter().zip(clip.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    proptest::proptest! {
        #[test]
        fn augmentation_preserves_shape_and_range(seed in 0u64..500) {
            let mut r = rng::stream(seed, "clip", 0);
            let data: Vec<f64> = (0..3 * 36).map(|_| r.random_range(0.0..=1.0)).collect();
            let clip = Clip::new(3, 6, data).unwrap();
            let out = augment(&clip, &mut rng::stream(seed, "aug", 0), true);
            proptest::prop_assert_eq!((out.len(), out.side()), (3, 6));
            proptest::prop_assert!(out.data().iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}
