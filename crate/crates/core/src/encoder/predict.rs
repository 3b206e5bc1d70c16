use alloc::vec::Vec;

use rand::Rng;

use super::model::{forward, sigmoid, softmax, EncoderParams};
use crate::data::{sample_clip, Clip, Frames};
use crate::schema::{ClipAggregation, TrainConfig};
use crate::Result;

/// What a video-level prediction reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictMode {
    /// Per-feature sigmoid probabilities.
    Biomarker,
    /// Softmax class probabilities.
    Task,
}

/// Scores a single clip. The encoder is the production implementation; tests
/// substitute fixed outputs.
pub trait ClipScorer {
    fn score(&self, clip: &Clip) -> Result<Vec<f64>>;
}

pub struct EncoderScorer<'a> {
    pub params: &'a EncoderParams,
    pub mode: PredictMode,
}

impl ClipScorer for EncoderScorer<'_> {
    fn score(&self, clip: &Clip) -> Result<Vec<f64>> {
        let logits = forward(self.params, clip)?.logits;
        Ok(match self.mode {
            PredictMode::Biomarker => logits.into_iter().map(sigmoid).collect(),
            PredictMode::Task => softmax(&logits),
        })
    }
}

/// Pooled trunk feature of a clip.
pub struct FeatureScorer<'a>(pub &'a EncoderParams);

impl ClipScorer for FeatureScorer<'_> {
    fn score(&self, clip: &Clip) -> Result<Vec<f64>> {
        Ok(forward(self.0, clip)?.feature)
    }
}

/// Scores `clip_count_eval` unaugmented clips and combines them. Mean is the
/// default; max takes the element-wise maximum.
pub fn aggregate_clips<S: ClipScorer + ?Sized, R: Rng + ?Sized>(
    scorer: &S,
    frames: &Frames,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut acc: Option<Vec<f64>> = None;
    for _ in 0..config.clip_count_eval {
        let clip = sample_clip(frames, config.frames_per_clip, rng)?;
        let s = scorer.score(&clip)?;
        acc = Some(match acc {
            None => s,
            Some(mut a) => {
                for (x, y) in a.iter_mut().zip(&s) {
                    *x = match config.clip_aggregation {
                        ClipAggregation::Mean => *x + y,
                        ClipAggregation::Max => x.max(*y),
                    };
                }
                a
            }
        });
    }
    let mut out = acc.unwrap_or_default();
    if config.clip_aggregation == ClipAggregation::Mean {
        let n = config.clip_count_eval as f64;
        out.iter_mut().for_each(|v| *v /= n);
    }
    Ok(out)
}

/// Multi-clip video prediction. In task mode with max aggregation the
/// result is renormalised onto the simplex.
pub fn predict_video<R: Rng + ?Sized>(
    params: &EncoderParams,
    frames: &Frames,
    config: &TrainConfig,
    rng: &mut R,
    mode: PredictMode,
) -> Result<Vec<f64>> {
    let mut out = aggregate_clips(&EncoderScorer { params, mode }, frames, config, rng)?;
    if mode == PredictMode::Task && config.clip_aggregation == ClipAggregation::Max {
        let z: f64 = out.iter().sum();
        out.iter_mut().for_each(|v| *v /= z);
    }
    Ok(out)
}

/// Mean trunk feature over `clip_count_eval` clips.
pub fn video_feature<R: Rng + ?Sized>(
    params: &EncoderParams,
    frames: &Frames,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mean = TrainConfig {
        clip_aggregation: ClipAggregation::Mean,
        ..config.clone()
    };
    aggregate_clips(&FeatureScorer(params), frames, &mean, rng)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::model::{EncoderDims, EncoderParams};
    use crate::rng;
    use core::cell::Cell;

    struct Scripted {
        outputs: Vec<Vec<f64>>,
        next: Cell<usize>,
    }

    impl ClipScorer for Scripted {
        fn score(&self, _: &Clip) -> Result<Vec<f64>> {
            let i = self.next.get();
            self.next.set(i + 1);
            Ok(self.outputs[i].clone())
        }
    }

    fn frames(count: usize, side: usize, seed: u64) -> Frames {
        let mut r = rng::stream(seed, "frames", 0);
        Frames::new(
            count,
            side,
            (0..count * side * side).map(|_| r.random_range(0.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            frame_side: 4,
            channels: 8,
            frames_per_clip: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn mean_of_scripted_clips() {
        let scorer = Scripted {
            outputs: alloc::vec![
                alloc::vec![1.0, 0.0],
                alloc::vec![0.0, 1.0],
                alloc::vec![1.0, 0.0],
                alloc::vec![1.0, 0.0],
            ],
            next: Cell::new(0),
        };
        let out = aggregate_clips(&scorer, &frames(10, 4, 0), &small_config(), &mut rng::stream(0, "p", 0))
            .unwrap();
        assert_eq!(out, alloc::vec![0.75, 0.25]);
    }

    #[test]
    fn identical_clips_match_single_prediction() {
        let cfg = small_config();
        let dims = EncoderDims::from_config(&cfg, 4).unwrap();
        let p = EncoderParams::init(dims, &mut rng::stream(0, "init", 0));
        let f = frames(5, 4, 1);
        let clip = sample_clip(&f, 5, &mut rng::stream(0, "c", 0)).unwrap();
        let single = EncoderScorer { params: &p, mode: PredictMode::Task }.score(&clip).unwrap();
        let multi = predict_video(&p, &f, &cfg, &mut rng::stream(0, "v", 0), PredictMode::Task).unwrap();
        for (a, b) in single.iter().zip(&multi) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((multi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn biomarker_mode_is_probability() {
        let cfg = small_config();
        let dims = EncoderDims::from_config(&cfg, 38).unwrap();
        let p = EncoderParams::init(dims, &mut rng::stream(1, "init", 0));
        let out = predict_video(&p, &frames(12, 4, 2), &cfg, &mut rng::stream(0, "v", 0), PredictMode::Biomarker)
            .unwrap();
        assert_eq!(out.len(), 38);
        assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }
}
