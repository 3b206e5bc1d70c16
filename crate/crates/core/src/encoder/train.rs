use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{accumulate_gradient, EncoderDims, EncoderParams, Target};
use super::optim::{Adam, PlateauScheduler};
use super::predict::{argmax, predict_video, PredictMode};
use crate::data::{augment, sample_clip, VideoRecord};
use crate::rng;
use crate::schema::{Task, TrainConfig, NUM_BIOMARKERS};
use crate::{Error, Result};

/// What the encoder head is trained to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Biomarkers,
    Task(Task),
}

impl Objective {
    pub fn out_dim(self) -> usize {
        match self {
            Objective::Biomarkers => NUM_BIOMARKERS,
            Objective::Task(t) => t.num_classes(),
        }
    }

    fn mode(self) -> PredictMode {
        match self {
            Objective::Biomarkers => PredictMode::Biomarker,
            Objective::Task(_) => PredictMode::Task,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept; the earliest maximiser of `val_acc`.
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub params: EncoderParams,
    pub history: TrainHistory,
}

fn check_records(records: &[VideoRecord], objective: Objective, config: &TrainConfig) -> Result<()> {
    for r in records {
        match objective {
            Objective::Biomarkers => {
                r.biomarkers()?;
            }
            Objective::Task(t) => {
                r.task_label(t)?;
            }
        }
        if r.frames.side() != config.frame_side {
            return Err(Error::Validation {
                record: r.video_id.clone(),
                reason: alloc::format!(
                    "frame side {} differs from configured {}",
                    r.frames.side(),
                    config.frame_side
                ),
            });
        }
        if r.frames.count() < config.frames_per_clip {
            return Err(Error::TooFewFrames {
                needed: config.frames_per_clip,
                found: r.frames.count(),
            });
        }
    }
    Ok(())
}

/// Validation accuracy: per-feature thresholded agreement for biomarkers,
/// top-1 accuracy for tasks. Clip draws are keyed by video id so every epoch
/// is scored on the same clips.
pub fn validation_accuracy(
    params: &EncoderParams,
    records: &[VideoRecord],
    objective: Objective,
    config: &TrainConfig,
) -> Result<f64> {
    let mut correct = 0.0;
    let mut total = 0.0;
    for r in records {
        let mut clip_rng = rng::keyed(config.rng_seed, "val-clips", &r.video_id);
        let pred = predict_video(params, &r.frames, config, &mut clip_rng, objective.mode())?;
        match objective {
            Objective::Biomarkers => {
                for (p, y) in pred.iter().zip(r.biomarkers()?.values()) {
                    if (*p > 0.5) == (*y > 0.5) {
                        correct += 1.0;
                    }
                    total += 1.0;
                }
            }
            Objective::Task(t) => {
                if argmax(&pred) == r.task_label(t)? {
                    correct += 1.0;
                }
                total += 1.0;
            }
        }
    }
    Ok(correct / total)
}

fn target_of<'a>(record: &'a VideoRecord, objective: Objective) -> Result<Target<'a>> {
    Ok(match objective {
        Objective::Biomarkers => Target::Biomarkers(record.biomarkers()?.values()),
        Objective::Task(t) => Target::Class(record.task_label(t)?),
    })
}

/// Parameters at epoch 0: a fresh encoder, or `init`'s trunk with a newly
/// initialised head.
pub fn initial_params(
    objective: Objective,
    config: &TrainConfig,
    init: Option<&EncoderParams>,
) -> Result<EncoderParams> {
    let dims = EncoderDims::from_config(config, objective.out_dim())?;
    let seed = config.rng_seed;
    Ok(match init {
        Some(init) => {
            if !init.dims.same_trunk(&dims) {
                return Err(Error::shape(
                    alloc::format!("{dims:?}"),
                    alloc::format!("{:?}", init.dims),
                ));
            }
            init.with_fresh_head(dims.out_dim, &mut rng::stream(seed, "head-init", 0))
        }
        None => EncoderParams::init(dims, &mut rng::stream(seed, "encoder-init", 0)),
    })
}

/// Shared optimisation loop: Adam over mini-batches of one freshly sampled,
/// augmented clip per record, plateau learning-rate decay on validation
/// accuracy, and best-epoch checkpointing.
pub fn train(
    train: &[VideoRecord],
    val: &[VideoRecord],
    objective: Objective,
    config: &TrainConfig,
    init: Option<&EncoderParams>,
) -> Result<Trained> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if val.is_empty() {
        return Err(Error::invalid("empty validation set"));
    }
    check_records(train, objective, config)?;
    check_records(val, objective, config)?;

    let seed = config.rng_seed;
    let mut params = initial_params(objective, config, init)?;
    let dims = params.dims;

    let mut adam = Adam::new(&params);
    let mut schedule =
        PlateauScheduler::new(config.learning_rate, config.plateau_factor, config.plateau_patience);
    let mut grads = EncoderParams::zeros(dims);
    let mut best = params.clone();
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        let lr = schedule.lr();
        order.sort_unstable();
        order.shuffle(&mut rng::stream(seed, "epoch-order", epoch as u64));
        let mut clip_rng = rng::stream(seed, "epoch-clips", epoch as u64);
        let mut total_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            for g in grads.tensors_mut() {
                g.fill(0.0);
            }
            for &i in batch {
                let r = &train[i];
                let clip = sample_clip(&r.frames, config.frames_per_clip, &mut clip_rng)?;
                let clip = augment(&clip, &mut clip_rng, config.augment);
                total_loss += accumulate_gradient(&params, &clip, target_of(r, objective)?, &mut grads)?;
            }
            let scale = 1.0 / batch.len() as f64;
            for g in grads.tensors_mut() {
                g.iter_mut().for_each(|v| *v *= scale);
            }
            adam.step(&mut params, &grads, lr);
        }
        if !params.is_finite() {
            return Err(Error::Degenerate(alloc::format!(
                "parameters diverged in epoch {epoch}"
            )));
        }
        let val_acc = validation_accuracy(&params, val, objective, config)?;
        if schedule.observe(val_acc) {
            best = params.clone();
            history.best_epoch = epoch;
        }
        history.epochs.push(EpochStats {
            epoch,
            train_loss: total_loss / train.len() as f64,
            val_acc,
            lr,
        });
    }
    Ok(Trained {
        params: best,
        history,
    })
}

/// Weakly supervised biomarker training: 38 sigmoid outputs, mean BCE.
pub fn train_biomarker(
    train_records: &[VideoRecord],
    val_records: &[VideoRecord],
    config: &TrainConfig,
) -> Result<Trained> {
    train(train_records, val_records, Objective::Biomarkers, config, None)
}

/// End-to-end task training with a softmax head, optionally warm-started
/// from another encoder's trunk.
pub fn train_e2e(
    train_records: &[VideoRecord],
    val_records: &[VideoRecord],
    task: Task,
    config: &TrainConfig,
    init: Option<&EncoderParams>,
) -> Result<Trained> {
    train(train_records, val_records, Objective::Task(task), config, init)
}
