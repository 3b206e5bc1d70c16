//! Toy temporal-shift video encoder with hand-written backpropagation.
//!
//! Each frame is flattened and embedded by a dense layer with ReLU; residual
//! blocks then apply a bidirectional temporal shift followed by a per-frame
//! affine map and ReLU; the trunk output is mean-pooled over time and fed to a
//! linear head (38 sigmoid biomarkers or a softmax task head).

mod gradcheck;
mod model;
mod optim;
mod predict;
mod shift;
mod train;

pub use gradcheck::{grad_check, FD_STEP};
pub use model::{
    forward, loss_and_dlogits, loss_and_gradient, sigmoid, softmax, BlockParams, EncoderDims,
    EncoderParams, ForwardOutput, Target,
};
pub use optim::{Adam, PlateauScheduler};
pub use predict::{
    aggregate_clips, argmax, predict_video, video_feature, ClipScorer, EncoderScorer,
    FeatureScorer, PredictMode,
};
pub use shift::{shift_count, temporal_shift};
pub use train::{
    initial_params, train, train_biomarker, train_e2e, validation_accuracy, EpochStats,
    Objective, TrainHistory, Trained,
};
