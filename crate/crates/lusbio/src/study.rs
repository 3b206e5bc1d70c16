//! Desk-scale synthetic study comparing biomarker bottleneck pipelines with
//! end-to-end training.
//!
//! On the synthetic generator the labels are functions of the true
//! biomarkers, so an expert on true biomarkers gives a ceiling, and the
//! learned-biomarker pipeline should land between it and end-to-end.

use std::time::{Duration, Instant};

use lusbio_core::data::{Dataset, SynthParams};
use lusbio_core::experts::ExpertKind;
use lusbio_core::{Task, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::harness::{run_crossval_on, CrossvalResult, DataSource, ExperimentConfig, Method};
use crate::Result;

pub const TASKS: [Task; 3] = [Task::Severity, Task::SfRatio, Task::Disease];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub data: SynthParams,
    pub train: TrainConfig,
    pub expert: ExpertKind,
    pub base_seed: u64,
}

impl Default for StudyConfig {
    /// Fewer epochs at a higher rate than the full-scale schedule, to fit a
    /// single CPU.
    fn default() -> Self {
        StudyConfig {
            data: SynthParams::default(),
            train: TrainConfig {
                learning_rate: 1e-3,
                epochs: 30,
                ..TrainConfig::default()
            },
            expert: ExpertKind::Mlp,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaskComparison {
    pub task: Task,
    pub e2e: CrossvalResult,
    pub bio_expert: CrossvalResult,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub comparisons: Vec<TaskComparison>,
    /// Expert on annotated biomarkers, severity task.
    pub true_bio: CrossvalResult,
    pub elapsed: Duration,
}

impl StudyResult {
    pub fn comparison(&self, task: Task) -> &TaskComparison {
        self.comparisons.iter().find(|c| c.task == task).expect("all tasks run")
    }
}

fn experiment(config: &StudyConfig, method: Method, task: Task) -> ExperimentConfig {
    ExperimentConfig {
        method,
        task,
        expert_kind: method.uses_expert().then_some(config.expert),
        train_config: config.train.clone(),
        dataset: DataSource::Synthetic(config.data.clone()),
        base_seed: config.base_seed,
    }
}

pub fn run_study(config: &StudyConfig, dataset: &Dataset) -> Result<StudyResult> {
    let start = Instant::now();
    let true_bio = run_crossval_on(dataset, &experiment(config, Method::TrueBioExpert, Task::Severity))?;
    let mut comparisons = Vec::new();
    for task in TASKS {
        comparisons.push(TaskComparison {
            task,
            e2e: run_crossval_on(dataset, &experiment(config, Method::E2E, task))?,
            bio_expert: run_crossval_on(dataset, &experiment(config, Method::BioExpert, task))?,
        });
    }
    Ok(StudyResult {
        comparisons,
        true_bio,
        elapsed: start.elapsed(),
    })
}
