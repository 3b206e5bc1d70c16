//! Experiment matrix: patient-level cross-validation over the method
//! pipelines, feature extraction, labeler agreement and report files.
//!
//! Protocol: a seeded four-way patient split; fold 3 is the held-out test
//! set for every run. Run `r` validates on fold `r` and trains on the other
//! two, oversampled on the task label. Each run derives its own seed from the
//! base seed, so results do not depend on the order runs execute in.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use lusbio_core::data::{
    generate_synthetic, oversample, patient_split, Dataset, FoldAssignment, SynthParams, VideoRecord,
};
use lusbio_core::encoder::{
    predict_video, train_biomarker, train_e2e, video_feature, EncoderParams, PredictMode,
};
use lusbio_core::experts::{fit_best_of_3, ExpertKind};
use lusbio_core::metrics::{agreement, auc_ovo_weighted, ConfusionMatrix, EvalReport};
use lusbio_core::schema::NUM_BIOMARKERS;
use lusbio_core::{rng, Task, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::formats::{self, FeatureTable, LabelTable};
use crate::{Error, Result};

pub const HELD_OUT_FOLD: usize = 3;
pub const NUM_RUNS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Encoder trained on the task, evaluated directly.
    #[serde(rename = "E2E")]
    E2E,
    /// Expert fitted on the trunk features of an end-to-end encoder.
    #[serde(rename = "E2E_Expert")]
    E2EExpert,
    /// Expert fitted on predicted biomarker vectors.
    #[serde(rename = "Bio_Expert")]
    BioExpert,
    /// End-to-end training warm-started from a biomarker encoder.
    #[serde(rename = "PretrainBio_E2E")]
    PretrainBioE2E,
    /// Expert fitted on trunk features of a severity encoder.
    #[serde(rename = "LSFeatures_Expert")]
    LSFeaturesExpert,
    /// Expert fitted on the annotated biomarker vectors themselves.
    #[serde(rename = "TrueBio_Expert")]
    TrueBioExpert,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::E2E,
        Method::E2EExpert,
        Method::BioExpert,
        Method::PretrainBioE2E,
        Method::LSFeaturesExpert,
        Method::TrueBioExpert,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::E2E => "E2E",
            Method::E2EExpert => "E2E_Expert",
            Method::BioExpert => "Bio_Expert",
            Method::PretrainBioE2E => "PretrainBio_E2E",
            Method::LSFeaturesExpert => "LSFeatures_Expert",
            Method::TrueBioExpert => "TrueBio_Expert",
        }
    }

    pub fn uses_expert(self) -> bool {
        !matches!(self, Method::E2E | Method::PretrainBioE2E)
    }

    fn needs_biomarkers(self) -> bool {
        matches!(self, Method::BioExpert | Method::PretrainBioE2E | Method::TrueBioExpert)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Manifest { path: PathBuf },
    Synthetic(SynthParams),
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Manifest { path } => formats::load_manifest(path),
            DataSource::Synthetic(p) => Ok(generate_synthetic(p)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: Method,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_kind: Option<ExpertKind>,
    #[serde(default)]
    pub train_config: TrainConfig,
    pub dataset: DataSource,
    #[serde(default)]
    pub base_seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        match (self.method.uses_expert(), self.expert_kind) {
            (true, None) => {
                return Err(Error::Config(format!("{} needs an expert_kind", self.method)))
            }
            (false, Some(k)) => {
                return Err(Error::Config(format!("{} takes no expert, got {k}", self.method)))
            }
            _ => {}
        }
        self.train_config.validate()?;
        Ok(())
    }

    /// `method` or `method:expert`, as shown in reports.
    pub fn label(&self) -> String {
        match self.expert_kind {
            Some(k) => format!("{}:{k}", self.method),
            None => self.method.to_string(),
        }
    }
}

fn check_labels(dataset: &Dataset, config: &ExperimentConfig) -> Result<()> {
    for r in dataset.records() {
        r.task_label(config.task)?;
        if config.method == Method::LSFeaturesExpert {
            r.task_label(Task::Severity)?;
        }
        if config.method.needs_biomarkers() {
            r.biomarkers()?;
        }
    }
    Ok(())
}

/// Seed of run `r`, derived from the base seed.
pub fn run_seed(base_seed: u64, run: usize) -> u64 {
    rng::stable_hash(format!("crossval-run/{base_seed}/{run}").as_bytes())
}

/// Video ids of one run's partition, before oversampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSplit {
    pub training: Vec<String>,
    pub validation: Vec<String>,
}

/// The records each role sees in run `run`.
pub struct RunData {
    pub training: Vec<VideoRecord>,
    pub validation: Vec<VideoRecord>,
    pub held_out: Vec<VideoRecord>,
}

pub fn run_data(dataset: &Dataset, folds: &FoldAssignment, run: usize) -> RunData {
    let train_patients: Vec<String> = (0..NUM_RUNS)
        .filter(|&f| f != run)
        .flat_map(|f| folds.folds[f].iter().cloned())
        .collect();
    RunData {
        training: dataset.records_for(&train_patients),
        validation: dataset.records_for(&folds.folds[run]),
        held_out: dataset.records_for(&folds.folds[HELD_OUT_FOLD]),
    }
}

fn ids(records: &[VideoRecord]) -> Vec<String> {
    records.iter().map(|r| r.video_id.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run: usize,
    pub seed: u64,
    pub split: RunSplit,
    pub report: EvalReport,
    /// Validation accuracies of the three expert candidates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_scores: Option<[f64; 3]>,
    /// Best epoch of each encoder trained in the run, by stage.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub best_epochs: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub run: usize,
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// `None` if any run's AUC was undefined.
    pub auc_ovo_weighted: Option<MeanStd>,
    pub accuracy: MeanStd,
    pub precision_weighted: MeanStd,
    pub f1_weighted: MeanStd,
}

impl Summary {
    pub fn of(reports: &[EvalReport]) -> Summary {
        let col = |f: fn(&EvalReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
        let aucs: Option<Vec<f64>> = reports.iter().map(|r| r.auc_ovo_weighted).collect();
        Summary {
            auc_ovo_weighted: aucs.map(|a| MeanStd::of(&a)),
            accuracy: col(|r| r.accuracy),
            precision_weighted: col(|r| r.precision_weighted),
            f1_weighted: col(|r| r.f1_weighted),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalResult {
    pub method: Method,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_kind: Option<ExpertKind>,
    pub base_seed: u64,
    pub held_out: Vec<String>,
    pub runs: Vec<RunOutcome>,
    pub summary: Summary,
    /// Wall-clock per stage; the only non-deterministic field. Callers that
    /// persist results write it separately.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timings: Vec<StageTiming>,
}

pub fn run_crossval(config: &ExperimentConfig) -> Result<CrossvalResult> {
    config.validate()?;
    let dataset = config.dataset.load()?;
    run_crossval_on(&dataset, config)
}

pub fn run_crossval_on(dataset: &Dataset, config: &ExperimentConfig) -> Result<CrossvalResult> {
    config.validate()?;
    check_labels(dataset, config)?;
    let folds = patient_split(dataset, config.base_seed)?;
    let mut runs = Vec::with_capacity(NUM_RUNS);
    let mut timings = Vec::new();
    for run in 0..NUM_RUNS {
        let mut ctx = RunContext {
            run,
            seed: run_seed(config.base_seed, run),
            config,
            timings: &mut timings,
            best_epochs: Vec::new(),
        };
        runs.push(ctx.execute(&run_data(dataset, &folds, run))?);
    }
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    Ok(CrossvalResult {
        method: config.method,
        task: config.task,
        expert_kind: config.expert_kind,
        base_seed: config.base_seed,
        held_out: ids(&dataset.records_for(&folds.folds[HELD_OUT_FOLD])),
        runs,
        summary: Summary::of(&reports),
        timings,
    })
}

struct RunContext<'a> {
    run: usize,
    seed: u64,
    config: &'a ExperimentConfig,
    timings: &'a mut Vec<StageTiming>,
    best_epochs: Vec<(String, usize)>,
}

/// Per-video feature or probability rows keyed by video id.
type Rows = HashMap<String, Vec<f64>>;

impl RunContext<'_> {
    fn stage<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| Error::Stage {
            run: self.run,
            stage,
            source: Box::new(e),
        })?;
        self.timings.push(StageTiming {
            run: self.run,
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            rng_seed: self.seed,
            ..self.config.train_config.clone()
        }
    }

    fn encoder_e2e(
        &mut self,
        name: &'static str,
        train: &[VideoRecord],
        val: &[VideoRecord],
        task: Task,
        init: Option<&EncoderParams>,
    ) -> Result<EncoderParams> {
        let tc = self.train_config();
        let trained = self.stage(name, || Ok(train_e2e(train, val, task, &tc, init)?))?;
        self.best_epochs.push((name.into(), trained.history.best_epoch));
        Ok(trained.params)
    }

    fn encoder_bio(&mut self, train: &[VideoRecord], val: &[VideoRecord]) -> Result<EncoderParams> {
        let tc = self.train_config();
        let trained = self.stage("train_biomarker", || Ok(train_biomarker(train, val, &tc)?))?;
        self.best_epochs.push(("train_biomarker".into(), trained.history.best_epoch));
        Ok(trained.params)
    }

    /// Rows for every distinct video in `records`.
    fn rows(&mut self, params: Option<&EncoderParams>, mode: FeatureMode, records: &[&[VideoRecord]]) -> Result<Rows> {
        let tc = self.train_config();
        let seed = self.seed;
        self.stage("extract_features", || {
            let mut out = Rows::new();
            for r in records.iter().flat_map(|s| s.iter()) {
                if out.contains_key(&r.video_id) {
                    continue;
                }
                let row = match params {
                    Some(p) => video_row(p, r, &tc, mode, seed)?,
                    None => r.biomarkers()?.values().to_vec(),
                };
                out.insert(r.video_id.clone(), row);
            }
            Ok(out)
        })
    }

    fn expert_probs(&mut self, rows: &Rows, data: &RunData, train: &[VideoRecord]) -> Result<(Vec<Vec<f64>>, [f64; 3])> {
        let task = self.config.task;
        let kind = self.config.expert_kind.expect("validated");
        let seed = self.seed;
        self.stage("fit_expert", || {
            let table = |recs: &[VideoRecord]| -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
                let x = recs.iter().map(|r| rows[&r.video_id].clone()).collect();
                let y = recs.iter().map(|r| r.task_label(task)).collect::<lusbio_core::Result<_>>()?;
                Ok((x, y))
            };
            let (tx, ty) = table(train)?;
            let (vx, vy) = table(&data.validation)?;
            let (hx, _) = table(&data.held_out)?;
            let sel = fit_best_of_3(&tx, &ty, &vx, &vy, kind, seed)?;
            Ok((sel.model.predict_proba_full(&hx, task.num_classes())?, sel.scores))
        })
    }

    fn execute(&mut self, data: &RunData) -> Result<RunOutcome> {
        let task = self.config.task;
        let train = oversample(&data.training, task, self.seed)?;
        let all: [&[VideoRecord]; 3] = [&data.training, &data.validation, &data.held_out];
        let mut expert_scores = None;
        let probs = match self.config.method {
            Method::E2E => {
                let params = self.encoder_e2e("train_e2e", &train, &data.validation, task, None)?;
                self.task_probs(&params, &data.held_out)?
            }
            Method::PretrainBioE2E => {
                let bio = self.encoder_bio(&train, &data.validation)?;
                let params = self.encoder_e2e("train_e2e", &train, &data.validation, task, Some(&bio))?;
                self.task_probs(&params, &data.held_out)?
            }
            method => {
                let rows = match method {
                    Method::E2EExpert => {
                        let p = self.encoder_e2e("train_e2e", &train, &data.validation, task, None)?;
                        self.rows(Some(&p), FeatureMode::Trunk, &all)?
                    }
                    Method::LSFeaturesExpert => {
                        let ls_train = oversample(&data.training, Task::Severity, self.seed)?;
                        let p = self.encoder_e2e("train_e2e_severity", &ls_train, &data.validation, Task::Severity, None)?;
                        self.rows(Some(&p), FeatureMode::Trunk, &all)?
                    }
                    Method::BioExpert => {
                        let p = self.encoder_bio(&train, &data.validation)?;
                        self.rows(Some(&p), FeatureMode::Biomarker, &all)?
                    }
                    _ => self.rows(None, FeatureMode::Biomarker, &all)?,
                };
                let (probs, scores) = self.expert_probs(&rows, data, &train)?;
                expert_scores = Some(scores);
                probs
            }
        };
        let y: Vec<usize> = data
            .held_out
            .iter()
            .map(|r| r.task_label(task))
            .collect::<lusbio_core::Result<_>>()?;
        let label = self.config.label();
        let report = self.stage("evaluate", || {
            Ok(EvalReport::evaluate(task.name(), &label, &probs, &y, task.num_classes())?)
        })?;
        Ok(RunOutcome {
            run: self.run,
            seed: self.seed,
            split: RunSplit {
                training: ids(&data.training),
                validation: ids(&data.validation),
            },
            report,
            expert_scores,
            best_epochs: std::mem::take(&mut self.best_epochs),
        })
    }

    fn task_probs(&mut self, params: &EncoderParams, records: &[VideoRecord]) -> Result<Vec<Vec<f64>>> {
        let tc = self.train_config();
        let seed = self.seed;
        self.stage("predict", || {
            records
                .iter()
                .map(|r| {
                    let mut clips = rng::keyed(seed, "eval-clips", &r.video_id);
                    Ok(predict_video(params, &r.frames, &tc, &mut clips, PredictMode::Task)?)
                })
                .collect()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// 38 sigmoid probabilities from a biomarker encoder.
    Biomarker,
    /// Mean pooled trunk feature, `channels` wide.
    Trunk,
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "biomarker" | "bio" => Ok(FeatureMode::Biomarker),
            "trunk" => Ok(FeatureMode::Trunk),
            other => Err(Error::Config(format!("unknown feature mode {other:?}"))),
        }
    }
}

fn video_row(params: &EncoderParams, record: &VideoRecord, config: &TrainConfig, mode: FeatureMode, seed: u64) -> Result<Vec<f64>> {
    let mut clips = rng::keyed(seed, "features", &record.video_id);
    Ok(match mode {
        FeatureMode::Biomarker => predict_video(params, &record.frames, config, &mut clips, PredictMode::Biomarker)?,
        FeatureMode::Trunk => video_feature(params, &record.frames, config, &mut clips)?,
    })
}

/// One row per video: biomarker probabilities or the trunk feature. Clip
/// draws are keyed by `config.rng_seed` and the video id.
pub fn extract_features(params: &EncoderParams, dataset: &Dataset, config: &TrainConfig, mode: FeatureMode) -> Result<FeatureTable> {
    let dims = params.dims;
    if let Some(side) = dataset.frame_side() {
        if side != dims.frame_side {
            return Err(lusbio_core::Error::shape(format!("frame side {}", dims.frame_side), side).into());
        }
    }
    if mode == FeatureMode::Biomarker && dims.out_dim != NUM_BIOMARKERS {
        return Err(lusbio_core::Error::shape(format!("{NUM_BIOMARKERS} biomarker outputs"), dims.out_dim).into());
    }
    let config = TrainConfig {
        frame_side: dims.frame_side,
        channels: dims.channels,
        blocks: dims.blocks,
        ..config.clone()
    };
    let rows = dataset
        .records()
        .iter()
        .map(|r| Ok((r.video_id.clone(), video_row(params, r, &config, mode, config.rng_seed)?)))
        .collect::<Result<_>>()?;
    Ok(FeatureTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n: usize,
    pub accuracy: f64,
    /// Rows: first source, columns: second source.
    pub confusion: ConfusionMatrix,
    /// One-vs-one AUC of the first source's probabilities against the second
    /// source's labels, when the first source carries probabilities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc_ovo_weighted: Option<f64>,
}

/// Joins two label tables on video id and measures how often they agree.
pub fn run_agreement(a: &LabelTable, b: &LabelTable, k: usize) -> Result<AgreementReport> {
    let index = |t: &LabelTable, which: &str| -> Result<HashMap<String, usize>> {
        let mut m = HashMap::new();
        for (i, r) in t.rows.iter().enumerate() {
            if m.insert(r.video_id.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate video id {} in {which} table", r.video_id)));
            }
        }
        Ok(m)
    };
    let (ia, ib) = (index(a, "first")?, index(b, "second")?);
    let only = |x: &HashMap<String, usize>, y: &HashMap<String, usize>| -> Vec<String> {
        let s: BTreeSet<&String> = x.keys().filter(|k| !y.contains_key(*k)).collect();
        s.into_iter().cloned().collect()
    };
    let (only_first, only_second) = (only(&ia, &ib), only(&ib, &ia));
    if !only_first.is_empty() || !only_second.is_empty() {
        return Err(Error::IdMismatch { only_first, only_second });
    }
    let la: Vec<usize> = a.rows.iter().map(|r| r.label).collect();
    let lb: Vec<usize> = a.rows.iter().map(|r| b.rows[ib[&r.video_id]].label).collect();
    let ag = agreement(&la, &lb, k)?;
    let probs: Option<Vec<Vec<f64>>> = a.rows.iter().map(|r| r.probs.clone()).collect();
    let auc = match probs {
        Some(p) => auc_ovo_weighted(&p, &lb)?,
        None => None,
    };
    Ok(AgreementReport {
        n: la.len(),
        accuracy: ag.accuracy,
        confusion: ag.confusion,
        auc_ovo_weighted: auc,
    })
}

/// One line of a report: the across-run summary of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub task: String,
    pub method: String,
    pub expert: String,
    pub runs: usize,
    pub auc_mean: Option<f64>,
    pub auc_std: Option<f64>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub precision_mean: f64,
    pub precision_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

impl ReportRow {
    pub fn from_result(r: &CrossvalResult) -> ReportRow {
        let s = &r.summary;
        ReportRow {
            task: r.task.name().into(),
            method: r.method.name().into(),
            expert: r.expert_kind.map(|k| k.name().to_string()).unwrap_or_default(),
            runs: r.runs.len(),
            auc_mean: s.auc_ovo_weighted.map(|a| a.mean),
            auc_std: s.auc_ovo_weighted.map(|a| a.std),
            accuracy_mean: s.accuracy.mean,
            accuracy_std: s.accuracy.std,
            precision_mean: s.precision_weighted.mean,
            precision_std: s.precision_weighted.std,
            f1_mean: s.f1_weighted.mean,
            f1_std: s.f1_weighted.std,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    /// From a file extension; anything but `.json` is CSV.
    pub fn for_path(path: &Path) -> ReportFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => ReportFormat::Json,
            _ => ReportFormat::Csv,
        }
    }
}

const REPORT_COLUMNS: [&str; 12] = [
    "task",
    "method",
    "expert",
    "runs",
    "auc_mean",
    "auc_std",
    "accuracy_mean",
    "accuracy_std",
    "precision_mean",
    "precision_std",
    "f1_mean",
    "f1_std",
];

/// Marker for an AUC that could not be computed.
pub const UNDEFINED: &str = "undefined";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| x.to_string())
}

pub fn write_report(rows: &[ReportRow], path: &Path, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Json => formats::write_json(path, &rows),
        ReportFormat::Csv => {
            let csv_err = |source| Error::Csv {
                path: path.into(),
                source,
            };
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(REPORT_COLUMNS).map_err(csv_err)?;
            for r in rows {
                w.write_record([
                    r.task.clone(),
                    r.method.clone(),
                    r.expert.clone(),
                    r.runs.to_string(),
                    opt(r.auc_mean),
                    opt(r.auc_std),
                    r.accuracy_mean.to_string(),
                    r.accuracy_std.to_string(),
                    r.precision_mean.to_string(),
                    r.precision_std.to_string(),
                    r.f1_mean.to_string(),
                    r.f1_std.to_string(),
                ])
                .map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
        }
    }
}

pub fn read_report(path: &Path, format: ReportFormat) -> Result<Vec<ReportRow>> {
    match format {
        ReportFormat::Json => formats::read_json(path),
        ReportFormat::Csv => {
            let csv_err = |source| Error::Csv {
                path: path.into(),
                source,
            };
            let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
            let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
            if header != REPORT_COLUMNS {
                return Err(Error::format(path, "unexpected report columns"));
            }
            let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::format(path, format!("not a number: {s:?}"))) };
            let maybe = |s: &str| -> Result<Option<f64>> { if s == UNDEFINED { Ok(None) } else { num(s).map(Some) } };
            let mut rows = Vec::new();
            for rec in r.records() {
                let f = rec.map_err(csv_err)?;
                rows.push(ReportRow {
                    task: f[0].into(),
                    method: f[1].into(),
                    expert: f[2].into(),
                    runs: f[3].parse().map_err(|_| Error::format(path, "bad run count"))?,
                    auc_mean: maybe(&f[4])?,
                    auc_std: maybe(&f[5])?,
                    accuracy_mean: num(&f[6])?,
                    accuracy_std: num(&f[7])?,
                    precision_mean: num(&f[8])?,
                    precision_std: num(&f[9])?,
                    f1_mean: num(&f[10])?,
                    f1_std: num(&f[11])?,
                });
            }
            Ok(rows)
        }
    }
}

/// Writes the report rows of `results` to `path`.
pub fn report(results: &[CrossvalResult], path: &Path, format: ReportFormat) -> Result<()> {
    let rows: Vec<ReportRow> = results.iter().map(ReportRow::from_result).collect();
    write_report(&rows, path, format)
}

/// The training, validation and held-out records of one protocol run, for
/// commands that train a single model outside a full cross-validation.
pub fn protocol_run(dataset: &Dataset, base_seed: u64, run: usize) -> Result<RunData> {
    if run >= NUM_RUNS {
        return Err(Error::Config(format!("run must be below {NUM_RUNS}")));
    }
    let folds = patient_split(dataset, base_seed)?;
    Ok(run_data(dataset, &folds, run))
}

/// Synthetic dataset wrapper used by the CLI.
pub fn synthetic(params: &SynthParams) -> Result<Dataset> {
    Ok(generate_synthetic(params)?)
}
