use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use lusbio::core::data::SynthParams;
use lusbio::core::encoder::{train_biomarker, train_e2e};
use lusbio::core::experts::{fit_best_of_3, ExpertKind};
use lusbio::core::metrics::EvalReport;
use lusbio::core::{Task, TrainConfig};
use lusbio::formats::{self, FeatureTable, LabelRow, LabelTable};
use lusbio::harness::{
    self, run_agreement, CrossvalResult, DataSource, ExperimentConfig, FeatureMode, Method,
    ReportFormat,
};
use lusbio::server;

#[derive(Parser)]
#[command(name = "lusbio", version, about = "Lung-ultrasound biomarker pipeline")]
struct Cli {
    /// Base seed for splits, training and synthesis [default: 0, or the
    /// config's base seed].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a manifest.
    SynthGen {
        #[arg(long, default_value_t = 160)]
        patients: usize,
        #[arg(long, default_value_t = 3)]
        videos_per_patient: usize,
        #[arg(long, default_value_t = 0.05)]
        label_noise: f64,
        #[arg(long, default_value_t = 0.08)]
        pixel_noise: f64,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long, default_value_t = 32)]
        side: usize,
    },
    /// Train the biomarker encoder on one protocol run.
    TrainBio {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Train an end-to-end encoder on one protocol run.
    TrainE2e {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        task: Option<Task>,
        /// Warm start from this checkpoint.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Per-video features from a trained encoder.
    ExtractFeatures {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// `biomarker` or `trunk`.
        #[arg(long, default_value = "biomarker")]
        mode: FeatureMode,
    },
    /// Fit an expert (best of three seeds) on a feature table.
    FitExpert {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        task: Option<Task>,
        #[arg(long)]
        kind: Option<ExpertKind>,
        #[arg(long, default_value_t = 0)]
        run: usize,
        /// Also write held-out predictions as a label table.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Three-run patient cross-validation of one experiment.
    Crossval {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        task: Option<Task>,
        #[arg(long)]
        expert: Option<ExpertKind>,
    },
    /// Agreement between two label tables.
    Agreement {
        first: PathBuf,
        second: PathBuf,
        #[arg(long)]
        classes: usize,
    },
    /// Summary table over cross-validation results.
    Report {
        results: Vec<PathBuf>,
    },
    /// Serve the annotation API.
    ServeAnnotator {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(p) => Some(formats::read_json::<ExperimentConfig>(p)?),
        None => None,
    };
    let ctx = Ctx {
        seed: cli.seed.or(config.as_ref().map(|c| c.base_seed)).unwrap_or(0),
        config,
        out: cli.out,
    };
    ctx.dispatch(cli.command)
}

struct Ctx {
    seed: u64,
    config: Option<ExperimentConfig>,
    out: Option<PathBuf>,
}

impl Ctx {
    fn out(&self) -> anyhow::Result<&Path> {
        self.out.as_deref().context("--out is required")
    }

    fn train_config(&self) -> TrainConfig {
        self.config.as_ref().map(|c| c.train_config.clone()).unwrap_or_default()
    }

    fn source(&self, manifest: Option<PathBuf>) -> anyhow::Result<DataSource> {
        match (manifest, &self.config) {
            (Some(path), _) => Ok(DataSource::Manifest { path }),
            (None, Some(c)) => Ok(c.dataset.clone()),
            (None, None) => bail!("give --manifest or a --config with a dataset"),
        }
    }

    fn task(&self, task: Option<Task>) -> anyhow::Result<Task> {
        task.or(self.config.as_ref().map(|c| c.task)).context("--task is required")
    }

    /// Training config seeded the way the cross-validation seeds run `run`.
    fn run_config(&self, run: usize) -> TrainConfig {
        TrainConfig {
            rng_seed: harness::run_seed(self.seed, run),
            ..self.train_config()
        }
    }

    fn dispatch(&self, command: Command) -> anyhow::Result<()> {
        match command {
            Command::SynthGen {
                patients,
                videos_per_patient,
                label_noise,
                pixel_noise,
                frames,
                side,
            } => {
                let ds = harness::synthetic(&SynthParams {
                    n_patients: patients,
                    videos_per_patient,
                    label_noise,
                    pixel_noise_sigma: pixel_noise,
                    seed: self.seed,
                    frames_per_video: frames,
                    frame_side: side,
                })?;
                let manifest = formats::save_dataset(&ds, self.out()?)?;
                println!("{}", manifest.display());
            }
            Command::TrainBio { manifest, run } => {
                let ds = self.source(manifest)?.load()?;
                let data = harness::protocol_run(&ds, self.seed, run)?;
                let task = self.task(None).unwrap_or(Task::Severity);
                let train = lusbio::core::data::oversample(&data.training, task, harness::run_seed(self.seed, run))?;
                let trained = train_biomarker(&train, &data.validation, &self.run_config(run))?;
                self.save_encoder(&trained.params, &trained.history)?;
            }
            Command::TrainE2e { manifest, task, init, run } => {
                let task = self.task(task)?;
                let ds = self.source(manifest)?.load()?;
                let data = harness::protocol_run(&ds, self.seed, run)?;
                let train = lusbio::core::data::oversample(&data.training, task, harness::run_seed(self.seed, run))?;
                let init = init.map(|p| formats::read_checkpoint(&p)).transpose()?;
                let trained = train_e2e(&train, &data.validation, task, &self.run_config(run), init.as_ref())?;
                self.save_encoder(&trained.params, &trained.history)?;
            }
            Command::ExtractFeatures { manifest, checkpoint, mode } => {
                let ds = self.source(manifest)?.load()?;
                let params = formats::read_checkpoint(&checkpoint)?;
                let cfg = TrainConfig {
                    rng_seed: self.seed,
                    ..self.train_config()
                };
                let table = harness::extract_features(&params, &ds, &cfg, mode)?;
                formats::write_features(self.out()?, &table)?;
            }
            Command::FitExpert {
                manifest,
                features,
                task,
                kind,
                run,
                predictions,
            } => {
                let task = self.task(task)?;
                let kind = kind
                    .or(self.config.as_ref().and_then(|c| c.expert_kind))
                    .context("--kind is required")?;
                let ds = self.source(manifest)?.load()?;
                let table = formats::read_features(&features)?;
                let data = harness::protocol_run(&ds, self.seed, run)?;
                let seed = harness::run_seed(self.seed, run);
                let train = lusbio::core::data::oversample(&data.training, task, seed)?;
                let (tx, ty) = xy(&table, &train, task)?;
                let (vx, vy) = xy(&table, &data.validation, task)?;
                let (hx, hy) = xy(&table, &data.held_out, task)?;
                let sel = fit_best_of_3(&tx, &ty, &vx, &vy, kind, seed)?;
                formats::write_expert(self.out()?, &sel.model)?;
                let probs = sel.model.predict_proba_full(&hx, task.num_classes())?;
                let report = EvalReport::evaluate(task.name(), &format!("{kind}"), &probs, &hy, task.num_classes())?;
                println!("{}", serde_json::to_string_pretty(&report)?);
                if let Some(path) = predictions {
                    let rows = data
                        .held_out
                        .iter()
                        .zip(&probs)
                        .map(|(r, p)| LabelRow {
                            video_id: r.video_id.clone(),
                            label: lusbio::core::encoder::argmax(p),
                            probs: Some(p.clone()),
                        })
                        .collect();
                    formats::write_labels(&path, &LabelTable { rows })?;
                }
            }
            Command::Crossval { manifest, method, task, expert } => {
                let mut config = match (&self.config, manifest) {
                    (Some(c), m) => {
                        let mut c = c.clone();
                        if let Some(path) = m {
                            c.dataset = DataSource::Manifest { path };
                        }
                        c
                    }
                    (None, m) => ExperimentConfig {
                        method: method.context("--method is required without --config")?,
                        task: self.task(task)?,
                        expert_kind: expert,
                        train_config: TrainConfig::default(),
                        dataset: self.source(m)?,
                        base_seed: self.seed,
                    },
                };
                if let Some(m) = method {
                    config.method = m;
                }
                if let Some(t) = task {
                    config.task = t;
                }
                if expert.is_some() {
                    config.expert_kind = expert;
                }
                config.base_seed = self.seed;
                let mut result = harness::run_crossval(&config)?;
                let out = self.out()?;
                std::fs::create_dir_all(out).with_context(|| out.display().to_string())?;
                formats::write_json(&out.join("timings.json"), &std::mem::take(&mut result.timings))?;
                formats::write_json(&out.join("result.json"), &result)?;
                harness::report(std::slice::from_ref(&result), &out.join("report.csv"), ReportFormat::Csv)?;
                println!("{}", serde_json::to_string_pretty(&result.summary)?);
            }
            Command::Agreement { first, second, classes } => {
                let a = formats::read_labels(&first)?;
                let b = formats::read_labels(&second)?;
                let report = run_agreement(&a, &b, classes)?;
                match &self.out {
                    Some(p) => formats::write_json(p, &report)?,
                    None => println!("{}", serde_json::to_string_pretty(&report)?),
                }
            }
            Command::Report { results } => {
                if results.is_empty() {
                    bail!("no result files given");
                }
                let results = results
                    .iter()
                    .map(|p| formats::read_json::<CrossvalResult>(p))
                    .collect::<lusbio::Result<Vec<_>>>()?;
                let out = self.out()?;
                harness::report(&results, out, ReportFormat::for_path(out))?;
            }
            Command::ServeAnnotator { manifest, port } => {
                let manifest = match self.source(manifest)? {
                    DataSource::Manifest { path } => path,
                    DataSource::Synthetic(_) => bail!("the annotator needs a manifest"),
                };
                let store = self.out.clone().unwrap_or_else(|| PathBuf::from("annotations"));
                let rt = tokio::runtime::Runtime::new()?;
                eprintln!("serving on http://127.0.0.1:{port}, annotations in {}", store.display());
                rt.block_on(server::serve_annotations(port, &manifest, &store))?;
            }
        }
        Ok(())
    }

    fn save_encoder(&self, params: &lusbio::core::encoder::EncoderParams, history: &lusbio::core::encoder::TrainHistory) -> anyhow::Result<()> {
        let out = self.out()?;
        formats::write_checkpoint(&out.join("encoder.luse"), params)?;
        formats::write_history(&out.join("history.csv"), history)?;
        println!("best epoch {}", history.best_epoch);
        Ok(())
    }
}

fn xy(table: &FeatureTable, records: &[lusbio::core::data::VideoRecord], task: Task) -> anyhow::Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut x = Vec::with_capacity(records.len());
    let mut y = Vec::with_capacity(records.len());
    for r in records {
        let row = table
            .get(&r.video_id)
            .with_context(|| format!("no features for video {}", r.video_id))?;
        x.push(row.to_vec());
        y.push(r.task_label(task)?);
    }
    Ok((x, y))
}
