use std::collections::BTreeSet;

use lusbio::core::data::{generate_synthetic, Dataset, SynthParams};
use lusbio::core::encoder::{EncoderDims, EncoderParams};
use lusbio::core::experts::ExpertKind;
use lusbio::core::{rng, Task, TrainConfig};
use lusbio::formats::{LabelRow, LabelTable};
use lusbio::harness::*;
use lusbio::Error;

fn tiny_data(seed: u64) -> SynthParams {
    SynthParams {
        n_patients: 12,
        videos_per_patient: 2,
        frames_per_video: 6,
        frame_side: 8,
        seed,
        ..SynthParams::default()
    }
}

fn tiny_train() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        learning_rate: 1e-3,
        channels: 8,
        blocks: 1,
        frame_side: 8,
        frames_per_clip: 3,
        clip_count_eval: 2,
        ..TrainConfig::default()
    }
}

fn config(method: Method, task: Task) -> ExperimentConfig {
    ExperimentConfig {
        method,
        task,
        expert_kind: method.uses_expert().then_some(ExpertKind::DecisionTree),
        train_config: tiny_train(),
        dataset: DataSource::Synthetic(tiny_data(0)),
        base_seed: 9,
    }
}

fn patients(ds: &Dataset, ids: &[String]) -> BTreeSet<String> {
    ds.records()
        .iter()
        .filter(|r| ids.contains(&r.video_id))
        .map(|r| r.patient_id.clone())
        .collect()
}

#[test]
fn every_method_runs_and_reports_three_runs() {
    let ds = generate_synthetic(&tiny_data(0)).unwrap();
    for method in Method::ALL {
        let result = run_crossval_on(&ds, &config(method, Task::Severity)).unwrap();
        assert_eq!(result.runs.len(), 3, "{method}");
        for run in &result.runs {
            assert_eq!(run.report.support.iter().sum::<u64>() as usize, result.held_out.len());
            assert_eq!(run.expert_scores.is_some(), method.uses_expert());
        }
        assert!(!result.timings.is_empty());
    }
}

#[test]
fn runs_keep_patients_apart_and_share_the_held_out_fold() {
    let ds = generate_synthetic(&tiny_data(1)).unwrap();
    let result = run_crossval_on(&ds, &config(Method::TrueBioExpert, Task::Disease)).unwrap();
    let held = patients(&ds, &result.held_out);
    let mut validated = BTreeSet::new();
    for run in &result.runs {
        let train = patients(&ds, &run.split.training);
        let val = patients(&ds, &run.split.validation);
        assert!(train.is_disjoint(&val));
        assert!(train.is_disjoint(&held) && val.is_disjoint(&held));
        assert_eq!(train.len() + val.len() + held.len(), ds.patients().len());
        validated.extend(val);
    }
    // each non-held-out fold validates exactly once
    assert_eq!(validated.len() + held.len(), ds.patients().len());
}

#[test]
fn reruns_match_apart_from_timings() {
    let ds = generate_synthetic(&tiny_data(2)).unwrap();
    let cfg = config(Method::BioExpert, Task::SfRatio);
    let mut a = run_crossval_on(&ds, &cfg).unwrap();
    let mut b = run_crossval_on(&ds, &cfg).unwrap();
    a.timings.clear();
    b.timings.clear();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn run_seeds_differ_by_run_and_base() {
    let seeds: BTreeSet<u64> = (0..3).flat_map(|r| [run_seed(0, r), run_seed(1, r)]).collect();
    assert_eq!(seeds.len(), 6);
}

#[test]
fn expert_choice_is_validated() {
    let mut cfg = config(Method::E2E, Task::Severity);
    cfg.expert_kind = Some(ExpertKind::Svm);
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let mut cfg = config(Method::BioExpert, Task::Severity);
    cfg.expert_kind = None;
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
}

#[test]
fn missing_labels_fail_before_training() {
    let mut ds = generate_synthetic(&tiny_data(3)).unwrap();
    let mut records = ds.records().to_vec();
    records[5].labels.disease = None;
    ds = Dataset::new(records, ds.schema().clone()).unwrap();
    let err = run_crossval_on(&ds, &config(Method::E2E, Task::Disease)).unwrap_err();
    assert!(matches!(err, Error::Core(_)), "{err}");
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
        assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
    }
    assert!("bogus".parse::<Method>().is_err());
}

#[test]
fn config_json_uses_defaults() {
    let json = r#"{"method":"E2E","task":"sf_ratio","dataset":{"manifest":{"path":"m.json"}}}"#;
    let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
    assert_eq!(cfg.task, Task::SfRatio);
    assert_eq!(cfg.base_seed, 0);
    assert_eq!(cfg.train_config, TrainConfig::default());
    cfg.validate().unwrap();
}

#[test]
fn features_have_one_row_per_video() {
    let ds = generate_synthetic(&tiny_data(4)).unwrap();
    let cfg = tiny_train();
    let bio = EncoderParams::init(EncoderDims::from_config(&cfg, 38).unwrap(), &mut rng::stream(0, "init", 0));
    let table = extract_features(&bio, &ds, &cfg, FeatureMode::Biomarker).unwrap();
    assert_eq!(table.rows.len(), ds.len());
    assert_eq!(table.dim(), 38);
    assert!(table.rows.iter().all(|(_, v)| v.iter().all(|p| (0.0..=1.0).contains(p))));
    let trunk = extract_features(&bio, &ds, &cfg, FeatureMode::Trunk).unwrap();
    assert_eq!(trunk.dim(), cfg.channels);

    let head4 = EncoderParams::init(EncoderDims::from_config(&cfg, 4).unwrap(), &mut rng::stream(0, "init", 0));
    assert!(extract_features(&head4, &ds, &cfg, FeatureMode::Biomarker).is_err());
    let wide = TrainConfig { frame_side: 16, ..cfg };
    let other = EncoderParams::init(EncoderDims::from_config(&wide, 38).unwrap(), &mut rng::stream(0, "init", 0));
    assert!(extract_features(&other, &ds, &wide, FeatureMode::Biomarker).is_err());
}

fn table(rows: &[(&str, usize)]) -> LabelTable {
    LabelTable {
        rows: rows
            .iter()
            .map(|&(id, label)| LabelRow {
                video_id: id.into(),
                label,
                probs: None,
            })
            .collect(),
    }
}

#[test]
fn agreement_joins_on_video_id() {
    let a = table(&[("v1", 0), ("v2", 1), ("v3", 2), ("v4", 2)]);
    let b = table(&[("v4", 1), ("v3", 2), ("v2", 1), ("v1", 0)]);
    let r = run_agreement(&a, &b, 3).unwrap();
    assert_eq!(r.n, 4);
    assert_eq!(r.accuracy, 0.75);
    assert_eq!(r.confusion.get(2, 1), 1);
    assert_eq!(r.auc_ovo_weighted, None);
}

#[test]
fn agreement_reports_unmatched_ids() {
    let a = table(&[("v1", 0), ("v2", 1)]);
    let b = table(&[("v2", 1), ("v9", 0)]);
    match run_agreement(&a, &b, 2) {
        Err(Error::IdMismatch { only_first, only_second }) => {
            assert_eq!(only_first, ["v1"]);
            assert_eq!(only_second, ["v9"]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn agreement_scores_probabilities() {
    let mut a = table(&[("v1", 0), ("v2", 1), ("v3", 1)]);
    for (row, p) in a.rows.iter_mut().zip([[0.9, 0.1], [0.3, 0.7], [0.2, 0.8]]) {
        row.probs = Some(p.to_vec());
    }
    let b = table(&[("v1", 0), ("v2", 1), ("v3", 0)]);
    assert_eq!(run_agreement(&a, &b, 2).unwrap().auc_ovo_weighted, Some(0.5));
}

#[test]
fn reports_round_trip_with_undefined_auc() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![
        ReportRow {
            task: "severity".into(),
            method: "E2E".into(),
            expert: String::new(),
            runs: 3,
            auc_mean: Some(0.8125),
            auc_std: Some(0.01),
            accuracy_mean: 0.7,
            accuracy_std: 0.02,
            precision_mean: 0.71,
            precision_std: 0.03,
            f1_mean: 0.69,
            f1_std: 0.04,
        },
        ReportRow {
            task: "disease".into(),
            method: "Bio_Expert".into(),
            expert: "mlp".into(),
            runs: 3,
            auc_mean: None,
            auc_std: None,
            accuracy_mean: 0.5,
            accuracy_std: 0.0,
            precision_mean: 0.25,
            precision_std: 0.0,
            f1_mean: 1.0 / 3.0,
            f1_std: 0.0,
        },
    ];
    for name in ["r.csv", "r.json"] {
        let path = dir.path().join(name);
        let format = ReportFormat::for_path(&path);
        write_report(&rows, &path, format).unwrap();
        assert_eq!(read_report(&path, format).unwrap(), rows, "{name}");
    }
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv.contains("undefined,undefined"));
}

#[test]
fn summary_uses_population_deviation() {
    let s = MeanStd::of(&[1.0, 2.0, 3.0]);
    assert_eq!(s.mean, 2.0);
    assert!((s.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
}
