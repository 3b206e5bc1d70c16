use std::path::Path;

use lusbio::core::data::{generate_synthetic, Frames, SynthParams};
use lusbio::core::encoder::{EncoderDims, EncoderParams, EpochStats, TrainHistory};
use lusbio::core::experts::{fit, ExpertKind};
use lusbio::core::rng;
use lusbio::formats::*;
use lusbio::Error;
use proptest::prelude::*;

fn small_dataset(seed: u64) -> lusbio::core::data::Dataset {
    generate_synthetic(&SynthParams {
        n_patients: 5,
        videos_per_patient: 2,
        frames_per_video: 3,
        frame_side: 8,
        seed,
        ..SynthParams::default()
    })
    .unwrap()
}

proptest! {
    #[test]
    fn frames_round_trip(count in 1usize..5, side in 1usize..6, seed in any::<u32>()) {
        let pixels: Vec<f32> = (0..count * side * side)
            .map(|i| ((i as u32).wrapping_mul(seed | 1) % 997) as f32 / 997.0)
            .collect();
        let frames = Frames::new(count, side, pixels).unwrap();
        let bytes = encode_frames(&frames);
        prop_assert_eq!(bytes.len(), 20 + 4 * count * side * side);
        prop_assert_eq!(decode_frames(&bytes).unwrap(), frames);
    }
}

#[test]
fn damaged_frame_files_are_rejected() {
    let frames = Frames::new(2, 3, vec![0.5; 18]).unwrap();
    let good = encode_frames(&frames);

    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(decode_frames(&magic).is_err());

    let mut version = good.clone();
    version[4] = 9;
    assert!(decode_frames(&version).is_err());

    assert!(decode_frames(&good[..good.len() - 1]).is_err());

    let mut trailing = good.clone();
    trailing.push(0);
    assert!(decode_frames(&trailing).is_err());

    let mut oblong = good;
    oblong[16] = 4;
    assert!(decode_frames(&oblong).is_err());
}

#[test]
fn manifest_round_trip_preserves_records() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(4);
    let path = save_dataset(&ds, dir.path()).unwrap();
    let back = load_manifest(&path).unwrap();
    assert_eq!(back.len(), ds.len());
    for (a, b) in ds.records().iter().zip(back.records()) {
        assert_eq!(a.video_id, b.video_id);
        assert_eq!(a.patient_id, b.patient_id);
        assert_eq!(a.labels, b.labels);
        assert_eq!(*a.frames, *b.frames);
    }
}

fn edit_manifest(path: &Path, edit: impl FnOnce(&mut Manifest)) {
    let mut m: Manifest = read_json(path).unwrap();
    edit(&mut m);
    write_json(path, &m).unwrap();
}

#[test]
fn bad_manifest_labels_name_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let path = save_dataset(&small_dataset(1), dir.path()).unwrap();
    edit_manifest(&path, |m| m.records[3].labels.severity = Some(7));
    let err = load_manifest(&path).unwrap_err().to_string();
    assert!(err.contains("P0001-V1") && err.contains("severity"), "{err}");
}

#[test]
fn raw_ratio_and_bin_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let path = save_dataset(&small_dataset(2), dir.path()).unwrap();
    edit_manifest(&path, |m| {
        m.records[0].labels.sf_ratio_raw = Some(450.0);
        m.records[0].labels.sf_bin = Some(3);
    });
    assert!(load_manifest(&path).is_err());
    edit_manifest(&path, |m| m.records[0].labels.sf_bin = Some(0));
    assert_eq!(load_manifest(&path).unwrap().records()[0].labels.sf_bin.unwrap().index(), 0);
}

#[test]
fn manifest_schema_version_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    let path = save_dataset(&small_dataset(3), dir.path()).unwrap();
    edit_manifest(&path, |m| m.schema_version = 99);
    assert!(matches!(load_manifest(&path), Err(Error::Format { .. })));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dims = EncoderDims {
        frame_side: 8,
        channels: 16,
        blocks: 2,
        out_dim: 38,
        shift: 2,
    };
    let params = EncoderParams::init(dims, &mut rng::stream(5, "init", 0));
    let bytes = encode_checkpoint(&params);
    let back = decode_checkpoint(&bytes).unwrap();
    assert_eq!(back.dims, dims);
    for (a, b) in params.tensors().iter().zip(back.tensors()) {
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert!(decode_checkpoint(&bytes[..bytes.len() - 8]).is_err());
}

#[test]
fn experts_reload_with_identical_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64 * 0.3, (i / 7) as f64, (i % 2) as f64]).collect();
    let y: Vec<usize> = (0..40).map(|i| (i % 7 + i / 13) % 3).collect();
    for kind in ExpertKind::ALL {
        let model = fit(&x, &y, kind, 11).unwrap();
        let path = dir.path().join(format!("{kind}.lusx"));
        write_expert(&path, &model).unwrap();
        let back = read_expert(&path).unwrap();
        assert_eq!(back, model, "{kind}");
        assert_eq!(back.predict_proba(&x).unwrap(), model.predict_proba(&x).unwrap(), "{kind}");
    }
}

#[test]
fn expert_kind_tag_must_match_hyperparameters() {
    let model = fit(&[vec![0.0], vec![1.0]], &[0, 1], ExpertKind::DecisionTree, 0).unwrap();
    let mut bytes = encode_expert(&model);
    bytes[8] = ExpertKind::Svm.tag();
    assert!(decode_expert(&bytes).is_err());
}

#[test]
fn tables_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let features = FeatureTable {
        rows: vec![
            ("a".into(), vec![0.1, 1.0 / 3.0, -2.5e-300]),
            ("b,c".into(), vec![f64::MAX, 0.0, 7.0]),
        ],
    };
    let fp = dir.path().join("f.csv");
    write_features(&fp, &features).unwrap();
    assert_eq!(read_features(&fp).unwrap(), features);

    let labels = LabelTable {
        rows: vec![
            LabelRow {
                video_id: "v1".into(),
                label: 2,
                probs: Some(vec![0.2, 0.1, 0.7]),
            },
            LabelRow {
                video_id: "v2".into(),
                label: 0,
                probs: Some(vec![0.9, 0.05, 0.05]),
            },
        ],
    };
    let lp = dir.path().join("l.csv");
    write_labels(&lp, &labels).unwrap();
    assert_eq!(read_labels(&lp).unwrap(), labels);

    let bare = LabelTable {
        rows: vec![LabelRow {
            video_id: "v1".into(),
            label: 1,
            probs: None,
        }],
    };
    write_labels(&lp, &bare).unwrap();
    assert_eq!(read_labels(&lp).unwrap(), bare);
}

#[test]
fn history_round_trip_recomputes_best_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let history = TrainHistory {
        epochs: (1..=4)
            .map(|e| EpochStats {
                epoch: e,
                train_loss: 1.0 / e as f64,
                val_acc: [0.5, 0.75, 0.75, 0.6][e - 1],
                lr: 1e-4,
            })
            .collect(),
        best_epoch: 2,
    };
    let path = dir.path().join("h.csv");
    write_history(&path, &history).unwrap();
    assert_eq!(read_history(&path).unwrap(), history);
}

#[test]
fn append_line_accumulates() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.jsonl");
    append_line(&path, b"{\"a\":1}").unwrap();
    append_line(&path, b"{\"a\":2}").unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "{\"a\":1}\n{\"a\":2}\n");
}
