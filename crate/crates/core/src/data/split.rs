use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, VideoRecord};
use crate::rng;
use crate::schema::Task;
use crate::{Error, Result};

pub const NUM_FOLDS: usize = 4;

/// Patient-disjoint partition into four folds whose sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub folds: [Vec<String>; NUM_FOLDS],
}

impl FoldAssignment {
    pub fn fold_of(&self, patient: &str) -> Option<usize> {
        self.folds
            .iter()
            .position(|f| f.iter().any(|p| p == patient))
    }
}

/// Shuffles the patients with `seed` and deals them round-robin into folds.
pub fn patient_split(dataset: &Dataset, seed: u64) -> Result<FoldAssignment> {
    let mut patients = dataset.patients();
    if patients.len() < NUM_FOLDS {
        return Err(Error::invalid(alloc::format!(
            "need at least {NUM_FOLDS} patients to split, found {}",
            patients.len()
        )));
    }
    patients.shuffle(&mut rng::stream(seed, "patient-split", 0));
    let mut folds: [Vec<String>; NUM_FOLDS] = Default::default();
    for (i, p) in patients.into_iter().enumerate() {
        folds[i % NUM_FOLDS].push(p);
    }
    Ok(FoldAssignment { folds })
}

/// Duplicates records of minority classes until every class present matches
/// the largest class count. Originals come first, in input order; duplicates
/// are drawn uniformly with replacement within each class.
pub fn oversample(records: &[VideoRecord], task: Task, seed: u64) -> Result<Vec<VideoRecord>> {
    if records.is_empty() {
        return Err(Error::invalid("cannot oversample an empty record set"));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_class.entry(r.task_label(task)?).or_default().push(i);
    }
    let target = by_class.values().map(Vec::len).max().unwrap_or(0);
    let mut out = records.to_vec();
    let mut rng = rng::stream(seed, "oversample", task as u64);
    for members in by_class.values() {
        for _ in members.len()..target {
            let pick = members[rng.random_range(0..members.len())];
            out.push(records[pick].clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Frames, Labels};
    use crate::schema::{BiomarkerSchema, LungSeverity};
    use alloc::format;
    use alloc::sync::Arc;
    use alloc::vec;

    fn dataset(patients: usize) -> Dataset {
        let frames = Arc::new(Frames::new(1, 1, vec![0.0]).unwrap());
        let records = (0..patients)
            .map(|p| VideoRecord {
                video_id: format!("v{p}"),
                patient_id: format!("p{p:03}"),
                frames: frames.clone(),
                labels: Labels::default(),
            })
            .collect();
        Dataset::new(records, BiomarkerSchema::canonical()).unwrap()
    }

    fn labeled(counts: &[usize]) -> Vec<VideoRecord> {
        let mut out = Vec::new();
        for (class, &n) in counts.iter().enumerate() {
            for i in 0..n {
                out.push(VideoRecord {
                    video_id: format!("c{class}-{i}"),
                    patient_id: format!("p{i}"),
                    frames: Arc::new(Frames::new(1, 1, vec![(class * 10 + i) as f32 / 100.0]).unwrap()),
                    labels: Labels {
                        severity: Some(LungSeverity::new(class as u8).unwrap()),
                        ..Labels::default()
                    },
                });
            }
        }
        out
    }

    fn histogram(records: &[VideoRecord]) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for r in records {
            *h.entry(r.task_label(Task::Severity).unwrap()).or_insert(0) += 1;
        }
        h
    }

    #[test]
    fn split_sizes() {
        let a = patient_split(&dataset(8), 3).unwrap();
        assert!(a.folds.iter().all(|f| f.len() == 2));
        let b = patient_split(&dataset(189), 3).unwrap();
        let mut sizes: Vec<usize> = b.folds.iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![47, 47, 47, 48]);
        assert!(patient_split(&dataset(3), 0).is_err());
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let d = dataset(30);
        let a = patient_split(&d, 11).unwrap();
        assert_eq!(a, patient_split(&d, 11).unwrap());
        let mut all: Vec<String> = a.folds.iter().flatten().cloned().collect();
        all.sort();
        assert_eq!(all, d.patients());
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let recs = labeled(&[3, 3]);
        assert_eq!(oversample(&recs, Task::Severity, 0).unwrap(), recs);
    }

    #[test]
    fn oversample_fills_minority() {
        let recs = labeled(&[5, 2]);
        let out = oversample(&recs, Task::Severity, 0).unwrap();
        assert_eq!(histogram(&out), BTreeMap::from([(0, 5), (1, 5)]));
        assert_eq!(&out[..7], &recs[..]);
        for extra in &out[7..] {
            assert_eq!(extra.task_label(Task::Severity).unwrap(), 1);
            assert!(recs.iter().any(|r| Arc::ptr_eq(&r.frames, &extra.frames)));
        }
        assert!(oversample(&[], Task::Severity, 0).is_err());
    }

    #[test]
    fn oversample_requires_labels() {
        let mut recs = labeled(&[2, 1]);
        recs[0].labels.severity = None;
        assert!(matches!(
            oversample(&recs, Task::Severity, 0),
            Err(Error::MissingLabel { .. })
        ));
    }

    proptest::proptest! {
        #[test]
        fn oversampled_histogram_is_uniform(counts in proptest::collection::vec(1usize..8, 1..4), seed in 0u64..1000) {
            let recs = labeled(&counts);
            let out = oversample(&recs, Task::Severity, seed).unwrap();
            let h = histogram(&out);
            let max = *counts.iter().max().unwrap();
            proptest::prop_assert!(h.values().all(|&c| c == max));
            proptest::prop_assert_eq!(out, oversample(&recs, Task::Severity, seed).unwrap());
        }
    }
}
