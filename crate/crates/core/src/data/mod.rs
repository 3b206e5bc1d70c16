//! Video records, datasets, fold splitting, oversampling, clip sampling and
//! augmentation, plus the synthetic ground-truth generator.

mod clip;
mod split;
pub mod synth;

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::schema::{
    BiomarkerSchema, BiomarkerVector, DiseaseCategory, LungSeverity, SfRatioBin, Task,
};
use crate::{Error, Result};

pub use clip::{augment, sample_clip, segment_indices, AugmentParams, Clip};
pub use split::{oversample, patient_split, FoldAssignment, NUM_FOLDS};
pub use synth::{generate_synthetic, SynthParams};

/// A raw grayscale frame stack, `count × side × side`, pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    count: usize,
    side: usize,
    pixels: Vec<f32>,
}

impl Frames {
    pub fn new(count: usize, side: usize, pixels: Vec<f32>) -> Result<Self> {
        if count == 0 || side == 0 {
            return Err(Error::invalid("frame stack must have at least one frame and pixel"));
        }
        if pixels.len() != count * side * side {
            return Err(Error::shape(
                alloc::format!("{count}x{side}x{side} pixels"),
                pixels.len(),
            ));
        }
        if let Some(i) = pixels
            .iter()
            .position(|p| !p.is_finite() || !(0.0..=1.0).contains(p))
        {
            return Err(Error::invalid(alloc::format!(
                "pixel {i} = {} outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(Frames {
            count,
            side,
            pixels,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        let n = self.side * self.side;
        &self.pixels[i * n..(i + 1) * n]
    }
}

/// Optional video-level labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub biomarkers: Option<BiomarkerVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<LungSeverity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sf_bin: Option<SfRatioBin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disease: Option<DiseaseCategory>,
}

impl Labels {
    pub fn task(&self, task: Task) -> Option<usize> {
        match task {
            Task::Severity => self.severity.map(LungSeverity::index),
            Task::SfRatio => self.sf_bin.map(SfRatioBin::index),
            Task::Disease => self.disease.map(DiseaseCategory::index),
        }
    }
}

/// The unit of annotation and prediction. Frames are shared, so cloning a
/// record (for example when oversampling) never copies pixel data.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    pub patient_id: String,
    pub frames: Arc<Frames>,
    pub labels: Labels,
}

impl VideoRecord {
    pub fn task_label(&self, task: Task) -> Result<usize> {
        self.labels.task(task).ok_or_else(|| Error::MissingLabel {
            record: self.video_id.clone(),
            label: task.name(),
        })
    }

    pub fn biomarkers(&self) -> Result<&BiomarkerVector> {
        self.labels
            .biomarkers
            .as_ref()
            .ok_or_else(|| Error::MissingLabel {
                record: self.video_id.clone(),
                label: "biomarkers",
            })
    }
}

/// Which label a pipeline stage balances or trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Task(Task),
    Biomarkers,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<VideoRecord>,
    schema: BiomarkerSchema,
}

impl Dataset {
    /// Validates id uniqueness, a common frame side, and that annotated
    /// biomarker vectors are binary.
    pub fn new(records: Vec<VideoRecord>, schema: BiomarkerSchema) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut side = None;
        for r in &records {
            if !seen.insert(r.video_id.as_str()) {
                return Err(Error::Validation {
                    record: r.video_id.clone(),
                    reason: "duplicate video_id".into(),
                });
            }
            match side {
                None => side = Some(r.frames.side()),
                Some(s) if s != r.frames.side() => {
                    return Err(Error::Validation {
                        record: r.video_id.clone(),
                        reason: alloc::format!("frame side {} differs from {s}", r.frames.side()),
                    })
                }
                _ => {}
            }
            if let Some(b) = &r.labels.biomarkers {
                let issues = crate::validate_annotation(b.values(), &schema);
                if let Some(issue) = issues.first() {
                    return Err(Error::Validation {
                        record: r.video_id.clone(),
                        reason: alloc::format!("{issue}"),
                    });
                }
            }
        }
        Ok(Dataset { records, schema })
    }

    pub fn records(&self) -> &[VideoRecord] {
        &self.records
    }

    pub fn schema(&self) -> &BiomarkerSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn frame_side(&self) -> Option<usize> {
        self.records.first().map(|r| r.frames.side())
    }

    /// Distinct patient ids in sorted order.
    pub fn patients(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.patient_id.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    /// Records whose patient is in `patients`, in dataset order.
    pub fn records_for(&self, patients: &[String]) -> Vec<VideoRecord> {
        let set: BTreeSet<&str> = patients.iter().map(String::as_str).collect();
        self.records
            .iter()
            .filter(|r| set.contains(r.patient_id.as_str()))
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn record(id: &str, side: usize) -> VideoRecord {
        VideoRecord {
            video_id: id.into(),
            patient_id: "p".into(),
            frames: Arc::new(Frames::new(1, side, vec![0.0; side * side]).unwrap()),
            labels: Labels::default(),
        }
    }

    #[test]
    fn rejects_duplicate_ids() {
        let err = Dataset::new(
            vec![record("a", 2), record("a", 2)],
            BiomarkerSchema::canonical(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation { record, .. } if record == "a"));
    }

    #[test]
    fn rejects_mixed_sides() {
        assert!(Dataset::new(
            vec![record("a", 2), record("b", 3)],
            BiomarkerSchema::canonical()
        )
        .is_err());
    }

    #[test]
    fn frames_validate_range_and_shape() {
        assert!(Frames::new(1, 2, vec![0.0, 0.5, 1.0, 1.1]).is_err());
        assert!(Frames::new(2, 2, vec![0.0; 4]).is_err());
        let f = Frames::new(2, 1, vec![0.25, 0.75]).unwrap();
        assert_eq!(f.frame(1), &[0.75]);
    }
}
