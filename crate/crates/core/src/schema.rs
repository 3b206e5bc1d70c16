//! Biomarker schema, label taxonomies and training defaults.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Version tag carried by every serialized schema, manifest and API payload.
pub const SCHEMA_VERSION: u32 = 1;

/// One biomarker category and the number of checkboxes it contributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub cardinality: usize,
}

/// Ordered biomarker categories. The canonical schema has nine categories and
/// 38 binary features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiomarkerSchema {
    categories: Vec<Category>,
}

const CANONICAL: [(&str, usize); 9] = [
    ("A-line", 5),
    ("B-line", 5),
    ("B-line origin", 3),
    ("Pleural line thickness", 4),
    ("Pleural line location", 3),
    ("Pleural indents", 5),
    ("Pleural breaks", 5),
    ("Consolidation", 5),
    ("Effusion", 3),
];

/// Number of features in the canonical schema.
pub const NUM_BIOMARKERS: usize = 38;

impl BiomarkerSchema {
    pub fn canonical() -> Self {
        BiomarkerSchema {
            categories: CANONICAL
                .iter()
                .map(|&(name, cardinality)| Category {
                    name: name.to_string(),
                    cardinality,
                })
                .collect(),
        }
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn total_features(&self) -> usize {
        self.categories.iter().map(|c| c.cardinality).sum()
    }

    /// Feature index range covered by category `i`.
    pub fn range(&self, i: usize) -> core::ops::Range<usize> {
        let start: usize = self.categories[..i].iter().map(|c| c.cardinality).sum();
        start..start + self.categories[i].cardinality
    }

    /// Category index and position within it for a flat feature index.
    pub fn locate(&self, feature: usize) -> Option<(usize, usize)> {
        let mut start = 0;
        for (i, c) in self.categories.iter().enumerate() {
            if feature < start + c.cardinality {
                return Some((i, feature - start));
            }
            start += c.cardinality;
        }
        None
    }

    /// The versioned JSON-facing description of this schema.
    pub fn document(&self) -> SchemaDocument {
        let mut categories = Vec::with_capacity(self.categories.len());
        let mut features = Vec::with_capacity(self.total_features());
        let mut offset = 0;
        for c in &self.categories {
            categories.push(CategoryEntry {
                name: c.name.clone(),
                cardinality: c.cardinality,
                offset,
            });
            for slot in 0..c.cardinality {
                features.push(FeatureEntry {
                    index: offset + slot,
                    category: c.name.clone(),
                    slot,
                });
            }
            offset += c.cardinality;
        }
        SchemaDocument {
            schema_version: SCHEMA_VERSION,
            total_features: offset,
            categories,
            features,
        }
    }

    pub fn from_document(doc: &SchemaDocument) -> Result<Self> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(alloc::format!(
                "schema version {} unsupported (expected {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        let schema = BiomarkerSchema {
            categories: doc
                .categories
                .iter()
                .map(|c| Category {
                    name: c.name.clone(),
                    cardinality: c.cardinality,
                })
                .collect(),
        };
        if schema.categories.iter().any(|c| c.cardinality == 0) {
            return Err(Error::invalid("category with zero cardinality"));
        }
        if schema.total_features() != doc.total_features {
            return Err(Error::invalid("total_features disagrees with categories"));
        }
        Ok(schema)
    }
}

impl Default for BiomarkerSchema {
    fn default() -> Self {
        Self::canonical()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub name: String,
    pub cardinality: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub index: usize,
    pub category: String,
    pub slot: usize,
}

/// Stable serialized form of a [`BiomarkerSchema`]. Field names are part of
/// the external contract consumed by the annotator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaDocument {
    pub schema_version: u32,
    pub total_features: usize,
    pub categories: Vec<CategoryEntry>,
    pub features: Vec<FeatureEntry>,
}

/// 38 values in `[0, 1]`: binary when annotated, probabilities when predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BiomarkerVector(Vec<f64>);

impl BiomarkerVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != NUM_BIOMARKERS {
            return Err(Error::invalid(alloc::format!(
                "biomarker vector has {} values, expected {NUM_BIOMARKERS}",
                values.len()
            )));
        }
        if let Some(i) = values
            .iter()
            .position(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
        {
            return Err(Error::invalid(alloc::format!(
                "biomarker {i} = {} is outside [0, 1]",
                values[i]
            )));
        }
        Ok(BiomarkerVector(values))
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        Self::new(bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
    }

    pub fn zeros() -> Self {
        BiomarkerVector(alloc::vec![0.0; NUM_BIOMARKERS])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_binary(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn is_set(&self, i: usize) -> bool {
        self.0[i] >= 0.5
    }
}

impl TryFrom<Vec<f64>> for BiomarkerVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BiomarkerVector> for Vec<f64> {
    fn from(v: BiomarkerVector) -> Self {
        v.0
    }
}

/// One problem found in a submitted annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnnotationIssue {
    Length { expected: usize, found: usize },
    NonBinary { index: usize, value: f64 },
}

impl fmt::Display for AnnotationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnnotationIssue::Length { expected, found } => {
                write!(f, "expected {expected} biomarkers, found {found}")
            }
            AnnotationIssue::NonBinary { index, value } => {
                write!(f, "biomarker {index} must be 0 or 1, found {value}")
            }
        }
    }
}

/// Checks a raw annotation against the schema. An empty result means valid.
pub fn validate_annotation(values: &[f64], schema: &BiomarkerSchema) -> Vec<AnnotationIssue> {
    let mut issues = Vec::new();
    let expected = schema.total_features();
    if values.len() != expected {
        issues.push(AnnotationIssue::Length {
            expected,
            found: values.len(),
        });
    }
    for (index, &value) in values.iter().enumerate() {
        if value != 0.0 && value != 1.0 {
            issues.push(AnnotationIssue::NonBinary { index, value });
        }
    }
    issues
}

macro_rules! bounded_label {
    ($(#[$meta:meta])* $name:ident, $count:expr, $what:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "u8", into = "u8")]
        pub struct $name(u8);

        impl $name {
            pub const COUNT: usize = $count;

            pub fn new(value: u8) -> Result<Self> {
                if (value as usize) < Self::COUNT {
                    Ok($name(value))
                } else {
                    Err(Error::invalid(alloc::format!(
                        "{} {value} out of range 0..{}",
                        $what,
                        Self::COUNT
                    )))
                }
            }

            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl TryFrom<u8> for $name {
            type Error = Error;
            fn try_from(v: u8) -> Result<Self> {
                Self::new(v)
            }
        }

        impl From<$name> for u8 {
            fn from(v: $name) -> u8 {
                v.0
            }
        }
    };
}

bounded_label!(
    /// Lung-severity score 0..=3.
    LungSeverity,
    4,
    "severity"
);
bounded_label!(
    /// S/F ratio bin, 0 is the healthiest.
    SfRatioBin,
    4,
    "S/F bin"
);
bounded_label!(
    /// One of the seven diagnostic categories, see [`DiseaseCategory::NAMES`].
    DiseaseCategory,
    7,
    "disease"
);

impl DiseaseCategory {
    pub const NAMES: [&'static str; 7] = [
        "Healthy",
        "COVID Pneumonia",
        "Interstitial Lung Disease",
        "Asthma/COPD Exacerbation",
        "Cardiogenic Pulmonary Edema",
        "Other lung",
        "Other non-lung",
    ];

    pub fn name(self) -> &'static str {
        Self::NAMES[self.index()]
    }
}

/// Bins a raw S/F ratio. Boundary values fall into the sicker bin:
/// `(430, inf) -> 0`, `(275, 430] -> 1`, `(180, 275] -> 2`, `(0, 180] -> 3`.
pub fn bin_sf_ratio(sf: f64) -> Result<SfRatioBin> {
    if !sf.is_finite() || sf <= 0.0 {
        return Err(Error::invalid(alloc::format!(
            "S/F ratio must be positive and finite, got {sf}"
        )));
    }
    let bin = if sf > 430.0 {
        0
    } else if sf > 275.0 {
        1
    } else if sf > 180.0 {
        2
    } else {
        3
    };
    SfRatioBin::new(bin)
}

/// Downstream diagnostic task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Severity,
    SfRatio,
    Disease,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Severity, Task::SfRatio, Task::Disease];

    pub fn num_classes(self) -> usize {
        match self {
            Task::Severity => LungSeverity::COUNT,
            Task::SfRatio => SfRatioBin::COUNT,
            Task::Disease => DiseaseCategory::COUNT,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Severity => "severity",
            Task::SfRatio => "sf_ratio",
            Task::Disease => "disease",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::invalid(alloc::format!("unknown task {s:?}")))
    }
}

/// How per-clip predictions are combined into one video prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipAggregation {
    #[default]
    Mean,
    Max,
}

/// Encoder training and inference settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub clip_count_eval: usize,
    pub frames_per_clip: usize,
    /// Fraction of channels shifted in each temporal direction, as
    /// numerator/denominator.
    pub shift_fraction: (usize, usize),
    pub frame_side: usize,
    pub channels: usize,
    pub blocks: usize,
    pub augment: bool,
    pub clip_aggregation: ClipAggregation,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 4,
            epochs: 100,
            plateau_factor: 0.5,
            plateau_patience: 5,
            clip_count_eval: 4,
            frames_per_clip: 15,
            shift_fraction: (1, 8),
            frame_side: 32,
            channels: 64,
            blocks: 2,
            augment: true,
            clip_aggregation: ClipAggregation::Mean,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    /// Number of channels shifted in each direction.
    pub fn shift_channels(&self) -> Result<usize> {
        let (num, den) = self.shift_fraction;
        if den == 0 || num == 0 || !(num * self.channels).is_multiple_of(den) {
            return Err(Error::invalid(alloc::format!(
                "shift fraction {num}/{den} of {} channels is not a positive integer",
                self.channels
            )));
        }
        let k = num * self.channels / den;
        if 2 * k > self.channels {
            return Err(Error::invalid("shifted channels exceed channel count"));
        }
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("plateau_patience", self.plateau_patience),
            ("clip_count_eval", self.clip_count_eval),
            ("frames_per_clip", self.frames_per_clip),
            ("frame_side", self.frame_side),
            ("channels", self.channels),
            ("blocks", self.blocks),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(alloc::format!("{name} must be positive")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return Err(Error::invalid("plateau_factor must be in (0, 1]"));
        }
        self.shift_channels().map(|_| ())
    }
}
