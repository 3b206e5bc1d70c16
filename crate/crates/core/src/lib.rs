//! Allocation-only core of the lung-ultrasound biomarker pipeline.
//!
//! Everything here is pure computation over in-memory values: the 38-feature
//! biomarker schema and label taxonomies, synthetic data generation, clip
//! sampling and augmentation, the temporal-shift video encoder with hand
//! written backpropagation, the classical expert classifiers, and the
//! evaluation metrics. File formats, the experiment harness, the CLI and the
//! annotation service live in the `lusbio` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod encoder;
mod error;
pub mod experts;
pub mod metrics;
pub mod rng;
pub mod schema;

pub use error::{Error, Result};
pub use schema::{
    bin_sf_ratio, validate_annotation, AnnotationIssue, BiomarkerSchema, BiomarkerVector,
    Category, ClipAggregation, DiseaseCategory, LungSeverity, SfRatioBin, Task, TrainConfig,
};
