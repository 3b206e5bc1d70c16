//! Synthetic ground truth with known generating process.
//!
//! Each patient draws a latent severity; each video draws a biomarker vector
//! from fixed per-severity Bernoulli rates and is rendered as a stylised
//! B-mode clip: a bright pleural band, horizontal A-line echoes, vertical
//! B-line streaks, pleural indents and breaks, consolidation blobs and dark
//! effusion pockets. Disease is a fixed rule over the biomarkers and the S/F
//! bin is a fixed map of severity, each replaced by a uniformly random class
//! with probability `label_noise`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // inherent std methods shadow it when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Frames, Labels, VideoRecord};
use crate::rng::{self, StreamRng};
use crate::schema::{
    BiomarkerSchema, BiomarkerVector, DiseaseCategory, LungSeverity, SfRatioBin, NUM_BIOMARKERS,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub n_patients: usize,
    pub videos_per_patient: usize,
    pub label_noise: f64,
    pub pixel_noise_sigma: f64,
    pub seed: u64,
    pub frames_per_video: usize,
    pub frame_side: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_patients: 160,
            videos_per_patient: 3,
            label_noise: 0.05,
            pixel_noise_sigma: 0.08,
            seed: 0,
            frames_per_video: 30,
            frame_side: 32,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::invalid("n_patients must be positive"));
        }
        if self.videos_per_patient < 2 {
            return Err(Error::invalid("videos_per_patient must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return Err(Error::invalid("label_noise must be in [0, 1)"));
        }
        if !(self.pixel_noise_sigma >= 0.0 && self.pixel_noise_sigma.is_finite()) {
            return Err(Error::invalid("pixel_noise_sigma must be non-negative"));
        }
        if self.frames_per_video == 0 || self.frame_side < 8 {
            return Err(Error::invalid("need at least one frame of side >= 8"));
        }
        Ok(())
    }
}

/// Probability that each biomarker box is checked, per latent severity.
/// Column order follows the canonical schema.
#[rustfmt::skip]
pub const SEVERITY_RATES: [[f64; NUM_BIOMARKERS]; 4] = [
    [0.96, 0.94, 0.87, 0.77, 0.69,  0.02, 0.01, 0.01, 0.01, 0.01,  0.02, 0.01, 0.01,  0.96, 0.06, 0.01, 0.01,
     0.19, 0.74, 0.08,  0.02, 0.01, 0.01, 0.01, 0.01,  0.01, 0.01, 0.01, 0.01, 0.01,  0.01, 0.01, 0.01, 0.01, 0.01,
     0.01, 0.01, 0.01],
    [0.65, 0.56, 0.46, 0.37, 0.25,  0.50, 0.28, 0.13, 0.04, 0.01,  0.50, 0.14, 0.04,  0.64, 0.43, 0.08, 0.01,
     0.19, 0.67, 0.13,  0.36, 0.20, 0.09, 0.04, 0.02,  0.18, 0.09, 0.04, 0.01, 0.01,  0.14, 0.04, 0.01, 0.01, 0.01,
     0.09, 0.02, 0.01],
    [0.19, 0.16, 0.12, 0.08, 0.04,  0.82, 0.69, 0.55, 0.33, 0.12,  0.64, 0.44, 0.25,  0.23, 0.57, 0.45, 0.13,
     0.26, 0.53, 0.27,  0.64, 0.50, 0.40, 0.20, 0.06,  0.54, 0.40, 0.27, 0.13, 0.06,  0.44, 0.27, 0.13, 0.06, 0.02,
     0.31, 0.13, 0.06],
    [0.05, 0.02, 0.02, 0.01, 0.01,  0.92, 0.90, 0.84, 0.75, 0.63,  0.57, 0.59, 0.57,  0.08, 0.43, 0.66, 0.57,
     0.26, 0.39, 0.43,  0.76, 0.70, 0.62, 0.46, 0.34,  0.79, 0.68, 0.59, 0.49, 0.36,  0.65, 0.59, 0.49, 0.36, 0.18,
     0.55, 0.40, 0.26],
];

// Feature offsets in the canonical schema.
const A_LINE: usize = 0;
const B_LINE: usize = 5;
const B_ORIGIN: usize = 10;
const THICKNESS: usize = 13;
const LOCATION: usize = 17;
const INDENTS: usize = 20;
const BREAKS: usize = 25;
const CONSOLIDATION: usize = 30;
const EFFUSION: usize = 35;

fn count(bio: &BiomarkerVector, start: usize, len: usize) -> usize {
    (start..start + len).filter(|&i| bio.is_set(i)).count()
}

fn first_set(bio: &BiomarkerVector, start: usize, len: usize) -> Option<usize> {
    (0..len).find(|&i| bio.is_set(start + i))
}

fn last_set(bio: &BiomarkerVector, start: usize, len: usize) -> Option<usize> {
    (0..len).rev().find(|&i| bio.is_set(start + i))
}

/// Fixed diagnostic rule mapping a biomarker vector to a disease category.
pub fn disease_lookup(bio: &BiomarkerVector) -> DiseaseCategory {
    let a = count(bio, A_LINE, 5);
    let b = count(bio, B_LINE, 5);
    let thick = bio.is_set(THICKNESS + 2) || bio.is_set(THICKNESS + 3);
    let indents = count(bio, INDENTS, 5);
    let breaks = count(bio, BREAKS, 5);
    let consolidation = count(bio, CONSOLIDATION, 5);
    let effusion = count(bio, EFFUSION, 3);
    let id = if effusion >= 1 && b >= 2 {
        4
    } else if consolidation >= 1 && breaks >= 1 {
        1
    } else if consolidation >= 1 {
        5
    } else if (thick && indents >= 1) || b >= 3 {
        2
    } else if b == 0 && a >= 3 {
        0
    } else if a >= 2 {
        3
    } else {
        6
    };
    DiseaseCategory::new(id).expect("rule yields a valid category")
}

/// S/F bin implied by a latent severity before label noise.
pub fn sf_bin_for_severity(severity: LungSeverity) -> SfRatioBin {
    SfRatioBin::new(severity.index() as u8).expect("same cardinality")
}

pub fn draw_biomarkers<R: Rng + ?Sized>(severity: LungSeverity, rng: &mut R) -> BiomarkerVector {
    let rates = &SEVERITY_RATES[severity.index()];
    let values = rates
        .iter()
        .map(|&p| if rng.random_bool(p) { 1.0 } else { 0.0 })
        .collect();
    BiomarkerVector::new(values).expect("binary values")
}

/// Keeps `label` with probability `1 - noise`, otherwise draws uniformly
/// from all `classes`.
pub fn noisy_label<R: Rng + ?Sized>(label: usize, classes: usize, noise: f64, rng: &mut R) -> usize {
    let replace = rng.random_bool(noise);
    let draw = rng.random_range(0..classes);
    if replace {
        draw
    } else {
        label
    }
}

struct Canvas {
    side: usize,
    px: Vec<f64>,
}

impl Canvas {
    fn new(side: usize) -> Self {
        Canvas {
            side,
            px: alloc::vec![0.0; side * side],
        }
    }

    fn max(&mut self, row: isize, col: isize, v: f64) {
        if let Some(i) = self.index(row, col) {
            self.px[i] = self.px[i].max(v);
        }
    }

    fn set(&mut self, row: isize, col: isize, v: f64) {
        if let Some(i) = self.index(row, col) {
            self.px[i] = v;
        }
    }

    fn get(&self, row: isize, col: isize) -> f64 {
        self.index(row, col).map_or(0.0, |i| self.px[i])
    }

    fn index(&self, row: isize, col: isize) -> Option<usize> {
        let s = self.side as isize;
        (row >= 0 && col >= 0 && row < s && col < s).then(|| row as usize * self.side + col as usize)
    }
}

/// Geometry of one rendered video, fixed across its frames.
struct Scene {
    side: f64,
    pleura_row: isize,
    thickness: isize,
    extra_pleura_rows: Vec<isize>,
    phase: f64,
}

const LOCATION_DEPTH: [f64; 3] = [0.22, 0.32, 0.42];

impl Scene {
    fn new(bio: &BiomarkerVector, side: usize, phase: f64) -> Self {
        let s = side as f64;
        let main = first_set(bio, LOCATION, 3).unwrap_or(1);
        let extra_pleura_rows = (0..3)
            .filter(|&i| i != main && bio.is_set(LOCATION + i))
            .map(|i| (LOCATION_DEPTH[i] * s).round() as isize)
            .collect();
        let thick_level = last_set(bio, THICKNESS, 4).unwrap_or(0) as f64 + 1.0;
        Scene {
            side: s,
            pleura_row: (LOCATION_DEPTH[main] * s).round() as isize,
            thickness: ((thick_level * s / 32.0).round() as isize).max(1),
            extra_pleura_rows,
            phase,
        }
    }

    fn unit(&self, px: f64) -> isize {
        ((px * self.side / 32.0).round() as isize).max(1)
    }

    fn render(&self, bio: &BiomarkerVector, t: usize) -> Canvas {
        let side = self.side as usize;
        let s = self.side;
        let si = side as isize;
        let mut c = Canvas::new(side);
        let below = self.pleura_row + self.thickness;
        // lung sliding: lateral drift of sub-pleural artefacts over time
        let dx = (2.0 * PI * t as f64 / 10.0 + self.phase).sin().round() as isize;

        for row in 0..self.pleura_row {
            for col in 0..si {
                c.set(row, col, 0.12);
            }
        }
        for &row in &self.extra_pleura_rows {
            for col in 0..si {
                c.max(row, col, 0.45);
            }
        }
        for row in self.pleura_row..below {
            for col in 0..si {
                c.max(row, col, 0.9);
            }
        }

        let seg = s / 5.0;
        let drop = self.unit(2.0);
        for i in 0..5 {
            let x0 = i as f64 * seg;
            if bio.is_set(INDENTS + i) {
                let (a, b) = ((x0 + 0.1 * seg).round() as isize, (x0 + 0.45 * seg).round() as isize);
                for col in a..b.max(a + 1) {
                    for row in self.pleura_row..below {
                        c.set(row, col, 0.05);
                    }
                    for row in self.pleura_row + drop..below + drop {
                        c.max(row, col, 0.9);
                    }
                }
            }
            if bio.is_set(BREAKS + i) {
                let (a, b) = ((x0 + 0.55 * seg).round() as isize, (x0 + 0.9 * seg).round() as isize);
                for col in a..b.max(a + 1) {
                    for row in self.pleura_row..below + drop {
                        c.set(row, col, 0.05);
                    }
                }
            }
        }

        let spacing = (s - below as f64) / 6.0;
        for i in 0..5 {
            if bio.is_set(A_LINE + i) {
                let row = below + ((i + 1) as f64 * spacing).round() as isize;
                for col in self.unit(2.0)..si - self.unit(2.0) {
                    c.max(row, col, 0.5);
                }
            }
        }

        let width = self.unit(1.0);
        let origin = first_set(bio, B_ORIGIN, 3).unwrap_or(0) as isize * self.unit(3.0);
        for i in 0..5 {
            if bio.is_set(B_LINE + i) {
                let col0 = ((i as f64 + 0.7) * seg).round() as isize + dx;
                let start = below + origin;
                for row in start..si {
                    let fade = 0.75 - 0.25 * (row - start) as f64 / (si - start).max(1) as f64;
                    for col in col0..col0 + width {
                        c.max(row, col, fade);
                    }
                }
            }
        }

        let centre_row = below as f64 + 0.3 * (s - below as f64);
        for i in 0..5 {
            if bio.is_set(CONSOLIDATION + i) {
                let centre_col = (i as f64 + 0.5) * seg + dx as f64;
                let r = (0.05 + 0.02 * i as f64) * s;
                let ri = r.ceil() as isize;
                let (cr, cc) = (centre_row.round() as isize, centre_col.round() as isize);
                for row in cr - ri..=cr + ri {
                    for col in cc - ri..=cc + ri {
                        let d2 = ((row - cr).pow(2) + (col - cc).pow(2)) as f64;
                        if d2 <= r * r {
                            let v = if (row + col) % 2 == 0 { 0.45 } else { 0.65 };
                            c.set(row, col, c.get(row, col).max(v));
                        }
                    }
                }
            }
        }

        for i in 0..3 {
            if bio.is_set(EFFUSION + i) {
                let (a, b) = ((i as f64 * s / 3.0).round() as isize, ((i + 1) as f64 * s / 3.0).round() as isize);
                for row in (0.82 * s).round() as isize..si {
                    for col in a..b {
                        c.set(row, col, 0.0);
                    }
                }
            }
        }
        c
    }
}

/// Renders `frames` noisy frames of a video with the given biomarkers.
pub fn render_video(
    bio: &BiomarkerVector,
    side: usize,
    frames: usize,
    noise_sigma: f64,
    rng: &mut StreamRng,
) -> Result<Frames> {
    let scene = Scene::new(bio, side, rng.random_range(0.0..2.0 * PI));
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::invalid(format!("{e}")))?;
    let mut pixels = Vec::with_capacity(frames * side * side);
    for t in 0..frames {
        let canvas = scene.render(bio, t);
        pixels.extend(canvas.px.iter().map(|&p| {
            let n = if noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
            (p + n).clamp(0.0, 1.0) as f32
        }));
    }
    Frames::new(frames, side, pixels)
}

/// Deterministic synthetic dataset; equal parameters give equal datasets.
pub fn generate_synthetic(params: &SynthParams) -> Result<Dataset> {
    params.validate()?;
    let mut records = Vec::with_capacity(params.n_patients * params.videos_per_patient);
    for p in 0..params.n_patients {
        let patient_id = format!("P{p:04}");
        let mut prng = rng::stream(params.seed, "synth-patient", p as u64);
        let severity = LungSeverity::new(prng.random_range(0..4u8))?;
        for v in 0..params.videos_per_patient {
            let video_id = format!("{patient_id}-V{v}");
            let mut vrng = rng::keyed(params.seed, "synth-video", &video_id);
            let bio = draw_biomarkers(severity, &mut vrng);
            let sf = noisy_label(
                sf_bin_for_severity(severity).index(),
                SfRatioBin::COUNT,
                params.label_noise,
                &mut vrng,
            );
            let disease = noisy_label(
                disease_lookup(&bio).index(),
                DiseaseCategory::COUNT,
                params.label_noise,
                &mut vrng,
            );
            let frames = render_video(
                &bio,
                params.frame_side,
                params.frames_per_video,
                params.pixel_noise_sigma,
                &mut vrng,
            )?;
            records.push(VideoRecord {
                video_id,
                patient_id: patient_id.clone(),
                frames: Arc::new(frames),
                labels: Labels {
                    biomarkers: Some(bio),
                    severity: Some(severity),
                    sf_bin: Some(SfRatioBin::new(sf as u8)?),
                    disease: Some(DiseaseCategory::new(disease as u8)?),
                },
            });
        }
    }
    Dataset::new(records, BiomarkerSchema::canonical())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(noise: f64) -> SynthParams {
        SynthParams {
            n_patients: 6,
            videos_per_patient: 2,
            label_noise: noise,
            frames_per_video: 16,
            frame_side: 16,
            ..SynthParams::default()
        }
    }

    #[test]
    fn rates_are_probabilities() {
        for row in SEVERITY_RATES {
            assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(&small(0.1)).unwrap();
        let b = generate_synthetic(&small(0.1)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SynthParams { seed: 1, ..small(0.1) }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_disease_follows_rule() {
        let d = generate_synthetic(&small(0.0)).unwrap();
        for r in d.records() {
            let bio = r.labels.biomarkers.as_ref().unwrap();
            assert_eq!(r.labels.disease.unwrap(), disease_lookup(bio));
            assert_eq!(r.labels.sf_bin.unwrap(), sf_bin_for_severity(r.labels.severity.unwrap()));
        }
    }

    #[test]
    fn healthy_videos_show_more_a_lines_than_b_lines() {
        let mut r = rng::stream(0, "healthy", 0);
        let healthy = LungSeverity::new(0).unwrap();
        let (mut a, mut b) = (0usize, 0usize);
        for _ in 0..100 {
            let bio = draw_biomarkers(healthy, &mut r);
            a += count(&bio, A_LINE, 5);
            b += count(&bio, B_LINE, 5);
        }
        assert!(a > b, "A-line hits {a}, B-line hits {b}");
    }

    #[test]
    fn rendering_reflects_b_lines() {
        let none = BiomarkerVector::zeros();
        let mut values = none.values().to_vec();
        values[B_LINE] = 1.0;
        values[B_LINE + 3] = 1.0;
        let some = BiomarkerVector::new(values).unwrap();
        let mut rng_a = rng::stream(0, "r", 0);
        let mut rng_b = rng::stream(0, "r", 0);
        let fa = render_video(&none, 32, 2, 0.0, &mut rng_a).unwrap();
        let fb = render_video(&some, 32, 2, 0.0, &mut rng_b).unwrap();
        let lower = |f: &Frames| f.frame(0)[24 * 32..].iter().map(|&p| p as f64).sum::<f64>();
        assert!(lower(&fb) > lower(&fa) + 5.0);
    }

    #[test]
    fn every_disease_class_is_reachable() {
        let mut r = rng::stream(0, "reach", 0);
        let mut seen = [false; 7];
        for i in 0..4000 {
            let bio = draw_biomarkers(LungSeverity::new((i % 4) as u8).unwrap(), &mut r);
            seen[disease_lookup(&bio).index()] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(generate_synthetic(&SynthParams { videos_per_patient: 1, ..small(0.0) }).is_err());
        assert!(generate_synthetic(&SynthParams { label_noise: 1.0, ..small(0.0) }).is_err());
    }
}
