//! On-disk formats.
//!
//! * Frame stacks (`.lusf`): magic `LUSF`, then version, T, H, W as u32 LE,
//!   then `T·H·W` f32 LE pixels.
//! * Encoder checkpoints (`.luse`): magic `LUSE`, version, then the encoder
//!   dims (frame side, channels, blocks, out dim, shift) as u32 LE, then every
//!   tensor as f64 LE, row-major, in declaration order.
//! * Expert models (`.lusx`): magic `LUSX`, version, kind tag byte, then a
//!   hyperparameter block and a state block, each a u32 LE length followed by
//!   JSON.
//! * Manifests, training histories, feature tables and label tables are JSON
//!   or CSV.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lusbio_core::data::{Dataset, Frames, Labels, VideoRecord};
use lusbio_core::encoder::{EncoderDims, EncoderParams, EpochStats, TrainHistory};
use lusbio_core::experts::{ExpertKind, ExpertModel, ExpertState, Hyperparams};
use lusbio_core::schema::SCHEMA_VERSION;
use lusbio_core::{
    bin_sf_ratio, BiomarkerSchema, BiomarkerVector, DiseaseCategory, LungSeverity, SfRatioBin,
};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn header(&mut self, magic: &[u8; 4]) -> std::result::Result<(), String> {
        if self.take(4)? != magic {
            return Err(format!("not a {} file", String::from_utf8_lossy(magic)));
        }
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(format!("unsupported version {v}"));
        }
        Ok(())
    }

    fn finish(&self) -> std::result::Result<(), String> {
        if self.pos != self.bytes.len() {
            return Err(format!("{} trailing bytes", self.bytes.len() - self.pos));
        }
        Ok(())
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    write_bytes(&tmp, bytes)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

// ---- frames ----

pub fn encode_frames(frames: &Frames) -> Vec<u8> {
    let side = frames.side() as u32;
    let mut out = Vec::with_capacity(20 + 4 * frames.pixels().len());
    out.extend_from_slice(b"LUSF");
    for v in [FORMAT_VERSION, frames.count() as u32, side, side] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in frames.pixels() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_frames(bytes: &[u8]) -> std::result::Result<Frames, String> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(b"LUSF")?;
    let (t, h, w) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    if h != w {
        return Err(format!("frames must be square, got {h}x{w}"));
    }
    let n = t
        .checked_mul(h * w)
        .ok_or_else(|| "frame dimensions overflow".to_string())?;
    let raw = r.take(n.checked_mul(4).ok_or("frame dimensions overflow")?)?;
    r.finish()?;
    let pixels = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Frames::new(t, h, pixels).map_err(|e| e.to_string())
}

pub fn write_frames(path: &Path, frames: &Frames) -> Result<()> {
    write_bytes(path, &encode_frames(frames))
}

pub fn read_frames(path: &Path) -> Result<Frames> {
    decode_frames(&read_bytes(path)?).map_err(|r| Error::format(path, r))
}

// ---- manifest ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub records: Vec<ManifestRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub video_id: String,
    pub patient_id: String,
    /// Relative paths resolve against the manifest's directory.
    pub frames_path: String,
    #[serde(default)]
    pub labels: ManifestLabels,
}

/// Raw labels as written by annotators. Integers are range-checked at load
/// so that a bad value is reported against its record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestLabels {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub biomarkers: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<i64>,
    /// Oxygen saturation over inspired fraction; binned at load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sf_ratio_raw: Option<f64>,
    /// Pre-binned S/F class, for sources without a raw value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sf_bin: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disease: Option<i64>,
}

fn bounded<T>(
    record: &str,
    field: &str,
    value: Option<i64>,
    make: impl Fn(u8) -> lusbio_core::Result<T>,
) -> lusbio_core::Result<Option<T>> {
    let Some(v) = value else { return Ok(None) };
    let invalid = || lusbio_core::Error::Validation {
        record: record.into(),
        reason: format!("{field} {v} out of range"),
    };
    let byte = u8::try_from(v).map_err(|_| invalid())?;
    make(byte).map(Some).map_err(|_| invalid())
}

impl ManifestLabels {
    pub fn resolve(&self, record: &str) -> lusbio_core::Result<Labels> {
        let locus = |e: lusbio_core::Error| lusbio_core::Error::Validation {
            record: record.into(),
            reason: e.to_string(),
        };
        let biomarkers = match &self.biomarkers {
            Some(v) => Some(BiomarkerVector::new(v.clone()).map_err(locus)?),
            None => None,
        };
        let binned = match self.sf_ratio_raw {
            Some(raw) => Some(bin_sf_ratio(raw).map_err(locus)?),
            None => None,
        };
        let given = bounded(record, "sf_bin", self.sf_bin, SfRatioBin::new)?;
        let sf_bin = match (binned, given) {
            (Some(a), Some(b)) if a != b => {
                return Err(lusbio_core::Error::Validation {
                    record: record.into(),
                    reason: format!("sf_ratio_raw bins to {} but sf_bin is {}", a.index(), b.index()),
                })
            }
            (a, b) => a.or(b),
        };
        Ok(Labels {
            biomarkers,
            severity: bounded(record, "severity", self.severity, LungSeverity::new)?,
            sf_bin,
            disease: bounded(record, "disease", self.disease, DiseaseCategory::new)?,
        })
    }

    pub fn from_labels(labels: &Labels) -> Self {
        ManifestLabels {
            biomarkers: labels.biomarkers.as_ref().map(|b| b.values().to_vec()),
            severity: labels.severity.map(|s| s.index() as i64),
            sf_ratio_raw: None,
            sf_bin: labels.sf_bin.map(|s| s.index() as i64),
            disease: labels.disease.map(|d| d.index() as i64),
        }
    }
}

/// Loads and validates a manifest and every frame file it references.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let manifest: Manifest = read_json(path)?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::format(
            path,
            format!(
                "schema version {} (expected {SCHEMA_VERSION})",
                manifest.schema_version
            ),
        ));
    }
    let base = path.parent().unwrap_or(Path::new(""));
    let mut records = Vec::with_capacity(manifest.records.len());
    for r in &manifest.records {
        let labels = r.labels.resolve(&r.video_id)?;
        let frames = read_frames(&base.join(&r.frames_path))?;
        records.push(VideoRecord {
            video_id: r.video_id.clone(),
            patient_id: r.patient_id.clone(),
            frames: Arc::new(frames),
            labels,
        });
    }
    Ok(Dataset::new(records, BiomarkerSchema::canonical())?)
}

/// Writes `dir/manifest.json` and one frame file per record under
/// `dir/frames/`. Returns the manifest path.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    let mut records = Vec::with_capacity(dataset.len());
    for (i, r) in dataset.records().iter().enumerate() {
        let rel = format!("frames/{i:05}.lusf");
        write_frames(&dir.join(&rel), &r.frames)?;
        records.push(ManifestRecord {
            video_id: r.video_id.clone(),
            patient_id: r.patient_id.clone(),
            frames_path: rel,
            labels: ManifestLabels::from_labels(&r.labels),
        });
    }
    let path = dir.join("manifest.json");
    write_json(
        &path,
        &Manifest {
            schema_version: SCHEMA_VERSION,
            records,
        },
    )?;
    Ok(path)
}

// ---- encoder checkpoints ----

pub fn encode_checkpoint(params: &EncoderParams) -> Vec<u8> {
    let d = params.dims;
    let mut out = Vec::with_capacity(28 + 8 * params.num_params());
    out.extend_from_slice(b"LUSE");
    for v in [FORMAT_VERSION, d.frame_side as u32, d.channels as u32, d.blocks as u32, d.out_dim as u32, d.shift as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for t in params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<EncoderParams, String> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(b"LUSE")?;
    let mut field = || r.u32().map(|v| v as usize);
    let dims = EncoderDims {
        frame_side: field()?,
        channels: field()?,
        blocks: field()?,
        out_dim: field()?,
        shift: field()?,
    };
    if dims.frame_side == 0 || dims.channels == 0 || dims.out_dim == 0 || 2 * dims.shift > dims.channels {
        return Err(format!("invalid encoder dims {dims:?}"));
    }
    let expected: usize = EncoderParams::tensor_shapes(&dims).iter().sum();
    if bytes.len() - r.pos != 8 * expected {
        return Err(format!(
            "expected {expected} parameters, found {} bytes",
            bytes.len() - r.pos
        ));
    }
    let mut params = EncoderParams::zeros(dims);
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        }
    }
    r.finish()?;
    if !params.is_finite() {
        return Err("non-finite parameter".into());
    }
    Ok(params)
}

pub fn write_checkpoint(path: &Path, params: &EncoderParams) -> Result<()> {
    write_bytes(path, &encode_checkpoint(params))
}

pub fn read_checkpoint(path: &Path) -> Result<EncoderParams> {
    decode_checkpoint(&read_bytes(path)?).map_err(|r| Error::format(path, r))
}

// ---- training history ----

pub fn write_history(path: &Path, history: &TrainHistory) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.into(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in &history.epochs {
        w.serialize(e).map_err(csv_err)?;
    }
    if history.epochs.is_empty() {
        w.write_record(["epoch", "train_loss", "val_acc", "lr"]).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_bytes(path, &bytes)
}

/// Reads a history CSV; the best epoch is recomputed as the earliest epoch
/// with maximal validation accuracy.
pub fn read_history(path: &Path) -> Result<TrainHistory> {
    let mut r = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: path.into(),
        source,
    })?;
    let epochs: Vec<EpochStats> = r
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|source| Error::Csv {
            path: path.into(),
            source,
        })?;
    let mut best_epoch = 0;
    let mut best = f64::NEG_INFINITY;
    for e in &epochs {
        if e.val_acc > best {
            best = e.val_acc;
            best_epoch = e.epoch;
        }
    }
    Ok(TrainHistory { epochs, best_epoch })
}

// ---- expert models ----

#[derive(Serialize, Deserialize)]
struct ExpertBlock {
    classes: Vec<usize>,
    dim: usize,
    fit_seed: u64,
    degenerate: bool,
    state: ExpertState,
}

fn push_block(out: &mut Vec<u8>, json: &[u8]) {
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(json);
}

pub fn encode_expert(model: &ExpertModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"LUSX");
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(model.kind().tag());
    let hyper = serde_json::to_vec(&model.hyperparams).expect("hyperparameters serialize");
    let state = serde_json::to_vec(&ExpertBlock {
        classes: model.classes.clone(),
        dim: model.dim,
        fit_seed: model.fit_seed,
        degenerate: model.degenerate,
        state: model.state.clone(),
    })
    .expect("state serializes");
    push_block(&mut out, &hyper);
    push_block(&mut out, &state);
    out
}

pub fn decode_expert(bytes: &[u8]) -> std::result::Result<ExpertModel, String> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(b"LUSX")?;
    let tag = r.take(1)?[0];
    let kind = ExpertKind::from_tag(tag).ok_or_else(|| format!("unknown kind tag {tag}"))?;
    let n = r.u32()? as usize;
    let hyperparams: Hyperparams = serde_json::from_slice(r.take(n)?).map_err(|e| e.to_string())?;
    let n = r.u32()? as usize;
    let block: ExpertBlock = serde_json::from_slice(r.take(n)?).map_err(|e| e.to_string())?;
    r.finish()?;
    if hyperparams.kind() != kind {
        return Err(format!("kind tag {kind} disagrees with hyperparameters"));
    }
    Ok(ExpertModel {
        hyperparams,
        classes: block.classes,
        dim: block.dim,
        fit_seed: block.fit_seed,
        degenerate: block.degenerate,
        state: block.state,
    })
}

pub fn write_expert(path: &Path, model: &ExpertModel) -> Result<()> {
    write_bytes(path, &encode_expert(model))
}

pub fn read_expert(path: &Path) -> Result<ExpertModel> {
    decode_expert(&read_bytes(path)?).map_err(|r| Error::format(path, r))
}

// ---- feature and label tables ----

/// One feature row per video.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub rows: Vec<(String, Vec<f64>)>,
}

impl FeatureTable {
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.1.len())
    }

    pub fn get(&self, video_id: &str) -> Option<&[f64]> {
        self.rows
            .iter()
            .find(|r| r.0 == video_id)
            .map(|r| r.1.as_slice())
    }
}

fn write_table(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.into(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_bytes(path, &bytes)
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let csv_err = |source| Error::Csv {
        path: path.into(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err)?;
    Ok((header, rows))
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::format(path, format!("not a number: {s:?}")))
}

/// Header `video_id,f0,f1,…`; values printed in shortest round-trip form.
pub fn write_features(path: &Path, table: &FeatureTable) -> Result<()> {
    let mut header = vec!["video_id".to_string()];
    header.extend((0..table.dim()).map(|i| format!("f{i}")));
    write_table(
        path,
        header,
        table.rows.iter().map(|(id, v)| {
            let mut row = vec![id.clone()];
            row.extend(v.iter().map(f64::to_string));
            row
        }),
    )
}

pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let (header, rows) = read_table(path)?;
    if header.first().map(String::as_str) != Some("video_id") {
        return Err(Error::format(path, "first column must be video_id"));
    }
    let mut table = FeatureTable::default();
    for row in rows {
        let values = row[1..]
            .iter()
            .map(|s| parse_f64(path, s))
            .collect::<Result<Vec<_>>>()?;
        table.rows.push((row[0].clone(), values));
    }
    Ok(table)
}

/// Per-video class labels, optionally with class probabilities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelTable {
    pub rows: Vec<LabelRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRow {
    pub video_id: String,
    pub label: usize,
    pub probs: Option<Vec<f64>>,
}

/// Header `video_id,label` plus `p0,p1,…` when probabilities are present.
pub fn write_labels(path: &Path, table: &LabelTable) -> Result<()> {
    let k = table
        .rows
        .iter()
        .find_map(|r| r.probs.as_ref().map(Vec::len))
        .unwrap_or(0);
    let mut header = vec!["video_id".to_string(), "label".to_string()];
    header.extend((0..k).map(|i| format!("p{i}")));
    write_table(
        path,
        header,
        table.rows.iter().map(|r| {
            let mut row = vec![r.video_id.clone(), r.label.to_string()];
            if let Some(p) = &r.probs {
                row.extend(p.iter().map(f64::to_string));
            }
            row
        }),
    )
}

pub fn read_labels(path: &Path) -> Result<LabelTable> {
    let (header, rows) = read_table(path)?;
    if header.len() < 2 || header[0] != "video_id" || header[1] != "label" {
        return Err(Error::format(path, "header must start with video_id,label"));
    }
    let mut table = LabelTable::default();
    for row in rows {
        let label = row[1]
            .trim()
            .parse()
            .map_err(|_| Error::format(path, format!("bad label {:?} for {}", row[1], row[0])))?;
        let probs = if row.len() > 2 {
            Some(row[2..].iter().map(|s| parse_f64(path, s)).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        table.rows.push(LabelRow {
            video_id: row[0].clone(),
            label,
            probs,
        });
    }
    Ok(table)
}

/// Appends one line to a file, creating it if needed.
pub fn append_line(path: &Path, line: &[u8]) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(line)
        .and_then(|_| f.write_all(b"\n"))
        .and_then(|_| f.sync_data())
        .map_err(|e| Error::io(path, e))
}
