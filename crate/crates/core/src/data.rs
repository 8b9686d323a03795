//! Dataset ingestion: IDX image files, CSV tables and seeded synthetic sets.
//!
//! Features are min-max normalized to `[0, 1]` with ranges taken from the
//! training split only; test rows are clamped into the same range.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const SPLIT_STREAM: u64 = 4;
pub const SYNTH_STREAM: u64 = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub width: usize,
    pub classes: usize,
    /// Row-major, `labels.len() * width` values, normalized.
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Per-feature `(min, max)` over the training split, before normalization.
    pub ranges: Vec<(f64, f64)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    /// Builds a dataset from raw rows: checks labels and finiteness, splits
    /// with a seeded shuffle and normalizes against the training split.
    pub fn from_raw(
        name: &str,
        width: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        classes: usize,
        split: &SplitOptions,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Dataset(format!("{name}: no samples")));
        }
        if width == 0 || features.len() != labels.len() * width {
            return Err(Error::Dataset(format!("{name}: feature matrix shape does not match {} rows", labels.len())));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Dataset(format!("{name}: non-finite feature in row {}", i / width)));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Dataset(format!("{name}: label {l} outside [0, {classes})")));
        }
        if !(0.0..1.0).contains(&split.test_fraction) {
            return Err(Error::Dataset(format!("test fraction {} not in [0, 1)", split.test_fraction)));
        }
        let mut order: Vec<usize> = (0..labels.len()).collect();
        SeededRng::derived(split.seed, SPLIT_STREAM).shuffle(&mut order);
        let n_test = ((labels.len() as f64) * split.test_fraction).round() as usize;
        let n_test = n_test.min(labels.len() - 1);
        let mut test = order[..n_test].to_vec();
        let mut train = order[n_test..].to_vec();
        test.sort_unstable();
        train.sort_unstable();

        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); width];
        for &i in &train {
            for (r, &v) in ranges.iter_mut().zip(&features[i * width..(i + 1) * width]) {
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
        let mut features = features;
        for row in features.chunks_mut(width) {
            for (v, &(lo, hi)) in row.iter_mut().zip(&ranges) {
                *v = if hi > lo { ((*v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
            }
        }
        Ok(Self { name: name.into(), width, classes, features, labels, train, test, ranges })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self { test_fraction: 0.25, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    IdxImages,
    CsvTabular,
    Synthetic,
}

impl DataFormat {
    pub fn infer(source: &str) -> Result<Self> {
        if source.starts_with("synthetic-") {
            Ok(Self::Synthetic)
        } else if source.ends_with(".csv") {
            Ok(Self::CsvTabular)
        } else if source.contains("idx") {
            Ok(Self::IdxImages)
        } else {
            Err(Error::Dataset(format!("cannot tell the format of `{source}` (expected .csv, *idx*, or synthetic-*)")))
        }
    }
}

/// Loads `source` as a path or a synthetic spec such as
/// `synthetic-blobs:dims=2,classes=3,seed=4`.
pub fn load_dataset(source: &str, format: Option<DataFormat>, split: &SplitOptions) -> Result<Dataset> {
    match format.map_or_else(|| DataFormat::infer(source), Ok)? {
        DataFormat::Synthetic => synthetic(&SyntheticSpec::parse(source)?, split),
        DataFormat::CsvTabular => load_csv(Path::new(source), split),
        DataFormat::IdxImages => {
            let images = PathBuf::from(source);
            load_idx(&images, &idx_labels_path(&images)?, split)
        }
    }
}

fn idx_labels_path(images: &Path) -> Result<PathBuf> {
    let name = images
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Dataset(format!("bad image path {}", images.display())))?;
    let label_name = name.replacen("images-idx3", "labels-idx1", 1).replacen("images", "labels", 1);
    if label_name == name {
        return Err(Error::Dataset(format!("cannot derive a labels file from {name}")));
    }
    Ok(images.with_file_name(label_name))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

/// Reads an IDX header and returns `(dims, payload)` for unsigned-byte data.
fn read_idx(path: &Path, expected_dims: usize) -> Result<(Vec<usize>, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(parse_err(path, 0, "missing IDX magic"));
    }
    if bytes[2] != 0x08 {
        return Err(parse_err(path, 0, format!("IDX element type 0x{:02x} is not unsigned byte", bytes[2])));
    }
    let ndim = bytes[3] as usize;
    if ndim != expected_dims {
        return Err(parse_err(path, 0, format!("IDX has {ndim} dimensions, expected {expected_dims}")));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(parse_err(path, 0, "truncated IDX header"));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let size: usize = dims.iter().product();
    if bytes.len() - header != size {
        return Err(parse_err(path, 0, format!("IDX payload has {} bytes, header says {size}", bytes.len() - header)));
    }
    Ok((dims, bytes[header..].to_vec()))
}

/// IDX image/label pair (MNIST layout); each image is flattened row-major.
pub fn load_idx(images: &Path, labels: &Path, split: &SplitOptions) -> Result<Dataset> {
    let (dims, pixels) = read_idx(images, 3)?;
    let (ldims, raw_labels) = read_idx(labels, 1)?;
    if dims[0] != ldims[0] {
        return Err(Error::Dataset(format!("{} images but {} labels", dims[0], ldims[0])));
    }
    let width = dims[1] * dims[2];
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let features = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let name = images.file_name().and_then(|n| n.to_str()).unwrap_or("idx");
    Dataset::from_raw(name, width, features, labels, classes, split)
}

/// CSV with numeric feature columns and the class label in the last column.
/// A non-numeric first row is taken as a header. Labels that are all
/// non-negative integers are used as-is; otherwise distinct strings are
/// numbered in sorted order.
pub fn load_csv(path: &Path, split: &SplitOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path).map_err(|e| csv_err(path, e))?;
    let mut width = None;
    let mut features = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.len() < 2 {
            return Err(parse_err(path, line, "need at least one feature and a label"));
        }
        let n = record.len() - 1;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().take(n).map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(e) => return Err(parse_err(path, line, format!("bad feature value: {e}"))),
        };
        match width {
            None => width = Some(n),
            Some(w) if w != n => return Err(parse_err(path, line, format!("{n} features, expected {w}"))),
            _ => {}
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(parse_err(path, line, format!("non-finite value in column {}", j + 1)));
        }
        features.extend(values);
        raw_labels.push(record[n].to_string());
    }
    let width = width.ok_or_else(|| parse_err(path, 0, "no data rows"))?;
    let (labels, classes) = encode_labels(&raw_labels);
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("csv");
    Dataset::from_raw(name, width, features, labels, classes, split)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    parse_err(path, line, e.to_string())
}

fn encode_labels(raw: &[String]) -> (Vec<usize>, usize) {
    if let Ok(ints) = raw.iter().map(|s| s.parse::<usize>()).collect::<std::result::Result<Vec<_>, _>>() {
        let classes = ints.iter().max().map_or(0, |m| m + 1).max(2);
        return (ints, classes);
    }
    let mut names: Vec<&str> = raw.iter().map(String::as_str).collect();
    names.sort_unstable();
    names.dedup();
    let labels = raw.iter().map(|s| names.binary_search(&s.as_str()).unwrap()).collect();
    (labels, names.len().max(2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Gaussian clusters around random centers.
    Blobs,
    /// Binary label from a sum of pairwise feature products (an XOR family).
    Nonlinear,
    /// Noisy, jittered 8x8 renderings of the ten digit glyphs.
    Digits8x8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub samples: usize,
    pub dims: usize,
    pub classes: usize,
    pub spread: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind) -> Self {
        match kind {
            SyntheticKind::Blobs => Self { kind, samples: 800, dims: 2, classes: 2, spread: 0.6, seed: 0 },
            SyntheticKind::Nonlinear => Self { kind, samples: 2000, dims: 6, classes: 2, spread: 0.0, seed: 0 },
            SyntheticKind::Digits8x8 => Self { kind, samples: 2000, dims: 64, classes: 10, spread: 0.15, seed: 0 },
        }
    }

    /// `synthetic-<kind>[:key=value,...]` with keys samples, dims, classes,
    /// spread, seed.
    pub fn parse(text: &str) -> Result<Self> {
        let body = text
            .strip_prefix("synthetic-")
            .ok_or_else(|| Error::Dataset(format!("`{text}` is not a synthetic spec")))?;
        let (kind, params) = body.split_once(':').unwrap_or((body, ""));
        let kind = match kind {
            "blobs" => SyntheticKind::Blobs,
            "nonlinear" => SyntheticKind::Nonlinear,
            "digits8x8" => SyntheticKind::Digits8x8,
            other => return Err(Error::Dataset(format!("unknown synthetic dataset `{other}`"))),
        };
        let mut spec = Self::new(kind);
        for kv in params.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Dataset(format!("bad synthetic parameter `{kv}`")))?;
            let bad = || Error::Dataset(format!("bad value for `{k}`: `{v}`"));
            match k {
                "samples" => spec.samples = v.parse().map_err(|_| bad())?,
                "dims" => spec.dims = v.parse().map_err(|_| bad())?,
                "classes" => spec.classes = v.parse().map_err(|_| bad())?,
                "spread" => spec.spread = v.parse().map_err(|_| bad())?,
                "seed" => spec.seed = v.parse().map_err(|_| bad())?,
                _ => return Err(Error::Dataset(format!("unknown synthetic parameter `{k}`"))),
            }
        }
        if spec.samples < 2 || spec.dims == 0 || spec.classes < 2 {
            return Err(Error::Dataset(format!("degenerate synthetic spec `{text}`")));
        }
        match kind {
            SyntheticKind::Nonlinear if spec.classes != 2 || spec.dims < 2 => {
                Err(Error::Dataset("nonlinear data is binary and needs dims >= 2".into()))
            }
            SyntheticKind::Digits8x8 if spec.dims != 64 || spec.classes > 10 => {
                Err(Error::Dataset("digits8x8 has 64 features and at most 10 classes".into()))
            }
            _ => Ok(spec),
        }
    }

    pub fn label(&self) -> String {
        let kind = match self.kind {
            SyntheticKind::Blobs => "blobs",
            SyntheticKind::Nonlinear => "nonlinear",
            SyntheticKind::Digits8x8 => "digits8x8",
        };
        format!(
            "synthetic-{kind}:samples={},dims={},classes={},spread={},seed={}",
            self.samples, self.dims, self.classes, self.spread, self.seed
        )
    }
}

/// 5x7 glyphs for 0-9, one row per byte, bit 4 leftmost.
const GLYPHS: [[u8; 7]; 10] = [
    [0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e],
    [0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e],
    [0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f],
    [0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e],
    [0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02],
    [0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e],
    [0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e],
    [0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
    [0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e],
    [0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c],
];

pub fn synthetic(spec: &SyntheticSpec, split: &SplitOptions) -> Result<Dataset> {
    let mut rng = SeededRng::derived(spec.seed, SYNTH_STREAM);
    let (n, d) = (spec.samples, spec.dims);
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    match spec.kind {
        SyntheticKind::Blobs => {
            let centers: Vec<f64> = (0..spec.classes * d).map(|_| rng.uniform(-3.0, 3.0)).collect();
            for i in 0..n {
                let c = i % spec.classes;
                for j in 0..d {
                    features.push(centers[c * d + j] + spec.spread * rng.normal());
                }
                labels.push(c);
            }
        }
        SyntheticKind::Nonlinear => {
            for _ in 0..n {
                let x: Vec<f64> = (0..d).map(|_| rng.unit()).collect();
                let score: f64 = x.chunks_exact(2).map(|p| (p[0] - 0.5) * (p[1] - 0.5)).sum();
                labels.push(usize::from(score > 0.0));
                features.extend(x);
            }
        }
        SyntheticKind::Digits8x8 => {
            for i in 0..n {
                let c = i % spec.classes;
                let (dx, dy) = (rng.below(4) as i32, rng.below(2) as i32);
                for y in 0..8i32 {
                    for x in 0..8i32 {
                        let (gx, gy) = (x - dx, y - dy);
                        let on = (0..5).contains(&gx) && (0..7).contains(&gy) && GLYPHS[c][gy as usize] >> (4 - gx) & 1 == 1;
                        let v = if on { 1.0 } else { 0.0 } + spec.spread * rng.normal();
                        features.push(v.clamp(0.0, 1.0));
                    }
                }
                labels.push(c);
            }
        }
    }
    Dataset::from_raw(&spec.label(), d, features, labels, spec.classes, split)
}
