//! Dataset ingestion and seeded synthetic generators.
//!
//! Two on-disk formats are accepted:
//!
//! * `csv`: one sample per row, optional header; a final column named
//!   `label` (case-insensitive) holds ground truth.
//! * `dense`: whitespace-separated numbers, no header, with ground truth
//!   optionally read from a sidecar file holding one label per line.
//!
//! Label strings are mapped to ids `0..c` by order of first appearance.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SglError};
use crate::kernel::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    #[default]
    Csv,
    Dense,
}

impl FromStr for DataFormat {
    type Err = SglError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DataFormat::Csv),
            "dense" => Ok(DataFormat::Dense),
            other => Err(SglError::Config(format!("unknown data format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: FeatureMatrix,
    pub truth: Option<Vec<usize>>,
    /// Original label strings, indexed by id.
    pub label_names: Vec<String>,
}

fn encode_labels(raw: Vec<String>) -> (Vec<usize>, Vec<String>) {
    let mut ids = HashMap::new();
    let mut names = Vec::new();
    let encoded = raw
        .into_iter()
        .map(|s| {
            *ids.entry(s.clone()).or_insert_with(|| {
                names.push(s);
                names.len() - 1
            })
        })
        .collect();
    (encoded, names)
}

fn parse_value(s: &str, line: u64) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| SglError::Format {
        line,
        message: format!("cannot parse '{}' as a number", s.trim()),
    })
}

fn build(rows: Vec<Vec<f64>>, labels: Option<Vec<String>>) -> Result<Dataset> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let data = Array2::from_shape_vec((n, m), flat).map_err(|e| SglError::Input(e.to_string()))?;
    let x = FeatureMatrix::new(data)?;
    let (truth, label_names) = match labels {
        Some(raw) => {
            let (t, names) = encode_labels(raw);
            (Some(t), names)
        }
        None => (None, Vec::new()),
    };
    Ok(Dataset {
        x,
        truth,
        label_names,
    })
}

/// Loads a dataset; `labels_path` is only consulted for the dense format.
pub fn load_dataset(
    path: &Path,
    format: DataFormat,
    labels_path: Option<&Path>,
) -> Result<Dataset> {
    match format {
        DataFormat::Csv => load_csv(path),
        DataFormat::Dense => load_dense(path, labels_path),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| SglError::Input(format!("cannot open {}: {e}", path.display())))
}

fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);

    let mut records = reader.records();
    let first = match records.next() {
        Some(r) => r.map_err(csv_error)?,
        None => {
            return Err(SglError::Format {
                line: 1,
                message: "empty file".into(),
            })
        }
    };
    let header_line = first.position().map_or(1, |p| p.line());
    let is_header = first.iter().any(|f| f.parse::<f64>().is_err());
    let (width, label_col) = if is_header {
        let has_label = first
            .iter()
            .last()
            .is_some_and(|f| f.eq_ignore_ascii_case("label"));
        (first.len(), has_label)
    } else {
        (first.len(), false)
    };
    if is_header && first.len() < 1 + label_col as usize {
        return Err(SglError::Format {
            line: header_line,
            message: "header has no feature columns".into(),
        });
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut push = |rec: &csv::StringRecord| -> Result<()> {
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(SglError::Format {
                line,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let feat_end = if label_col { width - 1 } else { width };
        let row = rec
            .iter()
            .take(feat_end)
            .map(|f| parse_value(f, line))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
        if label_col {
            labels.push(rec[width - 1].to_string());
        }
        Ok(())
    };
    if !is_header {
        push(&first)?;
    }
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        push(&rec)?;
    }
    build(rows, label_col.then_some(labels))
}

fn csv_error(e: csv::Error) -> SglError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SglError::Io(io),
        other => SglError::Format {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn load_dense(path: &Path, labels_path: Option<&Path>) -> Result<Dataset> {
    let reader = BufReader::new(open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx as u64 + 1;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|f| parse_value(f, lineno))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(SglError::Format {
                    line: lineno,
                    message: format!("expected {} values, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    let labels = match labels_path {
        Some(p) => {
            let raw: Vec<String> = BufReader::new(open(p)?)
                .lines()
                .collect::<std::io::Result<Vec<_>>>()?
                .into_iter()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect();
            if raw.len() != rows.len() {
                return Err(SglError::Format {
                    line: raw.len() as u64,
                    message: format!(
                        "label file has {} entries for {} samples",
                        raw.len(),
                        rows.len()
                    ),
                });
            }
            Some(raw)
        }
        None => None,
    };
    build(rows, labels)
}

/// Writes `f1,…,fm[,label]` CSV.
pub fn write_csv(path: &Path, x: &FeatureMatrix, truth: Option<&[usize]>) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    let m = x.n_features();
    let mut header: Vec<String> = (1..=m).map(|j| format!("f{j}")).collect();
    if truth.is_some() {
        header.push("label".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for (i, row) in x.view().rows().into_iter().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(t) = truth {
            fields.push(t[i].to_string());
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Blobs,
    Rings,
    Moons,
}

impl FromStr for SynthKind {
    type Err = SglError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "blobs" => Ok(SynthKind::Blobs),
            "rings" => Ok(SynthKind::Rings),
            "moons" => Ok(SynthKind::Moons),
            other => Err(SglError::Config(format!(
                "unknown synthetic kind '{other}'"
            ))),
        }
    }
}

/// Parameters for the synthetic generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    /// Number of blobs or rings; moons always has two.
    pub classes: usize,
    /// Gaussian noise standard deviation.
    pub noise: f64,
    /// Distance between neighboring blob centers, or between ring radii.
    pub separation: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, n: usize, seed: u64) -> Self {
        let (classes, noise, separation) = match kind {
            SynthKind::Blobs => (3, 0.1, 5.0),
            SynthKind::Rings => (2, 0.1, 2.0),
            SynthKind::Moons => (2, 0.05, 0.0),
        };
        Self {
            kind,
            n,
            classes,
            noise,
            separation,
            seed,
        }
    }
}

/// Generates a labeled 2-D dataset; samples are spread as evenly as possible over classes.
pub fn synthesize(spec: &SynthSpec) -> Result<Dataset> {
    let classes = if spec.kind == SynthKind::Moons {
        2
    } else {
        spec.classes
    };
    if classes < 1 || spec.n < classes.max(2) {
        return Err(SglError::Config(format!(
            "cannot draw {} samples over {classes} classes",
            spec.n
        )));
    }
    if !(spec.noise >= 0.0) {
        return Err(SglError::Config("noise must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rows = Vec::with_capacity(spec.n);
    let mut truth = Vec::with_capacity(spec.n);
    for class in 0..classes {
        let count = spec.n / classes + usize::from(class < spec.n % classes);
        for i in 0..count {
            let (x, y) = match spec.kind {
                SynthKind::Blobs => {
                    let (cx, cy) = blob_center(class, classes, spec.separation);
                    (
                        cx + spec.noise * normal.sample(&mut rng),
                        cy + spec.noise * normal.sample(&mut rng),
                    )
                }
                SynthKind::Rings => {
                    let radius = 1.0 + spec.separation * class as f64;
                    let theta = 2.0 * std::f64::consts::PI * (i as f64 + rng.random::<f64>())
                        / count as f64;
                    let r = radius + spec.noise * normal.sample(&mut rng);
                    (r * theta.cos(), r * theta.sin())
                }
                SynthKind::Moons => {
                    let t = std::f64::consts::PI * i as f64 / (count.max(2) - 1) as f64;
                    let (bx, by) = if class == 0 {
                        (t.cos(), t.sin())
                    } else {
                        (1.0 - t.cos(), 0.5 - t.sin())
                    };
                    (
                        bx + spec.noise * normal.sample(&mut rng),
                        by + spec.noise * normal.sample(&mut rng),
                    )
                }
            };
            rows.push(vec![x, y]);
            truth.push(class);
        }
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let x = FeatureMatrix::new(Array2::from_shape_vec((spec.n, 2), flat).expect("shape"))?;
    let label_names = (0..classes).map(|c| c.to_string()).collect();
    Ok(Dataset {
        x,
        truth: Some(truth),
        label_names,
    })
}

/// Centers on a regular polygon whose neighboring vertices are `separation` apart.
fn blob_center(class: usize, classes: usize, separation: f64) -> (f64, f64) {
    if classes == 1 {
        return (0.0, 0.0);
    }
    let radius = separation / (2.0 * (std::f64::consts::PI / classes as f64).sin());
    let angle = 2.0 * std::f64::consts::PI * class as f64 / classes as f64;
    (radius * angle.cos(), radius * angle.sin())
}
