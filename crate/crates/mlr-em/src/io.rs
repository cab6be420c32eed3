//! CSV and JSON artifacts. Every writer has a matching reader, and files are
//! written to a temporary sibling and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{BoundReport, TheoremId};
use crate::error::{MlrError, Result};
use crate::finite::{StepKind, TrajectoryRecord};
use crate::model::Dataset;
use crate::oracle::McEstimate;
use crate::population::PopulationRecord;

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = temp_sibling(path);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| MlrError::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Header of the first line of a CSV file.
pub fn read_header(path: &Path) -> Result<Vec<String>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.headers()?.iter().map(str::to_string).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationRow {
    pub iter: usize,
    pub b1: f64,
    pub b1_star: f64,
    pub b2_star: f64,
    pub cos_theta: f64,
    pub sin_theta: f64,
    pub l2_error: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

pub const POPULATION_HEADER: [&str; 9] =
    ["iter", "b1", "b1_star", "b2_star", "cos_theta", "sin_theta", "l2_error", "S", "R"];

impl From<&PopulationRecord> for PopulationRow {
    fn from(r: &PopulationRecord) -> Self {
        Self {
            iter: r.iter,
            b1: r.b1,
            b1_star: r.b1_star,
            b2_star: r.b2_star,
            cos_theta: r.cos_theta,
            sin_theta: r.sin_theta,
            l2_error: r.l2_error,
            s: r.s,
            r: r.r,
        }
    }
}

impl From<&PopulationRow> for PopulationRecord {
    fn from(r: &PopulationRow) -> Self {
        Self {
            iter: r.iter,
            b1: r.b1,
            b1_star: r.b1_star,
            b2_star: r.b2_star,
            cos_theta: r.cos_theta,
            sin_theta: r.sin_theta,
            l2_error: r.l2_error,
            s: r.s,
            r: r.r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteRow {
    pub iter: usize,
    pub variant: StepKind,
    pub cos_theta: f64,
    pub sin_theta: f64,
    pub l2_error: f64,
    pub norm: f64,
    pub cond_number: Option<f64>,
    pub batch_start: usize,
    pub batch_end: usize,
}

pub const FINITE_HEADER: [&str; 9] = [
    "iter",
    "variant",
    "cos_theta",
    "sin_theta",
    "l2_error",
    "norm",
    "cond_number",
    "batch_start",
    "batch_end",
];

impl From<&TrajectoryRecord> for FiniteRow {
    fn from(r: &TrajectoryRecord) -> Self {
        Self {
            iter: r.iter,
            variant: r.variant_used,
            cos_theta: r.cos_theta,
            sin_theta: r.sin_theta,
            l2_error: r.l2_error,
            norm: r.norm,
            cond_number: r.cond_number,
            batch_start: r.batch_start,
            batch_end: r.batch_end,
        }
    }
}

impl From<&FiniteRow> for TrajectoryRecord {
    fn from(r: &FiniteRow) -> Self {
        Self {
            iter: r.iter,
            cos_theta: r.cos_theta,
            sin_theta: r.sin_theta,
            l2_error: r.l2_error,
            norm: r.norm,
            variant_used: r.variant,
            cond_number: r.cond_number,
            batch_start: r.batch_start,
            batch_end: r.batch_end,
            bound_checks: Default::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub run_id: String,
    pub iter: usize,
    pub theorem_id: TheoremId,
    pub applicable: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

impl BoundRow {
    pub fn new(run_id: &str, r: &BoundReport) -> Self {
        Self {
            run_id: run_id.to_string(),
            iter: r.iter,
            theorem_id: r.theorem_id,
            applicable: r.applicable,
            lhs: r.lhs,
            rhs: r.rhs,
            margin: r.margin,
            pass: r.pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub case_id: String,
    pub quantity: String,
    pub mean: f64,
    pub std_error: f64,
    pub n_draws: usize,
    pub seed: u64,
}

impl OracleRow {
    pub fn new(case_id: &str, quantity: &str, e: &McEstimate) -> Self {
        Self {
            case_id: case_id.to_string(),
            quantity: quantity.to_string(),
            mean: e.mean,
            std_error: e.std_error,
            n_draws: e.n_draws,
            seed: e.seed,
        }
    }

    pub fn estimate(&self) -> McEstimate {
        McEstimate { mean: self.mean, std_error: self.std_error, n_draws: self.n_draws, seed: self.seed }
    }
}

/// Inputs of a frozen oracle case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCaseRow {
    pub case_id: String,
    pub b1: f64,
    pub b1_star: f64,
    pub b2_star: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointRow {
    pub point: String,
    /// Coordinate along `beta* / ||beta*||`.
    pub c_star: f64,
    /// Coordinate along the chosen orthogonal direction.
    pub c_orth: f64,
    pub residual: f64,
    pub hessian_quadform: f64,
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGridRow {
    pub c_star: f64,
    pub c_orth: f64,
    pub loglik: f64,
}

/// Dataset dump with columns `i, y, x_0..x_{d-1}` and optionally `z`.
pub fn write_dataset(path: &Path, data: &Dataset, emit_labels: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let d = data.dim();
    let mut header = vec!["i".to_string(), "y".to_string()];
    header.extend((0..d).map(|j| format!("x_{j}")));
    if emit_labels {
        header.push("z".into());
    }
    w.write_record(&header)?;
    let labels = data.labels_for_diagnostics();
    let mut rec = Vec::with_capacity(d + 3);
    for i in 0..data.len() {
        rec.clear();
        rec.push((data.first_row() + i).to_string());
        rec.push(data.ys()[i].to_string());
        for j in 0..d {
            rec.push(data.xs()[(i, j)].to_string());
        }
        if emit_labels {
            rec.push(labels[i].to_string());
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| MlrError::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Dataset dump read back as `(i, y, x rows, optional z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetDump {
    pub index: Vec<usize>,
    pub ys: Vec<f64>,
    pub xs: Vec<Vec<f64>>,
    pub zs: Option<Vec<i8>>,
}

pub fn read_dataset(path: &Path) -> Result<DatasetDump> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let has_z = header.last().map(|h| h == "z").unwrap_or(false);
    let d = header.len() - 2 - usize::from(has_z);
    let bad = |m: String| MlrError::Config(format!("malformed dataset CSV: {m}"));
    let mut dump = DatasetDump { index: vec![], ys: vec![], xs: vec![], zs: has_z.then(Vec::new) };
    for rec in r.records() {
        let rec = rec?;
        dump.index.push(rec[0].parse().map_err(|e| bad(format!("{e}")))?);
        dump.ys.push(rec[1].parse().map_err(|e| bad(format!("{e}")))?);
        let mut x = Vec::with_capacity(d);
        for j in 0..d {
            x.push(rec[2 + j].parse().map_err(|e| bad(format!("{e}")))?);
        }
        dump.xs.push(x);
        if let Some(zs) = dump.zs.as_mut() {
            zs.push(rec[2 + d].parse().map_err(|e| bad(format!("{e}")))?);
        }
    }
    Ok(dump)
}
