//! File formats.
//!
//! A model directory holds, for each level `t`:
//!
//! - `design_t.csv`: header `dim_0,…,dim_{d-1}`, one point per row
//! - `level_t.csv`: header `value`, one observation per design row
//!
//! plus `model.json`, the parameter sidecar:
//!
//! ```json
//! {
//!   "format": "mfk-model",
//!   "version": 1,
//!   "dimension": 1,
//!   "domain": { "lower": [0.0], "upper": [1.0] },
//!   "levels": [
//!     { "level": 1,
//!       "kernel": { "family": "squared-exponential", "lengthscales": [0.21] },
//!       "trend": "constant", "scaling": null,
//!       "beta": [0.4], "beta_rho": null, "sigma2": 1.3,
//!       "neg_log_likelihood": -12.1,
//!       "design_file": "design_1.csv", "response_file": "level_1.csv", "points": 12 }
//!   ]
//! }
//! ```
//!
//! Floats in CSV files carry 17 significant digits and read back bit-exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cokriging::{LevelParameters, MultiFidelityData, MultiFidelityModel};
use crate::error::{Error, Result};
use crate::format;
use crate::kernels::{BasisKind, BasisSpec, KernelSpec};
use crate::sequential::Domain;

pub const SIDECAR: &str = "model.json";
const FORMAT: &str = "mfk-model";
const VERSION: u32 = 1;

pub fn design_file(t: usize) -> String {
    format!("design_{t}.csv")
}

pub fn response_file(t: usize) -> String {
    format!("level_{t}.csv")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn write_rows(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Returns the header and numeric rows; every row must have the header's width.
fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row = rec
            .iter()
            .enumerate()
            .map(|(k, field)| {
                field.trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("column {}: {e} ({field:?})", header[k]),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn parse_err(path: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}

pub fn design_header(dim: usize) -> Vec<String> {
    (0..dim).map(|k| format!("dim_{k}")).collect()
}

pub fn write_points(path: &Path, dim: usize, points: &[Vec<f64>]) -> Result<()> {
    write_rows(
        path,
        &design_header(dim),
        points
            .iter()
            .map(|p| p.iter().map(|v| format::float(*v)).collect()),
    )
}

/// Reads a design/points CSV; an empty body yields no points.
pub fn read_points(path: &Path) -> Result<(usize, Vec<Vec<f64>>)> {
    let (header, rows) = read_rows(path)?;
    let dim = header.len();
    if dim == 0 || header != design_header(dim) {
        return Err(parse_err(
            path,
            1,
            format!("expected header dim_0,…,dim_{{d-1}}, found {header:?}"),
        ));
    }
    Ok((dim, rows))
}

pub fn write_values(path: &Path, values: &[f64]) -> Result<()> {
    write_rows(
        path,
        &["value".to_string()],
        values.iter().map(|v| vec![format::float(*v)]),
    )
}

pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    let (header, rows) = read_rows(path)?;
    if header != ["value"] {
        return Err(parse_err(
            path,
            1,
            format!("expected header value, found {header:?}"),
        ));
    }
    Ok(rows.into_iter().map(|r| r[0]).collect())
}

/// Writes `design_t.csv` / `level_t.csv` for every level.
pub fn save_data(data: &MultiFidelityData, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for t in 1..=data.levels() {
        write_points(&dir.join(design_file(t)), data.dim(), data.design(t))?;
        write_values(&dir.join(response_file(t)), data.observations(t))?;
    }
    Ok(())
}

/// Reads `design_t.csv` / `level_t.csv` for `t = 1, 2, …` up to `levels`, or
/// until `design_t.csv` is absent when `levels` is `None`.
pub fn load_data(dir: &Path, levels: Option<usize>) -> Result<MultiFidelityData> {
    let mut designs = Vec::new();
    let mut observations = Vec::new();
    let mut dim = None;
    for t in 1.. {
        let dpath = dir.join(design_file(t));
        match levels {
            Some(s) if t > s => break,
            None if t > 1 && !dpath.exists() => break,
            _ => {}
        }
        let (d, points) = read_points(&dpath)?;
        if *dim.get_or_insert(d) != d {
            return Err(Error::Validation(format!(
                "{}: dimension {d} differs from level 1 ({})",
                dpath.display(),
                dim.unwrap_or(d)
            )));
        }
        let rpath = dir.join(response_file(t));
        let values = read_values(&rpath)?;
        if values.len() != points.len() {
            return Err(Error::Validation(format!(
                "{} has {} rows but {} has {}",
                rpath.display(),
                values.len(),
                dpath.display(),
                points.len()
            )));
        }
        designs.push(points);
        observations.push(values);
    }
    MultiFidelityData::new(designs, observations)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    pub kernel: KernelSpec,
    pub trend: BasisKind,
    pub scaling: Option<BasisKind>,
    pub beta: Vec<f64>,
    pub beta_rho: Option<Vec<f64>>,
    pub sigma2: f64,
    pub neg_log_likelihood: f64,
    pub design_file: String,
    pub response_file: String,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub format: String,
    pub version: u32,
    pub dimension: usize,
    /// Input box the model was built for, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Bounds>,
    pub levels: Vec<LevelRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn domain(&self) -> Result<Domain> {
        Domain::new(self.lower.clone(), self.upper.clone())
    }
}

impl ModelSidecar {
    pub fn from_model(model: &MultiFidelityModel) -> Self {
        let levels = model
            .levels()
            .iter()
            .map(|lvl| {
                let p = lvl.parameters();
                let t = lvl.level();
                LevelRecord {
                    level: t,
                    kernel: p.kernel,
                    trend: p.trend.kind,
                    scaling: p.scaling.map(|g| g.kind),
                    beta: p.beta,
                    beta_rho: p.beta_rho,
                    sigma2: p.sigma2,
                    neg_log_likelihood: lvl.neg_log_likelihood(),
                    design_file: design_file(t),
                    response_file: response_file(t),
                    points: model.data().design(t).len(),
                }
            })
            .collect();
        ModelSidecar {
            format: FORMAT.into(),
            version: VERSION,
            dimension: model.dim(),
            domain: None,
            levels,
        }
    }

    pub fn parameters(&self) -> Vec<LevelParameters> {
        let d = self.dimension;
        self.levels
            .iter()
            .map(|r| LevelParameters {
                kernel: r.kernel.clone(),
                trend: BasisSpec {
                    kind: r.trend,
                    dim: d,
                },
                scaling: r.scaling.map(|kind| BasisSpec { kind, dim: d }),
                beta: r.beta.clone(),
                beta_rho: r.beta_rho.clone(),
                sigma2: r.sigma2,
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("sidecar serializes");
        s.push('\n');
        s
    }
}

pub fn save_model(model: &MultiFidelityModel, dir: &Path) -> Result<()> {
    save_model_in(model, None, dir)
}

/// Like [`save_model`], recording the input box in the sidecar.
pub fn save_model_in(
    model: &MultiFidelityModel,
    domain: Option<&Domain>,
    dir: &Path,
) -> Result<()> {
    if let Some(q) = domain {
        if q.dim() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                found: q.dim(),
            });
        }
    }
    save_data(model.data(), dir)?;
    let mut sidecar = ModelSidecar::from_model(model);
    sidecar.domain = domain.map(|q| Bounds {
        lower: q.lower.clone(),
        upper: q.upper.clone(),
    });
    let path = dir.join(SIDECAR);
    fs::write(&path, sidecar.to_json()).map_err(|e| Error::io(&path, e))
}

pub fn read_sidecar(dir: &Path) -> Result<ModelSidecar> {
    let path: PathBuf = dir.join(SIDECAR);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let sidecar: ModelSidecar =
        serde_json::from_str(&text).map_err(|e| parse_err(&path, e.line(), e.to_string()))?;
    if sidecar.format != FORMAT || sidecar.version != VERSION {
        return Err(parse_err(
            &path,
            1,
            format!("unsupported format {} v{}", sidecar.format, sidecar.version),
        ));
    }
    if sidecar.levels.is_empty() {
        return Err(Error::Validation(format!("{}: no levels", path.display())));
    }
    Ok(sidecar)
}

/// Rebuilds a saved model; predictions are bit-identical to the saved one.
pub fn load_model(dir: &Path) -> Result<MultiFidelityModel> {
    let sidecar = read_sidecar(dir)?;
    model_from_sidecar(dir, &sidecar)
}

pub fn model_from_sidecar(dir: &Path, sidecar: &ModelSidecar) -> Result<MultiFidelityModel> {
    let data = load_data(dir, Some(sidecar.levels.len()))?;
    if data.dim() != sidecar.dimension {
        return Err(Error::Validation(format!(
            "sidecar dimension {} but design files have {}",
            sidecar.dimension,
            data.dim()
        )));
    }
    for r in &sidecar.levels {
        if data.design(r.level).len() != r.points {
            return Err(Error::Validation(format!(
                "level {}: sidecar records {} points, files hold {}",
                r.level,
                r.points,
                data.design(r.level).len()
            )));
        }
    }
    let mut model = MultiFidelityModel::from_parameters(data, &sidecar.parameters())?;
    let nll: Vec<f64> = sidecar
        .levels
        .iter()
        .map(|r| r.neg_log_likelihood)
        .collect();
    model.restore_likelihoods(&nll);
    Ok(model)
}
