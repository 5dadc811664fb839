//! On-disk container: a versioned JSON manifest next to raw matrix files.
//!
//! Matrix files hold `rows * cols` little-endian `f64` values in
//! column-major order with no header; shape lives in the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FourWaySplit, Task};
use crate::diagnostics::{FsiReport, QuadrantAssignment};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::pipeline::DashResult;
use crate::treeshap::ShapMatrix;

pub const CONTAINER_FORMAT: &str = "dash-container";
pub const CONTAINER_VERSION: u32 = 1;

pub fn write_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let bytes: Vec<u8> = m.to_col_major().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>, rows: usize, cols: usize) -> Result<Matrix> {
    let bytes = fs::read(path.as_ref())?;
    if bytes.len() != rows * cols * 8 {
        return Err(Error::Format(format!(
            "{}: expected {} bytes for {rows}x{cols}, found {}",
            path.as_ref().display(),
            rows * cols * 8,
            bytes.len()
        )));
    }
    let vals: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Matrix::from_col_major(rows, cols, &vals)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRef {
    pub file: String,
    pub rows: usize,
    pub cols: usize,
}

impl MatrixRef {
    fn save(dir: &Path, file: String, m: &Matrix) -> Result<Self> {
        write_matrix(dir.join(&file), m)?;
        Ok(Self { file, rows: m.rows(), cols: m.cols() })
    }

    fn load(&self, dir: &Path) -> Result<Matrix> {
        read_matrix(dir.join(&self.file), self.rows, self.cols)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Dataset {
        task: Task,
        feature_names: Vec<String>,
        features: MatrixRef,
        target: MatrixRef,
        split: Option<FourWaySplit>,
    },
    Shap(ShapHeader),
    DashResult {
        consensus: ShapHeader,
        per_model: Vec<ShapHeader>,
        selected: Vec<usize>,
        selected_scores: Vec<f64>,
        filtered: Vec<usize>,
        fsi: FsiReport,
        quadrants: QuadrantAssignment,
        global_importance: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapHeader {
    pub model_id: String,
    pub base_value: f64,
    pub background_ids: Vec<usize>,
    pub values: MatrixRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    #[serde(flatten)]
    pub payload: Payload,
}

fn manifest_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.json"))
}

fn write_manifest(dir: &Path, stem: &str, payload: Payload) -> Result<PathBuf> {
    let m = Manifest { format: CONTAINER_FORMAT.into(), version: CONTAINER_VERSION, payload };
    let path = manifest_path(dir, stem);
    fs::write(&path, serde_json::to_string_pretty(&m)?)?;
    Ok(path)
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    let m: Manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    if m.format != CONTAINER_FORMAT || m.version != CONTAINER_VERSION {
        return Err(Error::Format(format!("unsupported container {} v{}", m.format, m.version)));
    }
    Ok(m)
}

fn parent(path: &Path) -> &Path {
    path.parent().unwrap_or_else(|| Path::new("."))
}

/// Write `<stem>.json`, `<stem>.features.bin` and `<stem>.target.bin`.
pub fn save_dataset(dir: impl AsRef<Path>, stem: &str, ds: &Dataset, split: Option<&FourWaySplit>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let target = Matrix::from_vec(ds.target.len(), 1, ds.target.clone())?;
    let payload = Payload::Dataset {
        task: ds.task,
        feature_names: ds.feature_names.clone(),
        features: MatrixRef::save(dir, format!("{stem}.features.bin"), &ds.features)?,
        target: MatrixRef::save(dir, format!("{stem}.target.bin"), &target)?,
        split: split.cloned(),
    };
    write_manifest(dir, stem, payload)
}

pub fn load_dataset(manifest: impl AsRef<Path>) -> Result<(Dataset, Option<FourWaySplit>)> {
    let path = manifest.as_ref();
    match read_manifest(path)?.payload {
        Payload::Dataset { task, feature_names, features, target, split } => {
            let dir = parent(path);
            let x = features.load(dir)?;
            let y = target.load(dir)?.as_slice().to_vec();
            Ok((Dataset::new(x, y, task, feature_names)?, split))
        }
        _ => Err(Error::Format("manifest does not describe a dataset".into())),
    }
}

fn shap_header(dir: &Path, file: String, m: &ShapMatrix) -> Result<ShapHeader> {
    Ok(ShapHeader {
        model_id: m.model_id.clone(),
        base_value: m.base_value,
        background_ids: m.background_ids.clone(),
        values: MatrixRef::save(dir, file, &m.values)?,
    })
}

fn shap_from_header(dir: &Path, h: &ShapHeader) -> Result<ShapMatrix> {
    Ok(ShapMatrix {
        values: h.values.load(dir)?,
        base_value: h.base_value,
        model_id: h.model_id.clone(),
        background_ids: h.background_ids.clone(),
    })
}

pub fn save_shap(dir: impl AsRef<Path>, stem: &str, m: &ShapMatrix) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let h = shap_header(dir, format!("{stem}.values.bin"), m)?;
    write_manifest(dir, stem, Payload::Shap(h))
}

pub fn load_shap(manifest: impl AsRef<Path>) -> Result<ShapMatrix> {
    let path = manifest.as_ref();
    match read_manifest(path)?.payload {
        Payload::Shap(h) => shap_from_header(parent(path), &h),
        _ => Err(Error::Format("manifest does not describe an attribution matrix".into())),
    }
}

pub fn save_dash_result(dir: impl AsRef<Path>, stem: &str, r: &DashResult) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let consensus = shap_header(dir, format!("{stem}.consensus.bin"), &r.consensus)?;
    let per_model = r
        .per_model
        .iter()
        .enumerate()
        .map(|(k, m)| shap_header(dir, format!("{stem}.model-{k:03}.bin"), m))
        .collect::<Result<_>>()?;
    let payload = Payload::DashResult {
        consensus,
        per_model,
        selected: r.selected.clone(),
        selected_scores: r.selected_scores.clone(),
        filtered: r.filtered.clone(),
        fsi: r.fsi.clone(),
        quadrants: r.quadrants.clone(),
        global_importance: r.global_importance.clone(),
    };
    write_manifest(dir, stem, payload)
}

pub fn load_dash_result(manifest: impl AsRef<Path>) -> Result<DashResult> {
    let path = manifest.as_ref();
    let dir = parent(path);
    match read_manifest(path)?.payload {
        Payload::DashResult { consensus, per_model, selected, selected_scores, filtered, fsi, quadrants, global_importance } => {
            Ok(DashResult {
                consensus: shap_from_header(dir, &consensus)?,
                per_model: per_model.iter().map(|h| shap_from_header(dir, h)).collect::<Result<_>>()?,
                selected,
                selected_scores,
                filtered,
                fsi,
                quadrants,
                global_importance,
            })
        }
        _ => Err(Error::Format("manifest does not describe a DASH result".into())),
    }
}
