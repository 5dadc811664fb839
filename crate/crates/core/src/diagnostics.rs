//! Feature Stability Index, importance/stability quadrants and local
//! disagreement across an ensemble of attribution matrices.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};
use crate::treeshap::{sorted_by_id, ShapMatrix};

pub const FSI_EPSILON0: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsiReport {
    pub fsi: Vec<f64>,
    /// Mean over rows of the cross-model population SD.
    pub sigma_bar: Vec<f64>,
    pub importance: Vec<f64>,
    pub epsilon0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrant {
    #[serde(rename = "I-robust")]
    Robust,
    #[serde(rename = "II-collinear")]
    Collinear,
    #[serde(rename = "III-unimportant")]
    Unimportant,
    #[serde(rename = "IV-fragile")]
    Fragile,
}

impl Quadrant {
    pub fn label(self) -> &'static str {
        match self {
            Quadrant::Robust => "I-robust",
            Quadrant::Collinear => "II-collinear",
            Quadrant::Unimportant => "III-unimportant",
            Quadrant::Fragile => "IV-fragile",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrantAssignment {
    pub quadrants: Vec<Quadrant>,
    pub importance_threshold: f64,
    pub fsi_threshold: f64,
}

fn check_shapes(per_model: &[ShapMatrix]) -> Result<(usize, usize)> {
    let first = per_model.first().ok_or_else(|| invalid("no attribution matrices"))?;
    let (n, p) = (first.rows(), first.cols());
    if per_model.iter().any(|m| m.rows() != n || m.cols() != p) {
        return Err(mismatch("attribution matrices differ in shape"));
    }
    Ok((n, p))
}

/// Per-cell cross-model mean and population SD, visiting models in id order.
/// Mean and population SD, shifted by the first value so identical inputs
/// give exactly their value and zero.
fn cell_moments(models: &[&ShapMatrix], i: usize, j: usize) -> (f64, f64) {
    let k = models.len() as f64;
    let x0 = models[0].values.get(i, j);
    let shift = models.iter().map(|m| m.values.get(i, j) - x0).sum::<f64>() / k;
    let var = models.iter().map(|m| (m.values.get(i, j) - x0 - shift).powi(2)).sum::<f64>() / k;
    (x0 + shift, var.sqrt())
}

pub fn compute_fsi(per_model: &[ShapMatrix], consensus_importance: &[f64]) -> Result<FsiReport> {
    let (n, p) = check_shapes(per_model)?;
    if consensus_importance.len() != p {
        return Err(mismatch("importance length differs from attribution width"));
    }
    let models = sorted_by_id(per_model);
    let mut sigma_bar = vec![0.0; p];
    for (j, s) in sigma_bar.iter_mut().enumerate() {
        *s = (0..n).map(|i| cell_moments(&models, i, j).1).sum::<f64>() / n.max(1) as f64;
    }
    let fsi = sigma_bar
        .iter()
        .zip(consensus_importance)
        .map(|(s, imp)| s / (imp + FSI_EPSILON0))
        .collect();
    Ok(FsiReport { fsi, sigma_bar, importance: consensus_importance.to_vec(), epsilon0: FSI_EPSILON0 })
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 0 {
        0.5 * (s[m - 1] + s[m])
    } else {
        s[m]
    }
}

/// Median-threshold quadrants; values equal to a median count as low.
pub fn assign_quadrants(importance: &[f64], fsi: &[f64]) -> Result<QuadrantAssignment> {
    if importance.len() != fsi.len() {
        return Err(mismatch("importance and fsi lengths differ"));
    }
    if importance.len() < 2 {
        return Err(invalid("need at least 2 features"));
    }
    let ti = median(importance);
    let tf = median(fsi);
    let quadrants = importance
        .iter()
        .zip(fsi)
        .map(|(&i, &f)| match (i > ti, f > tf) {
            (true, false) => Quadrant::Robust,
            (true, true) => Quadrant::Collinear,
            (false, false) => Quadrant::Unimportant,
            (false, true) => Quadrant::Fragile,
        })
        .collect();
    Ok(QuadrantAssignment { quadrants, importance_threshold: ti, fsi_threshold: tf })
}

/// Per-feature `(mean, population sd)` across models at one row.
pub fn local_disagreement(per_model: &[ShapMatrix], row: usize) -> Result<Vec<(f64, f64)>> {
    let (n, p) = check_shapes(per_model)?;
    if row >= n {
        return Err(invalid(format!("row {row} out of range for {n} rows")));
    }
    let models = sorted_by_id(per_model);
    Ok((0..p).map(|j| cell_moments(&models, row, j)).collect())
}

/// Row with the largest summed per-feature SD; ties go to the lowest row.
pub fn highest_variance_row(per_model: &[ShapMatrix]) -> Result<usize> {
    let (n, p) = check_shapes(per_model)?;
    let models = sorted_by_id(per_model);
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..n {
        let total: f64 = (0..p).map(|j| cell_moments(&models, i, j).1).sum();
        if total > best.1 {
            best = (i, total);
        }
    }
    Ok(best.0)
}

pub fn write_is_plot(path: impl AsRef<Path>, names: &[String], report: &FsiReport, q: &QuadrantAssignment) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["feature", "importance", "fsi", "quadrant"])?;
    for (j, name) in names.iter().enumerate() {
        w.write_record([
            name.as_str(),
            &report.importance[j].to_string(),
            &report.fsi[j].to_string(),
            q.quadrants[j].label(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_disagreement(path: impl AsRef<Path>, names: &[String], pairs: &[(f64, f64)], row: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["feature", "mean", "sd", "row_index"])?;
    for (name, (m, s)) in names.iter().zip(pairs) {
        w.write_record([name.as_str(), &m.to_string(), &s.to_string(), &row.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_fsi(path: impl AsRef<Path>, names: &[String], report: &FsiReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["feature", "fsi", "sigma_bar", "importance"])?;
    for (j, name) in names.iter().enumerate() {
        w.write_record([
            name.as_str(),
            &report.fsi[j].to_string(),
            &report.sigma_bar[j].to_string(),
            &report.importance[j].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
