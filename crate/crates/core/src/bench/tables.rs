use std::path::Path;

use super::report::{BenchmarkReport, TimingSummary};
use crate::error::Result;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn rho_label(r: Option<f64>) -> String {
    r.map(|x| x.to_string()).unwrap_or_else(|| "data".into())
}

fn write(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-method, per-level summary.
pub fn write_table2(report: &BenchmarkReport, path: &Path) -> Result<()> {
    let rows = report
        .summary
        .iter()
        .map(|r| {
            vec![
                r.method.label().to_string(),
                rho_label(r.rho),
                r.n_ok.to_string(),
                opt(r.stability),
                opt(r.stability_se),
                opt(r.accuracy),
                opt(r.accuracy_se),
                opt(r.equity),
                opt(r.equity_se),
                opt(r.rmse),
                opt(r.rmse_se),
            ]
        })
        .collect();
    write(
        path,
        &["method", "rho", "n", "stability", "stability_se", "accuracy", "accuracy_se", "equity", "equity_se", "rmse", "rmse_se"],
        rows,
    )
}

/// All methods at the ablation level with bootstrap intervals on stability.
pub fn write_table4(report: &BenchmarkReport, path: &Path) -> Result<()> {
    let level = if report.config.csv.is_some() { None } else { Some(report.config.ablation_rho) };
    let rows = report
        .summary
        .iter()
        .filter(|r| r.rho == level)
        .map(|r| {
            vec![
                r.method.label().to_string(),
                if r.method.is_independent() { "independent" } else { "dependent" }.to_string(),
                opt(r.stability),
                opt(r.stability_se),
                opt(r.stability_ci.map(|c| c.0)),
                opt(r.stability_ci.map(|c| c.1)),
                opt(r.accuracy),
                opt(r.equity),
                opt(r.rmse),
                opt(r.k_mean),
            ]
        })
        .collect();
    write(
        path,
        &["method", "training", "stability", "stability_se", "ci_lo", "ci_hi", "accuracy", "equity", "rmse", "k"],
        rows,
    )
}

/// Paired significance tests.
pub fn write_table5(report: &BenchmarkReport, path: &Path) -> Result<()> {
    let rows = report
        .tests
        .iter()
        .map(|t| {
            vec![
                rho_label(t.rho),
                t.comparison.clone(),
                t.metric.clone(),
                t.n_pairs.to_string(),
                t.p_raw.to_string(),
                t.p_adjusted.to_string(),
                opt(t.effect_d),
            ]
        })
        .collect();
    write(path, &["rho", "comparison", "metric", "n_pairs", "p_raw", "p_holm", "cohens_d"], rows)
}

/// Epsilon sensitivity.
pub fn write_table7(report: &BenchmarkReport, path: &Path) -> Result<()> {
    let rows = report
        .epsilon_ablation
        .iter()
        .map(|e| {
            vec![
                e.epsilon.to_string(),
                e.models_passing.to_string(),
                e.k_eff_mean.to_string(),
                e.k_eff_sd.to_string(),
                opt(e.stability),
                opt(e.accuracy),
                opt(e.equity),
            ]
        })
        .collect();
    write(path, &["epsilon", "models_passing", "k_eff_mean", "k_eff_sd", "stability", "accuracy", "equity"], rows)
}

pub fn write_timings(timings: &[TimingSummary], path: &Path) -> Result<()> {
    let rows = timings
        .iter()
        .map(|t| vec![t.method.clone(), t.mean_secs_per_rep.to_string(), opt(t.ratio)])
        .collect();
    write(path, &["method", "secs_per_rep", "ratio"], rows)
}
