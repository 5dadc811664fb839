use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{BenchmarkConfig, BENCH_SCHEMA_VERSION};
use super::runner::{run_methods, CellData, CellResult, CellStatus, CellTimings};
use crate::baselines::MethodName;
use crate::data::Dataset;
use crate::error::Result;
use crate::metrics::{stability, stability_contributions, variance_decomposition, VarianceDecomposition};
use crate::rng::child_named;
use crate::stats::{bca_bootstrap, cohens_d, holm_bonferroni, wilcoxon_signed_rank, TestResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: MethodName,
    pub rho: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
    pub stability: Option<f64>,
    /// Standard error of the per-repetition stability contributions.
    pub stability_se: Option<f64>,
    pub stability_ci: Option<(f64, f64)>,
    pub accuracy: Option<f64>,
    pub accuracy_se: Option<f64>,
    pub equity: Option<f64>,
    pub equity_se: Option<f64>,
    pub rmse: Option<f64>,
    pub rmse_se: Option<f64>,
    pub k_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub epsilon: f64,
    pub models_passing: f64,
    pub k_eff_mean: f64,
    pub k_eff_sd: f64,
    pub stability: Option<f64>,
    pub accuracy: Option<f64>,
    pub equity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub method: MethodName,
    pub rho: Option<f64>,
    pub decomposition: VarianceDecomposition,
    pub model_selection_instability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub config: BenchmarkConfig,
    pub cells: Vec<CellResult>,
    pub summary: Vec<SummaryRow>,
    pub tests: Vec<TestResult>,
    pub epsilon_ablation: Vec<EpsilonRow>,
    pub variance_decomposition: Vec<VarianceRow>,
    pub max_local_error: f64,
}

impl BenchmarkReport {
    pub fn row(&self, method: MethodName, rho: Option<f64>) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.method == method && r.rho == rho)
    }

    pub fn stability(&self, method: MethodName, rho: Option<f64>) -> Option<f64> {
        self.row(method, rho).and_then(|r| r.stability)
    }

    pub fn cells_at(&self, rho: Option<f64>) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(move |c| c.rho == rho)
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().flat_map(|c| &c.methods).filter(|m| m.status == CellStatus::Failed).count()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn mean_se(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (Some(m), None);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(m), Some((var / n).sqrt()))
}

fn sample_sd(v: &[f64]) -> f64 {
    mean_se(v).1.map(|se| se * (v.len() as f64).sqrt()).unwrap_or(0.0)
}

fn summarize(cfg: &BenchmarkConfig, cells: &[CellResult]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for rho in cfg.levels() {
        for &m in &cfg.methods {
            let here: Vec<_> = cells.iter().filter(|c| c.rho == rho).filter_map(|c| c.method(m)).collect();
            let ok: Vec<_> = here.iter().filter(|c| c.status == CellStatus::Ok).collect();
            let vectors: Vec<Vec<f64>> = ok.iter().filter_map(|c| c.outcome.as_ref()).map(|o| o.importance.clone()).collect();
            let stab = stability(&vectors).ok();
            let se = stability_contributions(&vectors).ok().and_then(|c| mean_se(&c).1);
            let ci = if rho == Some(cfg.ablation_rho) || (rho.is_none() && vectors.len() >= 3) {
                bca_bootstrap(&vectors, |v: &[Vec<f64>]| stability(v), cfg.n_boot, 0.95, child_named(cfg.master_seed, m.label())).ok()
            } else {
                None
            };
            let acc: Vec<f64> = ok.iter().filter_map(|c| c.accuracy).collect();
            let eq: Vec<f64> = ok.iter().filter_map(|c| c.equity).collect();
            let rm: Vec<f64> = ok.iter().filter_map(|c| c.outcome.as_ref().and_then(|o| o.test_rmse)).collect();
            let ks: Vec<f64> = ok.iter().filter_map(|c| c.outcome.as_ref()).map(|o| o.k as f64).collect();
            let (accuracy, accuracy_se) = mean_se(&acc);
            let (equity, equity_se) = mean_se(&eq);
            let (rmse, rmse_se) = mean_se(&rm);
            rows.push(SummaryRow {
                method: m,
                rho,
                n_ok: ok.len(),
                n_failed: here.iter().filter(|c| c.status == CellStatus::Failed).count(),
                stability: stab,
                stability_se: se,
                stability_ci: ci,
                accuracy,
                accuracy_se,
                equity,
                equity_se,
                rmse,
                rmse_se,
                k_mean: mean_se(&ks).0,
            });
        }
    }
    rows
}

/// Paired DASH-vs-baseline Wilcoxon tests on accuracy and equity, Holm-adjusted
/// over the whole family.
fn paired_tests(cfg: &BenchmarkConfig, cells: &[CellResult]) -> Vec<TestResult> {
    if !cfg.methods.contains(&MethodName::DashMaxmin) {
        return vec![];
    }
    type Metric = fn(&super::runner::MethodCell) -> Option<f64>;
    let metrics: [(&str, Metric); 2] = [("accuracy", |c| c.accuracy), ("equity", |c| c.equity)];
    let mut out = Vec::new();
    for rho in cfg.levels() {
        for &other in cfg.methods.iter().filter(|m| **m != MethodName::DashMaxmin) {
            for (name, get) in metrics {
                let diffs: Vec<f64> = cells
                    .iter()
                    .filter(|c| c.rho == rho)
                    .filter_map(|c| Some(get(c.method(MethodName::DashMaxmin)?)? - get(c.method(other)?)?))
                    .collect();
                let Ok(p) = wilcoxon_signed_rank(&diffs) else { continue };
                out.push(TestResult {
                    comparison: format!("dash_maxmin vs {}", other.label()),
                    metric: name.into(),
                    rho,
                    n_pairs: diffs.len(),
                    p_raw: p,
                    p_adjusted: p,
                    effect_d: cohens_d(&diffs).ok(),
                });
            }
        }
    }
    let raw: Vec<f64> = out.iter().map(|t| t.p_raw).collect();
    if let Ok(adj) = holm_bonferroni(&raw) {
        for (t, a) in out.iter_mut().zip(adj) {
            t.p_adjusted = a;
        }
    }
    out
}

fn epsilon_table(cfg: &BenchmarkConfig, cells: &[CellResult]) -> Vec<EpsilonRow> {
    let at: Vec<&CellResult> = cells.iter().filter(|c| !c.epsilon.is_empty()).collect();
    cfg.epsilon_grid
        .iter()
        .enumerate()
        .filter(|_| !at.is_empty())
        .map(|(i, &eps)| {
            let rows: Vec<_> = at.iter().filter_map(|c| c.epsilon.get(i)).collect();
            let passing: Vec<f64> = rows.iter().map(|r| r.models_passing as f64).collect();
            let ks: Vec<f64> = rows.iter().map(|r| r.k_eff as f64).collect();
            let vectors: Vec<Vec<f64>> = rows.iter().map(|r| r.importance.clone()).collect();
            EpsilonRow {
                epsilon: eps,
                models_passing: mean_se(&passing).0.unwrap_or(0.0),
                k_eff_mean: mean_se(&ks).0.unwrap_or(0.0),
                k_eff_sd: sample_sd(&ks),
                stability: stability(&vectors).ok(),
                accuracy: mean_se(&rows.iter().filter_map(|r| r.accuracy).collect::<Vec<_>>()).0,
                equity: mean_se(&rows.iter().filter_map(|r| r.equity).collect::<Vec<_>>()).0,
            }
        })
        .collect()
}

/// Fixed-data / fixed-model stability for single best and DASH at the
/// ablation level. Both methods come from one shared population per seed pair.
pub fn run_variance_decomposition(cfg: &BenchmarkConfig, fixed: Option<&Dataset>) -> Result<Vec<VarianceRow>> {
    let rho = if fixed.is_some() { None } else { Some(cfg.ablation_rho) };
    let methods = [MethodName::SingleBest30, MethodName::DashMaxmin];
    let data_master = child_named(cfg.master_seed, "vd-data");
    let model_master = child_named(cfg.master_seed, "vd-models");
    let mut memo: HashMap<(u64, u64), BTreeMap<MethodName, Vec<f64>>> = HashMap::new();
    let mut rows = Vec::new();
    for m in methods {
        let vd = variance_decomposition(data_master, model_master, cfg.reps, |d, s| {
            if !memo.contains_key(&(d, s)) {
                let data = CellData::new(cfg, rho, d, fixed)?;
                let out = run_methods(cfg, &data, s, &methods, &[])?;
                let mut got = BTreeMap::new();
                for c in out.methods {
                    let o = c.outcome.ok_or_else(|| crate::error::Error::Undefined(c.error.unwrap_or_default()))?;
                    got.insert(c.method, o.importance);
                }
                memo.insert((d, s), got);
            }
            Ok(memo[&(d, s)][&m].clone())
        })?;
        rows.push(VarianceRow {
            method: m,
            rho,
            model_selection_instability: vd.model_selection_instability(),
            decomposition: vd,
        });
    }
    Ok(rows)
}

pub fn build_report(cfg: &BenchmarkConfig, mut cells: Vec<CellResult>, variance: Vec<VarianceRow>) -> BenchmarkReport {
    cells.sort_by(|a, b| {
        let ka = (a.rho.map(f64::to_bits), a.rep);
        let kb = (b.rho.map(f64::to_bits), b.rep);
        ka.cmp(&kb)
    });
    let max_local_error = cells.iter().map(|c| c.max_local_error).fold(0.0, f64::max);
    BenchmarkReport {
        schema_version: BENCH_SCHEMA_VERSION,
        config: cfg.clone(),
        summary: summarize(cfg, &cells),
        tests: paired_tests(cfg, &cells),
        epsilon_ablation: epsilon_table(cfg, &cells),
        variance_decomposition: variance,
        max_local_error,
        cells,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub method: String,
    pub mean_secs_per_rep: f64,
    /// Relative to single_best_30 (which includes its share of population training).
    pub ratio: Option<f64>,
}

/// Mean wall-clock per repetition at the ablation level. Population-based
/// methods are charged the population training time.
pub fn summarize_timings(cfg: &BenchmarkConfig, timings: &[CellTimings]) -> Vec<TimingSummary> {
    let at: Vec<&CellTimings> = timings.iter().filter(|t| t.rho.is_none_or(|r| r == cfg.ablation_rho)).collect();
    let mut out: Vec<TimingSummary> = cfg
        .methods
        .iter()
        .map(|m| {
            let uses_pop = matches!(
                m,
                MethodName::DashMaxmin | MethodName::SingleBestM | MethodName::RandomSelection | MethodName::NaiveTopn
            );
            let share = match m {
                MethodName::SingleBest30 => cfg.method_params.single_best_m.min(cfg.pipeline.population_size) as f64
                    / cfg.pipeline.population_size as f64,
                _ if uses_pop => 1.0,
                _ => 0.0,
            };
            let secs: Vec<f64> =
                at.iter().map(|t| t.methods.get(m.label()).copied().unwrap_or(0.0) + share * t.population_secs).collect();
            TimingSummary { method: m.label().into(), mean_secs_per_rep: mean_se(&secs).0.unwrap_or(0.0), ratio: None }
        })
        .collect();
    let base = out.iter().find(|t| t.method == MethodName::SingleBest30.label()).map(|t| t.mean_secs_per_rep);
    if let Some(b) = base.filter(|b| *b > 0.0) {
        out.iter_mut().for_each(|t| t.ratio = Some(t.mean_secs_per_rep / b));
    }
    out
}
