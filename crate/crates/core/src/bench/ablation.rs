use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::BenchmarkConfig;
use super::report::{build_report, EpsilonRow};
use super::runner::{cell_seed, run_cell, CellData};
use crate::baselines::{population_subset, MethodContext, MethodName, ShapCache};
use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::metrics::{accuracy, equity_cv, stability};
use crate::pipeline::{filter_performance, generate_population, maxmin_select, PipelineConfig};
use crate::rng::child_named;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    Epsilon,
    PopulationSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationRow {
    pub population_size: usize,
    pub k_eff_mean: f64,
    pub stability: Option<f64>,
    pub accuracy: Option<f64>,
    pub equity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub axis: AblationAxis,
    pub config: BenchmarkConfig,
    pub rho: Option<f64>,
    pub epsilon: Vec<EpsilonRow>,
    pub population: Vec<PopulationRow>,
}

fn level(cfg: &BenchmarkConfig, fixed: Option<&Dataset>) -> Option<f64> {
    if fixed.is_some() {
        None
    } else {
        Some(cfg.ablation_rho)
    }
}

/// DASH alone at the ablation level, sweeping epsilon.
pub fn ablate_epsilon(cfg: &BenchmarkConfig, fixed: Option<&Dataset>) -> Result<AblationReport> {
    let sub = BenchmarkConfig { methods: vec![MethodName::DashMaxmin], ..cfg.clone() };
    let rho = level(cfg, fixed);
    let cells: Vec<_> = (0..cfg.reps).into_par_iter().map(|rep| run_cell(&sub, rho, rep, fixed, None).0).collect();
    let report = build_report(&sub, cells, vec![]);
    Ok(AblationReport { axis: AblationAxis::Epsilon, config: cfg.clone(), rho, epsilon: report.epsilon_ablation, population: vec![] })
}

/// DASH at the ablation level on nested populations: the size-`m` population
/// is the first `m` members of the largest one.
pub fn ablate_population(cfg: &BenchmarkConfig, fixed: Option<&Dataset>) -> Result<AblationReport> {
    let max_m = *cfg.population_grid.iter().max().ok_or_else(|| invalid("empty population grid"))?;
    let rho = level(cfg, fixed);
    struct Rep {
        importance: Vec<Vec<f64>>,
        k: Vec<usize>,
        accuracy: Vec<Option<f64>>,
        equity: Vec<Option<f64>>,
    }
    let reps: Vec<Rep> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let seed = cell_seed(cfg.master_seed, rho, rep);
            let data = CellData::new(cfg, rho, child_named(seed, "data"), fixed)?;
            let model_seed = child_named(seed, "models");
            let pcfg = PipelineConfig {
                master_seed: child_named(model_seed, "population"),
                population_size: max_m,
                ..cfg.pipeline.clone()
            };
            let ctx = MethodContext::new(&data.dataset, &data.split, pcfg.background_size, data.background_seed)?;
            let full = generate_population(&data.dataset, &data.split, &pcfg)?;
            let mut cache = ShapCache::new();
            let mut out = Rep { importance: vec![], k: vec![], accuracy: vec![], equity: vec![] };
            for &m in &cfg.population_grid {
                let pop = full.prefix(m);
                let f = filter_performance(&pop.scores, pcfg.epsilon, pcfg.epsilon_mode)?;
                let s = maxmin_select(&pop.gain_vectors, &f, &pop.scores, pcfg.k_max, pcfg.diversity_threshold);
                let o = population_subset(&ctx, &full, &mut cache, &s)?;
                out.accuracy.push(data.truth.as_ref().and_then(|t| accuracy(&o.importance, t).ok()));
                out.equity.push(data.groups.as_ref().and_then(|g| equity_cv(&o.importance, g).ok()));
                out.k.push(s.len());
                out.importance.push(o.importance);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let population = cfg
        .population_grid
        .iter()
        .enumerate()
        .map(|(i, &m)| PopulationRow {
            population_size: m,
            k_eff_mean: mean(reps.iter().map(|r| r.k[i] as f64).collect()).unwrap_or(0.0),
            stability: stability(&reps.iter().map(|r| r.importance[i].clone()).collect::<Vec<_>>()).ok(),
            accuracy: mean(reps.iter().filter_map(|r| r.accuracy[i]).collect()),
            equity: mean(reps.iter().filter_map(|r| r.equity[i]).collect()),
        })
        .collect();
    Ok(AblationReport { axis: AblationAxis::PopulationSize, config: cfg.clone(), rho, epsilon: vec![], population })
}
