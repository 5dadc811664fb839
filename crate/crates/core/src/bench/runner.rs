use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::BenchmarkConfig;
use crate::baselines::{
    best_of_prefix, ensemble_shap, large_single_model, naive_topn, population_subset, random_selection, stochastic_retrain,
    MethodContext, MethodName, MethodOutcome, ShapCache,
};
use crate::data::{ground_truth_importance, load_csv, split_four_way, Dataset, DgpKind, FourWaySplit, GroupStructure};
use crate::diagnostics::Quadrant;
use crate::error::{invalid, Result};
use crate::metrics::{accuracy, equity_cv};
use crate::pipeline::{aggregate, filter_performance, generate_population, maxmin_select, member_plan, PipelineConfig, Population};
use crate::rng::{child, child_named};

/// Seed of repetition `rep` at correlation level `rho`.
pub fn cell_seed(master: u64, rho: Option<f64>, rep: usize) -> u64 {
    let level = rho.map(f64::to_bits).unwrap_or(u64::MAX);
    child(child(child_named(master, "cell"), level), rep as u64)
}

/// One repetition's data: the dataset, its split, and what is known about it.
pub struct CellData {
    pub dataset: Dataset,
    pub split: FourWaySplit,
    pub truth: Option<Vec<f64>>,
    pub groups: Option<GroupStructure>,
    pub background_seed: u64,
}

impl CellData {
    /// Regenerate synthetic data from `data_seed`, or reuse a fixed CSV dataset
    /// with a split fixed by the master seed.
    pub fn new(cfg: &BenchmarkConfig, rho: Option<f64>, data_seed: u64, fixed: Option<&Dataset>) -> Result<Self> {
        match (fixed, rho) {
            (Some(ds), _) => Ok(Self {
                dataset: ds.clone(),
                split: split_four_way(ds.n_rows(), cfg.fractions, child_named(cfg.master_seed, "split"))?,
                truth: None,
                groups: None,
                background_seed: child_named(cfg.master_seed, "background"),
            }),
            (None, Some(rho)) => {
                let spec = cfg.dgp_spec(rho, child_named(data_seed, "data"))?;
                let dataset = spec.generate()?;
                let split = split_four_way(cfg.n, cfg.fractions, child_named(data_seed, "split"))?;
                let truth = (cfg.dgp == DgpKind::Linear).then(|| ground_truth_importance(&spec)).transpose()?;
                Ok(Self { dataset, split, truth, groups: Some(spec.groups), background_seed: child_named(data_seed, "background") })
            }
            (None, None) => Err(invalid("synthetic cells need a correlation level")),
        }
    }
}

pub fn load_fixed_dataset(cfg: &BenchmarkConfig) -> Result<Option<Dataset>> {
    cfg.csv.as_ref().map(|c| load_csv(&c.path, &c.target_column, c.task)).transpose()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCell {
    pub method: MethodName,
    pub status: CellStatus,
    pub error: Option<String>,
    pub outcome: Option<MethodOutcome>,
    pub accuracy: Option<f64>,
    pub equity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashCell {
    pub population_size: usize,
    pub models_passing: usize,
    pub k_eff: usize,
    pub selected: Vec<usize>,
    pub mean_trees_per_model: f64,
    pub best_score: f64,
    pub fsi: Vec<f64>,
    pub quadrants: Vec<Quadrant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCell {
    pub epsilon: f64,
    pub models_passing: usize,
    pub k_eff: usize,
    pub importance: Vec<f64>,
    pub accuracy: Option<f64>,
    pub equity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub rho: Option<f64>,
    pub rep: usize,
    pub fingerprint: String,
    pub methods: Vec<MethodCell>,
    pub dash: Option<DashCell>,
    pub epsilon: Vec<EpsilonCell>,
    pub max_local_error: f64,
}

impl CellResult {
    pub fn method(&self, m: MethodName) -> Option<&MethodCell> {
        self.methods.iter().find(|c| c.method == m)
    }

    pub fn importance(&self, m: MethodName) -> Option<&[f64]> {
        self.method(m).and_then(|c| c.outcome.as_ref()).map(|o| o.importance.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTimings {
    pub rho: Option<f64>,
    pub rep: usize,
    pub population_secs: f64,
    pub methods: BTreeMap<String, f64>,
}

fn scored(outcome: MethodOutcome, data: &CellData, method: MethodName) -> MethodCell {
    let accuracy = data.truth.as_ref().and_then(|t| accuracy(&outcome.importance, t).ok());
    let equity = data.groups.as_ref().and_then(|g| equity_cv(&outcome.importance, g).ok());
    MethodCell { method, status: CellStatus::Ok, error: None, outcome: Some(outcome), accuracy, equity }
}

fn failed(method: MethodName, msg: String) -> MethodCell {
    MethodCell { method, status: CellStatus::Failed, error: Some(msg), outcome: None, accuracy: None, equity: None }
}

/// State shared by the methods of one repetition.
struct Shared<'a> {
    ctx: MethodContext,
    pop: Population,
    pcfg: PipelineConfig,
    cache: ShapCache,
    filtered: Vec<usize>,
    selected: Vec<usize>,
    model_seed: u64,
    cfg: &'a BenchmarkConfig,
}

impl Shared<'_> {
    fn k(&self) -> usize {
        self.selected.len().max(1)
    }

    fn mean_trees(&self) -> f64 {
        self.pop.models.iter().map(|m| m.n_trees()).sum::<usize>() as f64 / self.pop.len() as f64
    }

    /// Defaults to the population's total tree count.
    fn lsm_trees(&self) -> usize {
        self.cfg
            .method_params
            .lsm_total_trees
            .unwrap_or_else(|| self.pop.models.iter().map(|m| m.n_trees()).sum::<usize>().max(1))
    }

    fn run(&mut self, method: MethodName) -> Result<MethodOutcome> {
        let params = &self.cfg.method_params;
        let seed = child_named(self.model_seed, method.label());
        match method {
            MethodName::DashMaxmin => population_subset(&self.ctx, &self.pop, &mut self.cache, &self.selected),
            MethodName::SingleBest30 => {
                let best = best_of_prefix(&self.pop, params.single_best_m)?;
                population_subset(&self.ctx, &self.pop, &mut self.cache, &[best])
            }
            MethodName::SingleBestM => {
                let best = best_of_prefix(&self.pop, self.pop.len())?;
                population_subset(&self.ctx, &self.pop, &mut self.cache, &[best])
            }
            MethodName::LargeSingleModel => large_single_model(&self.ctx, params, self.lsm_trees(), false, seed),
            MethodName::LsmTuned => large_single_model(&self.ctx, params, self.lsm_trees(), true, seed),
            MethodName::EnsembleShap => ensemble_shap(&self.ctx, params, seed),
            MethodName::StochasticRetrain => {
                let pcfg = &self.pcfg;
                let k = params.sr_k.unwrap_or(self.k());
                stochastic_retrain(&self.ctx, &self.pop, |i| member_plan(pcfg, i), params.sr_draws, k, seed)
            }
            MethodName::RandomSelection => {
                let k = self.k();
                random_selection(&self.ctx, &self.pop, &mut self.cache, &self.filtered, k, seed)
            }
            MethodName::NaiveTopn => {
                let k = self.k();
                naive_topn(&self.ctx, &self.pop, &mut self.cache, &self.filtered, k)
            }
        }
    }
}

/// Everything one repetition produces, before checkpoint bookkeeping.
pub struct RepOutput {
    pub methods: Vec<MethodCell>,
    pub dash: Option<DashCell>,
    pub epsilon: Vec<EpsilonCell>,
    pub max_local_error: f64,
    pub timings: CellTimings,
}

/// Run `methods` on one repetition's data with models seeded from `model_seed`.
pub fn run_methods(
    cfg: &BenchmarkConfig,
    data: &CellData,
    model_seed: u64,
    methods: &[MethodName],
    epsilon_grid: &[f64],
) -> Result<RepOutput> {
    let ctx = MethodContext::new(&data.dataset, &data.split, cfg.pipeline.background_size, data.background_seed)?;
    let pcfg = PipelineConfig { master_seed: child_named(model_seed, "population"), ..cfg.pipeline.clone() };
    let t0 = Instant::now();
    let pop = generate_population(&data.dataset, &data.split, &pcfg)?;
    let population_secs = t0.elapsed().as_secs_f64();
    let filtered = filter_performance(&pop.scores, pcfg.epsilon, pcfg.epsilon_mode)?;
    let selected = maxmin_select(&pop.gain_vectors, &filtered, &pop.scores, pcfg.k_max, pcfg.diversity_threshold);
    let mut sh = Shared { ctx, pop, pcfg, cache: ShapCache::new(), filtered, selected, model_seed, cfg };

    let mut cells = Vec::with_capacity(methods.len());
    let mut times = BTreeMap::new();
    for &m in methods {
        let t = Instant::now();
        let cell = match sh.run(m) {
            Ok(o) => scored(o, data, m),
            Err(e) => failed(m, e.to_string()),
        };
        times.insert(m.label().to_string(), t.elapsed().as_secs_f64());
        cells.push(cell);
    }

    let dash = if methods.contains(&MethodName::DashMaxmin) {
        let per_model = sh.cache.collect(&sh.ctx, &sh.pop, &sh.selected)?;
        let scores = sh.selected.iter().map(|&i| sh.pop.scores[i]).collect();
        let r = aggregate(per_model, sh.selected.clone(), scores, sh.filtered.clone())?;
        Some(DashCell {
            population_size: sh.pop.len(),
            models_passing: sh.filtered.len(),
            k_eff: sh.selected.len(),
            selected: sh.selected.clone(),
            mean_trees_per_model: sh.mean_trees(),
            best_score: sh.pop.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            fsi: r.fsi.fsi,
            quadrants: r.quadrants.quadrants,
        })
    } else {
        None
    };

    let mut epsilon = Vec::with_capacity(epsilon_grid.len());
    for &eps in epsilon_grid {
        let f = filter_performance(&sh.pop.scores, eps, sh.pcfg.epsilon_mode)?;
        let s = maxmin_select(&sh.pop.gain_vectors, &f, &sh.pop.scores, sh.pcfg.k_max, sh.pcfg.diversity_threshold);
        let o = population_subset(&sh.ctx, &sh.pop, &mut sh.cache, &s)?;
        let c = scored(o, data, MethodName::DashMaxmin);
        epsilon.push(EpsilonCell {
            epsilon: eps,
            models_passing: f.len(),
            k_eff: s.len(),
            importance: c.outcome.map(|o| o.importance).unwrap_or_default(),
            accuracy: c.accuracy,
            equity: c.equity,
        });
    }

    let max_local_error = cells
        .iter()
        .filter_map(|c| c.outcome.as_ref().map(|o| o.max_local_error))
        .fold(sh.cache.max_local_error, f64::max);
    Ok(RepOutput {
        methods: cells,
        dash,
        epsilon,
        max_local_error,
        timings: CellTimings { rho: None, rep: 0, population_secs, methods: times },
    })
}

fn cell_file_stem(rho: Option<f64>, rep: usize) -> String {
    match rho {
        Some(r) => format!("cell-rho{r:.3}-rep{rep:03}"),
        None => format!("cell-data-rep{rep:03}"),
    }
}

fn read_checkpoint(dir: &Path, stem: &str, fingerprint: &str) -> Option<(CellResult, CellTimings)> {
    let cell: CellResult = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json"))).ok()?).ok()?;
    if cell.fingerprint != fingerprint {
        return None;
    }
    let timing = std::fs::read_to_string(dir.join(format!("{stem}.timing.json")))
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok())
        .unwrap_or(CellTimings { rho: cell.rho, rep: cell.rep, population_secs: 0.0, methods: BTreeMap::new() });
    Some((cell, timing))
}

fn write_checkpoint(dir: &Path, stem: &str, cell: &CellResult, timing: &CellTimings) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!("{stem}.json.tmp"));
    std::fs::write(&tmp, serde_json::to_string(cell)?)?;
    std::fs::rename(&tmp, dir.join(format!("{stem}.json")))?;
    std::fs::write(dir.join(format!("{stem}.timing.json")), serde_json::to_string(timing)?)?;
    Ok(())
}

/// Run (or resume) one repetition. A whole-cell failure is recorded on
/// every method rather than aborting the benchmark.
pub fn run_cell(
    cfg: &BenchmarkConfig,
    rho: Option<f64>,
    rep: usize,
    fixed: Option<&Dataset>,
    checkpoint_dir: Option<&Path>,
) -> (CellResult, CellTimings) {
    let fingerprint = cfg.fingerprint();
    let stem = cell_file_stem(rho, rep);
    if let Some(dir) = checkpoint_dir {
        if let Some(hit) = read_checkpoint(dir, &stem, &fingerprint) {
            return hit;
        }
    }
    let seed = cell_seed(cfg.master_seed, rho, rep);
    let eps_grid: &[f64] = if rho.is_none_or(|r| r == cfg.ablation_rho) { &cfg.epsilon_grid } else { &[] };
    let result = CellData::new(cfg, rho, child_named(seed, "data"), fixed)
        .and_then(|data| run_methods(cfg, &data, child_named(seed, "models"), &cfg.methods, eps_grid));
    let (cell, mut timing) = match result {
        Ok(out) => (
            CellResult {
                rho,
                rep,
                fingerprint,
                methods: out.methods,
                dash: out.dash,
                epsilon: out.epsilon,
                max_local_error: out.max_local_error,
            },
            out.timings,
        ),
        Err(e) => (
            CellResult {
                rho,
                rep,
                fingerprint,
                methods: cfg.methods.iter().map(|&m| failed(m, e.to_string())).collect(),
                dash: None,
                epsilon: vec![],
                max_local_error: 0.0,
            },
            CellTimings { rho, rep, population_secs: 0.0, methods: BTreeMap::new() },
        ),
    };
    timing.rho = rho;
    timing.rep = rep;
    if let Some(dir) = checkpoint_dir {
        // a failed checkpoint write only costs a recomputation on resume
        let _ = write_checkpoint(dir, &stem, &cell, &timing);
    }
    (cell, timing)
}

/// All cells of the configured grid, in (level, rep) order.
pub fn run_cells(
    cfg: &BenchmarkConfig,
    fixed: Option<&Dataset>,
    checkpoint_dir: Option<&Path>,
    workers: usize,
) -> Result<Vec<(CellResult, CellTimings)>> {
    let keys: Vec<(Option<f64>, usize)> =
        cfg.levels().into_iter().flat_map(|r| (0..cfg.reps).map(move |rep| (r, rep))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(|| keys.par_iter().map(|&(r, rep)| run_cell(cfg, r, rep, fixed, checkpoint_dir)).collect()))
}
