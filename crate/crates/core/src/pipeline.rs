//! The DASH aggregation pipeline: population generation, performance
//! filtering, diversity selection, consensus attribution and diagnostics.
//!
//! [`run_dash`] trains its own population; [`fit_from_attributions`] runs
//! the same filter/select/consensus/diagnose stages on attribution matrices
//! produced by any explainer.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FourWaySplit};
use crate::diagnostics::{assign_quadrants, compute_fsi, FsiReport, QuadrantAssignment};
use crate::error::{invalid, mismatch, Error, Result};
use crate::gbdt::{gain_importance, sample_hyperparams, BoostedModel, Hyperparams, Trainer};
use crate::matrix::Matrix;
use crate::metrics::spearman;
use crate::rng::{child, child_named, sample_indices, stream};
use crate::treeshap::{consensus_average, global_importance, interventional_shap, ShapMatrix};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const DEDUP_SPEARMAN_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonMode {
    Absolute,
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Maxmin,
    Dedup,
    Random,
    NaiveTopn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub population_size: usize,
    pub k_max: usize,
    pub epsilon: f64,
    pub epsilon_mode: EpsilonMode,
    pub diversity_threshold: f64,
    pub selection: Selection,
    pub background_size: usize,
    pub master_seed: u64,
    /// Recorded for completeness; no stage reads it.
    pub cluster_threshold: f64,
    pub n_estimators_max: usize,
    pub early_stopping_rounds: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            population_size: 200,
            k_max: 30,
            epsilon: 0.08,
            epsilon_mode: EpsilonMode::Absolute,
            diversity_threshold: 0.05,
            selection: Selection::Maxmin,
            background_size: 100,
            master_seed: 0,
            cluster_threshold: 0.3,
            n_estimators_max: crate::gbdt::DEFAULT_N_ESTIMATORS_MAX,
            early_stopping_rounds: crate::gbdt::DEFAULT_EARLY_STOPPING_ROUNDS,
        }
    }
}

impl PipelineConfig {
    /// Relative epsilon of 0.05, used for ingested real-world data.
    pub fn real_data_default() -> Self {
        Self { epsilon: 0.05, epsilon_mode: EpsilonMode::Relative, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(invalid(format!("unsupported config schema version {}", self.schema_version)));
        }
        if self.population_size == 0 || self.k_max == 0 || self.background_size == 0 {
            return Err(invalid("population_size, k_max and background_size must be positive"));
        }
        if !(self.epsilon >= 0.0) || !(self.diversity_threshold >= 0.0) {
            return Err(invalid("epsilon and diversity_threshold must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub models: Vec<BoostedModel>,
    pub scores: Vec<f64>,
    pub gain_vectors: Vec<Vec<f64>>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// The first `m` members; identical to a population generated with size `m`.
    pub fn prefix(&self, m: usize) -> Population {
        let m = m.min(self.len());
        Population {
            models: self.models[..m].to_vec(),
            scores: self.scores[..m].to_vec(),
            gain_vectors: self.gain_vectors[..m].to_vec(),
        }
    }
}

pub fn model_id(index: usize) -> String {
    format!("model-{index:05}")
}

/// Hyperparameters and training seed of population member `i`.
pub fn member_plan(config: &PipelineConfig, i: usize) -> (Hyperparams, u64) {
    let seed = child(config.master_seed, i as u64);
    let mut hp = sample_hyperparams(&mut stream(child_named(seed, "hyperparams")));
    hp.n_estimators_max = config.n_estimators_max;
    hp.early_stopping_rounds = config.early_stopping_rounds;
    (hp, seed)
}

/// Train `population_size` models with independently sampled hyperparameters.
pub fn generate_population(dataset: &Dataset, split: &FourWaySplit, config: &PipelineConfig) -> Result<Population> {
    config.validate()?;
    let (xt, yt) = dataset.subset(&split.train);
    let (xv, yv) = dataset.subset(&split.val);
    let trainer = Trainer::new(&xt, &yt, dataset.task)?;
    let models: Vec<BoostedModel> = (0..config.population_size)
        .into_par_iter()
        .map(|i| {
            let (hp, seed) = member_plan(config, i);
            trainer
                .fit(&xv, &yv, &hp, seed)
                .map_err(|e| Error::PopulationMember { index: i, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    let scores = models.iter().map(|m| m.val_score).collect();
    let gain_vectors = models.iter().map(gain_importance).collect();
    Ok(Population { models, scores, gain_vectors })
}

/// Indices whose score is within `epsilon` of the best (absolute or relative).
pub fn filter_performance(scores: &[f64], epsilon: f64, mode: EpsilonMode) -> Result<Vec<usize>> {
    if scores.is_empty() {
        return Err(invalid("empty population"));
    }
    if !(epsilon >= 0.0) {
        return Err(invalid("epsilon must be non-negative"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(invalid("non-finite score"));
    }
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = match mode {
        EpsilonMode::Absolute => epsilon,
        EpsilonMode::Relative => epsilon * best.abs(),
    };
    Ok((0..scores.len()).filter(|&i| (scores[i] - best).abs() <= tol).collect())
}

fn best_by_score(candidates: &[usize], scores: &[f64]) -> usize {
    let mut best = candidates[0];
    for &c in candidates {
        if scores[c] > scores[best] || (scores[c] == scores[best] && c < best) {
            best = c;
        }
    }
    best
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0).then(|| v.iter().map(|x| x / norm).collect())
}

/// Cosine distance; a zero vector is at distance 1 from everything.
fn cosine_distance(a: &Option<Vec<f64>>, b: &Option<Vec<f64>>) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) => (1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()).clamp(0.0, 2.0),
        _ => 1.0,
    }
}

/// Greedy max-min cosine-dissimilarity selection, seeded by the top scorer.
pub fn maxmin_select(vectors: &[Vec<f64>], candidates: &[usize], scores: &[f64], k_max: usize, delta: f64) -> Vec<usize> {
    if candidates.is_empty() || k_max == 0 {
        return vec![];
    }
    let mut cands: Vec<usize> = candidates.to_vec();
    cands.sort_unstable();
    cands.dedup();
    let unit: Vec<Option<Vec<f64>>> = cands.iter().map(|&c| normalized(&vectors[c])).collect();
    let first = best_by_score(&cands, scores);
    let first_pos = cands.iter().position(|&c| c == first).unwrap();
    let mut selected = vec![first];
    let mut taken = vec![false; cands.len()];
    taken[first_pos] = true;
    let mut min_dist: Vec<f64> = unit.iter().map(|u| cosine_distance(u, &unit[first_pos])).collect();
    while selected.len() < k_max {
        let mut best: Option<(usize, f64)> = None;
        for (pos, &d) in min_dist.iter().enumerate() {
            if !taken[pos] && best.is_none_or(|(_, bd)| d > bd) {
                best = Some((pos, d));
            }
        }
        let Some((pos, d)) = best else { break };
        if d < delta {
            break;
        }
        taken[pos] = true;
        selected.push(cands[pos]);
        for (q, md) in min_dist.iter_mut().enumerate() {
            *md = md.min(cosine_distance(&unit[q], &unit[pos]));
        }
    }
    selected
}

/// Drop the lower scorer of every pair whose importance rankings correlate
/// above 0.95, visiting candidates in descending score order.
pub fn dedup_select(vectors: &[Vec<f64>], candidates: &[usize], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = candidates.to_vec();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.dedup();
    let mut kept: Vec<usize> = Vec::new();
    for c in order {
        let dup = kept.iter().any(|&k| match spearman(&vectors[c], &vectors[k]) {
            Ok(r) => r > DEDUP_SPEARMAN_THRESHOLD,
            Err(_) => vectors[c] == vectors[k],
        });
        if !dup {
            kept.push(c);
        }
    }
    kept
}

/// Uniform `k`-subset of the candidates, in ascending order.
pub fn random_select(candidates: &[usize], k: usize, seed: u64) -> Vec<usize> {
    let mut pick: Vec<usize> = sample_indices(&mut stream(seed), candidates.len(), k).into_iter().map(|i| candidates[i]).collect();
    pick.sort_unstable();
    pick
}

/// Top `k` candidates by score, ties to the lower index.
pub fn naive_topn_select(candidates: &[usize], scores: &[f64], k: usize) -> Vec<usize> {
    let mut order = candidates.to_vec();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Run the configured selection strategy over `candidates`.
pub fn select(vectors: &[Vec<f64>], candidates: &[usize], scores: &[f64], config: &PipelineConfig) -> Vec<usize> {
    match config.selection {
        Selection::Maxmin => maxmin_select(vectors, candidates, scores, config.k_max, config.diversity_threshold),
        Selection::Dedup => {
            let mut kept = dedup_select(vectors, candidates, scores);
            kept.truncate(config.k_max);
            kept
        }
        Selection::Random => random_select(candidates, config.k_max, child_named(config.master_seed, "random-selection")),
        Selection::NaiveTopn => naive_topn_select(candidates, scores, config.k_max),
    }
}

/// The rows to explain and the background they are explained against.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplainSet {
    pub x: Matrix,
    pub background: Matrix,
    /// Dataset row indices of the background rows.
    pub background_ids: Vec<usize>,
}

impl ExplainSet {
    /// Explain split rows, with `background_size` of them (all, if fewer)
    /// drawn without replacement as background.
    pub fn new(dataset: &Dataset, split: &FourWaySplit, background_size: usize, seed: u64) -> Result<Self> {
        if split.explain.is_empty() {
            return Err(invalid("explain split is empty"));
        }
        let (x, _) = dataset.subset(&split.explain);
        let mut pos = sample_indices(&mut stream(seed), split.explain.len(), background_size);
        pos.sort_unstable();
        let background = x.select_rows(&pos);
        let background_ids = pos.iter().map(|&p| split.explain[p]).collect();
        Ok(Self { x, background, background_ids })
    }

    pub fn explain(&self, model: &BoostedModel, id: impl Into<String>) -> Result<ShapMatrix> {
        Ok(interventional_shap(model, &self.x, &self.background)?.with_ids(id, self.background_ids.clone()))
    }
}

pub fn background_seed(master: u64) -> u64 {
    child_named(master, "background")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashResult {
    pub consensus: ShapMatrix,
    /// Attributions of the selected models, aligned with `selected`.
    pub per_model: Vec<ShapMatrix>,
    pub selected: Vec<usize>,
    pub selected_scores: Vec<f64>,
    pub filtered: Vec<usize>,
    pub fsi: FsiReport,
    pub quadrants: QuadrantAssignment,
    pub global_importance: Vec<f64>,
}

impl DashResult {
    pub fn k_eff(&self) -> usize {
        self.selected.len()
    }
}

/// Consensus plus diagnostics over already-selected attribution matrices.
pub fn aggregate(
    per_model: Vec<ShapMatrix>,
    selected: Vec<usize>,
    selected_scores: Vec<f64>,
    filtered: Vec<usize>,
) -> Result<DashResult> {
    let consensus = consensus_average(&per_model)?;
    let importance = global_importance(&consensus);
    let fsi = compute_fsi(&per_model, &importance)?;
    let quadrants = assign_quadrants(&importance, &fsi.fsi)?;
    Ok(DashResult { consensus, per_model, selected, selected_scores, filtered, fsi, quadrants, global_importance: importance })
}

/// Filter and select on a trained population, then explain the chosen models.
pub fn dash_from_population(pop: &Population, explain: &ExplainSet, config: &PipelineConfig) -> Result<DashResult> {
    let filtered = filter_performance(&pop.scores, config.epsilon, config.epsilon_mode)?;
    let selected = select(&pop.gain_vectors, &filtered, &pop.scores, config);
    let per_model = selected
        .par_iter()
        .map(|&i| explain.explain(&pop.models[i], model_id(i)))
        .collect::<Result<Vec<_>>>()?;
    let scores = selected.iter().map(|&i| pop.scores[i]).collect();
    aggregate(per_model, selected, scores, filtered)
}

/// The full pipeline on one dataset and split.
pub fn run_dash(dataset: &Dataset, split: &FourWaySplit, config: &PipelineConfig) -> Result<DashResult> {
    let pop = generate_population(dataset, split, config)?;
    let explain = ExplainSet::new(dataset, split, config.background_size, background_seed(config.master_seed))?;
    dash_from_population(&pop, &explain, config)
}

/// Filter, select, average and diagnose attribution matrices from any source.
/// Diversity is measured on each matrix's mean-absolute importance.
pub fn fit_from_attributions(matrices: &[ShapMatrix], scores: &[f64], config: &PipelineConfig) -> Result<DashResult> {
    let first = matrices.first().ok_or_else(|| invalid("no attribution matrices"))?;
    if matrices.len() != scores.len() {
        return Err(mismatch("scores not aligned with matrices"));
    }
    if matrices.iter().any(|m| m.rows() != first.rows() || m.cols() != first.cols()) {
        return Err(mismatch("attribution matrices differ in shape"));
    }
    let ids: BTreeSet<&str> = matrices.iter().map(|m| m.model_id.as_str()).collect();
    if ids.len() != matrices.len() {
        return Err(invalid("attribution matrices need distinct model ids"));
    }
    let vectors: Vec<Vec<f64>> = matrices.iter().map(global_importance).collect();
    let filtered = filter_performance(scores, config.epsilon, config.epsilon_mode)?;
    let selected = select(&vectors, &filtered, scores, config);
    let per_model = selected.iter().map(|&i| matrices[i].clone()).collect();
    let sel_scores = selected.iter().map(|&i| scores[i]).collect();
    aggregate(per_model, selected, sel_scores, filtered)
}
