//! Comparison methods. Each produces one global importance vector per
//! repetition from the same train/val/explain/test split.
//!
//! Population-based methods (single best, random, naive top-N, DASH) share
//! one trained [`Population`] and one [`ShapCache`] per repetition, so a
//! model explained for one method is never re-explained for another.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FourWaySplit, Task};
use crate::error::{invalid, Result};
use crate::gbdt::{BoostedModel, Hyperparams, Trainer, COLSAMPLE_GRID};
use crate::matrix::Matrix;
use crate::metrics::rmse;
use crate::pipeline::{model_id, naive_topn_select, random_select, ExplainSet, Population};
use crate::rng::{child, child_named, stream};
use crate::treeshap::{consensus_average, global_importance, ShapMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    #[serde(rename = "single_best_30")]
    SingleBest30,
    SingleBestM,
    LargeSingleModel,
    LsmTuned,
    EnsembleShap,
    StochasticRetrain,
    RandomSelection,
    NaiveTopn,
    DashMaxmin,
}

impl MethodName {
    pub const ALL: [MethodName; 9] = [
        MethodName::SingleBest30,
        MethodName::SingleBestM,
        MethodName::LargeSingleModel,
        MethodName::LsmTuned,
        MethodName::EnsembleShap,
        MethodName::StochasticRetrain,
        MethodName::RandomSelection,
        MethodName::NaiveTopn,
        MethodName::DashMaxmin,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MethodName::SingleBest30 => "single_best_30",
            MethodName::SingleBestM => "single_best_m",
            MethodName::LargeSingleModel => "large_single_model",
            MethodName::LsmTuned => "lsm_tuned",
            MethodName::EnsembleShap => "ensemble_shap",
            MethodName::StochasticRetrain => "stochastic_retrain",
            MethodName::RandomSelection => "random_selection",
            MethodName::NaiveTopn => "naive_topn",
            MethodName::DashMaxmin => "dash_maxmin",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.label() == s)
    }

    /// Whether the method averages attributions of independently trained models.
    pub fn is_independent(self) -> bool {
        matches!(
            self,
            MethodName::StochasticRetrain | MethodName::RandomSelection | MethodName::NaiveTopn | MethodName::DashMaxmin
        )
    }
}

/// Method-specific knobs. Every method reads only its own fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodParams {
    /// Models searched by `single_best_30`.
    pub single_best_m: usize,
    /// Fixed LSM tree count; `None` matches DASH's selected tree count.
    pub lsm_total_trees: Option<usize>,
    pub lsm_learning_rate: f64,
    pub lsm_max_depth: usize,
    pub lsm_depth_grid: Vec<usize>,
    pub lsm_lr_grid: Vec<f64>,
    pub ensemble_trees: usize,
    pub ensemble_colsample: f64,
    pub ensemble_learning_rate: f64,
    pub ensemble_max_depth: usize,
    /// Random configurations searched by stochastic retrain.
    pub sr_draws: usize,
    /// Models averaged by stochastic retrain; `None` uses DASH's K.
    pub sr_k: Option<usize>,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            single_best_m: 30,
            lsm_total_trees: None,
            lsm_learning_rate: 0.01,
            lsm_max_depth: 6,
            lsm_depth_grid: vec![3, 6, 10],
            lsm_lr_grid: vec![0.01, 0.05],
            ensemble_trees: 2000,
            ensemble_colsample: 0.8,
            ensemble_learning_rate: 0.01,
            ensemble_max_depth: 6,
            sr_draws: 100,
            sr_k: None,
        }
    }
}

/// What a method hands back for one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub importance: Vec<f64>,
    /// Test RMSE of the (averaged) prediction; absent for classification.
    pub test_rmse: Option<f64>,
    /// Models whose attributions were averaged.
    pub k: usize,
    pub models_trained: usize,
    pub trees_explained: usize,
    /// Worst local-accuracy error over every attribution matrix produced.
    pub max_local_error: f64,
}

/// Train/val/test matrices and the explain set of one repetition.
pub struct MethodContext {
    pub xt: Matrix,
    pub yt: Vec<f64>,
    pub xv: Matrix,
    pub yv: Vec<f64>,
    pub xs: Matrix,
    pub ys: Vec<f64>,
    pub task: Task,
    pub explain: ExplainSet,
}

impl MethodContext {
    pub fn new(dataset: &Dataset, split: &FourWaySplit, background_size: usize, background_seed: u64) -> Result<Self> {
        let (xt, yt) = dataset.subset(&split.train);
        let (xv, yv) = dataset.subset(&split.val);
        let (xs, ys) = dataset.subset(&split.test);
        let explain = ExplainSet::new(dataset, split, background_size, background_seed)?;
        Ok(Self { xt, yt, xv, yv, xs, ys, task: dataset.task, explain })
    }

    pub fn trainer(&self) -> Result<Trainer<'_>> {
        Trainer::new(&self.xt, &self.yt, self.task)
    }

    /// Explain one model and record its local-accuracy error.
    pub fn explain(&self, model: &BoostedModel, id: impl Into<String>) -> Result<(ShapMatrix, f64)> {
        let m = self.explain.explain(model, id)?;
        let err = m.local_accuracy_error(model, &self.explain.x)?;
        Ok((m, err))
    }

    /// Test RMSE of the mean raw prediction of `models`.
    pub fn ensemble_rmse(&self, models: &[&BoostedModel]) -> Result<Option<f64>> {
        if self.task != Task::Regression || models.is_empty() {
            return Ok(None);
        }
        let mut pred = vec![0.0; self.ys.len()];
        for m in models {
            for (p, v) in pred.iter_mut().zip(m.predict_raw(&self.xs)?) {
                *p += v;
            }
        }
        pred.iter_mut().for_each(|p| *p /= models.len() as f64);
        Ok(Some(rmse(&pred, &self.ys)?))
    }
}

/// Attributions of population members, computed once per repetition.
#[derive(Default)]
pub struct ShapCache {
    matrices: BTreeMap<usize, ShapMatrix>,
    pub max_local_error: f64,
}

impl ShapCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ensure(&mut self, ctx: &MethodContext, pop: &Population, idx: &[usize]) -> Result<()> {
        let mut missing: Vec<usize> = idx.iter().copied().filter(|i| !self.matrices.contains_key(i)).collect();
        missing.sort_unstable();
        missing.dedup();
        let done: Vec<(usize, ShapMatrix, f64)> = missing
            .par_iter()
            .map(|&i| ctx.explain(&pop.models[i], model_id(i)).map(|(m, e)| (i, m, e)))
            .collect::<Result<_>>()?;
        for (i, m, e) in done {
            self.max_local_error = self.max_local_error.max(e);
            self.matrices.insert(i, m);
        }
        Ok(())
    }

    pub fn get(&self, i: usize) -> Option<&ShapMatrix> {
        self.matrices.get(&i)
    }

    pub fn collect(&mut self, ctx: &MethodContext, pop: &Population, idx: &[usize]) -> Result<Vec<ShapMatrix>> {
        self.ensure(ctx, pop, idx)?;
        Ok(idx.iter().map(|i| self.matrices[i].clone()).collect())
    }
}

fn consensus_outcome(ctx: &MethodContext, matrices: &[ShapMatrix], models: &[&BoostedModel], trained: usize, err: f64) -> Result<MethodOutcome> {
    let consensus = consensus_average(matrices)?;
    Ok(MethodOutcome {
        importance: global_importance(&consensus),
        test_rmse: ctx.ensemble_rmse(models)?,
        k: matrices.len(),
        models_trained: trained,
        trees_explained: models.iter().map(|m| m.n_trees()).sum(),
        max_local_error: err,
    })
}

/// Attributions of a chosen subset of the population, averaged.
pub fn population_subset(ctx: &MethodContext, pop: &Population, cache: &mut ShapCache, idx: &[usize]) -> Result<MethodOutcome> {
    if idx.is_empty() {
        return Err(invalid("empty model subset"));
    }
    let matrices = cache.collect(ctx, pop, idx)?;
    let models: Vec<&BoostedModel> = idx.iter().map(|&i| &pop.models[i]).collect();
    consensus_outcome(ctx, &matrices, &models, 0, cache.max_local_error)
}

/// Index of the best-scoring member among the first `m`.
pub fn best_of_prefix(pop: &Population, m: usize) -> Result<usize> {
    let m = m.min(pop.len());
    if m == 0 {
        return Err(invalid("single best needs at least one model"));
    }
    Ok(naive_topn_select(&(0..m).collect::<Vec<_>>(), &pop.scores, 1)[0])
}

/// Attribution of the best of the first `m` random-search models.
pub fn single_best(ctx: &MethodContext, pop: &Population, cache: &mut ShapCache, m: usize) -> Result<MethodOutcome> {
    let best = best_of_prefix(pop, m)?;
    population_subset(ctx, pop, cache, &[best])
}

/// Uniformly random `k` of the filtered models.
pub fn random_selection(ctx: &MethodContext, pop: &Population, cache: &mut ShapCache, filtered: &[usize], k: usize, seed: u64) -> Result<MethodOutcome> {
    population_subset(ctx, pop, cache, &random_select(filtered, k, seed))
}

/// Top `k` filtered models by validation score.
pub fn naive_topn(ctx: &MethodContext, pop: &Population, cache: &mut ShapCache, filtered: &[usize], k: usize) -> Result<MethodOutcome> {
    population_subset(ctx, pop, cache, &naive_topn_select(filtered, &pop.scores, k))
}

fn single_model_outcome(ctx: &MethodContext, model: &BoostedModel, id: &str, trained: usize) -> Result<MethodOutcome> {
    let (m, err) = ctx.explain(model, id)?;
    consensus_outcome(ctx, &[m], &[model], trained, err)
}

fn lsm_hyperparams(params: &MethodParams, total_trees: usize, seed: u64) -> Hyperparams {
    use rand::seq::IndexedRandom;
    let colsample = *COLSAMPLE_GRID.choose(&mut stream(child_named(seed, "colsample"))).unwrap();
    Hyperparams {
        max_depth: params.lsm_max_depth,
        learning_rate: params.lsm_learning_rate,
        colsample_bytree: colsample,
        n_estimators_max: total_trees,
        early_stopping_rounds: 0,
        ..Hyperparams::default()
    }
}

/// One long sequential model with low column sampling. With `tuned`, depth
/// and learning rate are first chosen on the validation split.
pub fn large_single_model(ctx: &MethodContext, params: &MethodParams, total_trees: usize, tuned: bool, seed: u64) -> Result<MethodOutcome> {
    if total_trees == 0 {
        return Err(invalid("total_trees must be positive"));
    }
    let trainer = ctx.trainer()?;
    let mut hp = lsm_hyperparams(params, total_trees, seed);
    let mut trained = 1;
    if tuned {
        let mut best: Option<(f64, usize, f64)> = None;
        for &d in &params.lsm_depth_grid {
            for &lr in &params.lsm_lr_grid {
                let probe = Hyperparams {
                    max_depth: d,
                    learning_rate: lr,
                    n_estimators_max: crate::gbdt::DEFAULT_N_ESTIMATORS_MAX,
                    early_stopping_rounds: crate::gbdt::DEFAULT_EARLY_STOPPING_ROUNDS,
                    ..hp.clone()
                };
                let m = trainer.fit(&ctx.xv, &ctx.yv, &probe, child_named(seed, "tuning"))?;
                trained += 1;
                if best.is_none_or(|(s, _, _)| m.val_score > s) {
                    best = Some((m.val_score, d, lr));
                }
            }
        }
        if let Some((_, d, lr)) = best {
            hp.max_depth = d;
            hp.learning_rate = lr;
        }
    }
    let model = trainer.fit(&ctx.xv, &ctx.yv, &hp, seed)?;
    single_model_outcome(ctx, &model, if tuned { "lsm-tuned" } else { "lsm" }, trained)
}

/// One wide ensemble explained as a whole.
pub fn ensemble_shap(ctx: &MethodContext, params: &MethodParams, seed: u64) -> Result<MethodOutcome> {
    let hp = Hyperparams {
        max_depth: params.ensemble_max_depth,
        learning_rate: params.ensemble_learning_rate,
        colsample_bytree: params.ensemble_colsample,
        n_estimators_max: params.ensemble_trees,
        early_stopping_rounds: 0,
        ..Hyperparams::default()
    };
    let model = ctx.trainer()?.fit(&ctx.xv, &ctx.yv, &hp, seed)?;
    single_model_outcome(ctx, &model, "ensemble-shap", 1)
}

/// Best configuration among `draws` random draws, retrained with `k` seeds.
///
/// Draws are the first `draws` population members when the population is
/// large enough (they are random draws from the same grid); extra draws
/// continue the same seed sequence.
pub fn stochastic_retrain(
    ctx: &MethodContext,
    pop: &Population,
    plan: impl Fn(usize) -> (Hyperparams, u64) + Sync,
    draws: usize,
    k: usize,
    seed: u64,
) -> Result<MethodOutcome> {
    if k == 0 || draws == 0 {
        return Err(invalid("stochastic retrain needs k >= 1 and draws >= 1"));
    }
    let trainer = ctx.trainer()?;
    let reuse = draws.min(pop.len());
    let extra: Vec<(usize, f64)> = (reuse..draws)
        .into_par_iter()
        .map(|i| {
            let (hp, s) = plan(i);
            trainer.fit(&ctx.xv, &ctx.yv, &hp, s).map(|m| (i, m.val_score))
        })
        .collect::<Result<_>>()?;
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (i, s) in (0..reuse).map(|i| (i, pop.scores[i])).chain(extra.iter().copied()) {
        if s > best.1 {
            best = (i, s);
        }
    }
    let hp = plan(best.0).0;
    let models: Vec<BoostedModel> = (0..k)
        .into_par_iter()
        .map(|j| trainer.fit(&ctx.xv, &ctx.yv, &hp, child(seed, j as u64)))
        .collect::<Result<_>>()?;
    let explained: Vec<(ShapMatrix, f64)> = models
        .par_iter()
        .enumerate()
        .map(|(j, m)| ctx.explain(m, format!("retrain-{j:05}")))
        .collect::<Result<_>>()?;
    let err = explained.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let matrices: Vec<ShapMatrix> = explained.into_iter().map(|(m, _)| m).collect();
    let refs: Vec<&BoostedModel> = models.iter().collect();
    consensus_outcome(ctx, &matrices, &refs, k + draws - reuse, err)
}
