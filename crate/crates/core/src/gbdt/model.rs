use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{mismatch, Error, Result};
use crate::hexfloat::Hex;
use crate::matrix::Matrix;
use crate::metrics;

use super::tree::{Node, NodeRepr, Tree};
use super::Hyperparams;

pub const MODEL_FORMAT: &str = "dash-gbdt";
pub const MODEL_VERSION: u32 = 1;

/// Additive tree ensemble: `raw(x) = base_score + learning_rate * sum_t tree_t(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostedModel {
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    pub base_score: f64,
    pub task: Task,
    pub n_features: usize,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    /// Number of trees kept (the best validation round).
    pub best_iteration: usize,
    pub val_score: f64,
}

impl BoostedModel {
    #[inline]
    pub fn predict_raw_row(&self, x: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.eval(x)).sum();
        self.base_score + self.learning_rate * s
    }

    pub fn predict_raw(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_cols(x)?;
        Ok(x.iter_rows().map(|r| self.predict_raw_row(r)).collect())
    }

    pub(crate) fn check_cols(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.n_features {
            return Err(mismatch(format!("model expects {} columns, got {}", self.n_features, x.cols())));
        }
        Ok(())
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            task: self.task,
            n_features: self.n_features,
            learning_rate: Hex(self.learning_rate),
            base_score: Hex(self.base_score),
            seed: self.seed,
            best_iteration: self.best_iteration,
            val_score: Hex(self.val_score),
            hyperparams: self.hyperparams.clone(),
            trees: self.trees.iter().map(Tree::to_repr).collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(s)?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model format {} v{}", doc.format, doc.version)));
        }
        Ok(Self {
            trees: doc.trees.iter().map(Tree::from_repr).collect(),
            learning_rate: doc.learning_rate.0,
            base_score: doc.base_score.0,
            task: doc.task,
            n_features: doc.n_features,
            hyperparams: doc.hyperparams,
            seed: doc.seed,
            best_iteration: doc.best_iteration,
            val_score: doc.val_score.0,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    task: Task,
    n_features: usize,
    learning_rate: Hex,
    base_score: Hex,
    seed: u64,
    best_iteration: usize,
    val_score: Hex,
    hyperparams: Hyperparams,
    trees: Vec<NodeRepr>,
}

/// Raw score for regression, probability for classification.
pub fn predict(model: &BoostedModel, x: &Matrix) -> Result<Vec<f64>> {
    let raw = model.predict_raw(x)?;
    Ok(match model.task {
        Task::Regression => raw,
        Task::BinaryClassification => raw.into_iter().map(sigmoid).collect(),
    })
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub(crate) fn score_raw(task: Task, raw: &[f64], y: &[f64]) -> Result<f64> {
    match task {
        Task::Regression => Ok(-metrics::rmse(raw, y)?),
        // AUC is rank-based, so raw margins rank identically to probabilities
        Task::BinaryClassification => metrics::auc(raw, y),
    }
}

/// Negative RMSE (regression) or AUC (classification).
pub fn score(model: &BoostedModel, x: &Matrix, y: &[f64]) -> Result<f64> {
    if x.rows() != y.len() {
        return Err(mismatch("features and target differ in length"));
    }
    if y.is_empty() {
        return Err(crate::error::invalid("cannot score an empty split"));
    }
    score_raw(model.task, &model.predict_raw(x)?, y)
}

/// Split gain summed per feature, normalized to sum 1 (all zero without splits).
pub fn gain_importance(model: &BoostedModel) -> Vec<f64> {
    let mut v = vec![0.0; model.n_features];
    for t in &model.trees {
        for n in &t.nodes {
            if let Node::Internal { feature, gain, .. } = *n {
                v[feature] += gain;
            }
        }
    }
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    }
    v
}
