//! Compact gradient-boosted trees: exact greedy split finding, second-order
//! leaf weights with L1/L2 regularization, per-tree row and column
//! subsampling, and early stopping on a validation split.

mod model;
mod train;
mod tree;

pub use model::{gain_importance, predict, score, BoostedModel};
pub use train::{train, Trainer};
pub use tree::{Node, Tree};

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

pub const MAX_DEPTH_GRID: [usize; 7] = [3, 4, 5, 6, 8, 10, 12];
pub const LEARNING_RATE_GRID: [f64; 6] = [0.01, 0.03, 0.05, 0.1, 0.2, 0.3];
pub const COLSAMPLE_GRID: [f64; 7] = [0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5];
pub const SUBSAMPLE_GRID: [f64; 6] = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
pub const REG_GRID: [f64; 6] = [0.0, 0.01, 0.1, 1.0, 5.0, 10.0];
pub const MIN_CHILD_WEIGHT_GRID: [f64; 5] = [1.0, 3.0, 5.0, 10.0, 20.0];

pub const DEFAULT_N_ESTIMATORS_MAX: usize = 300;
pub const DEFAULT_EARLY_STOPPING_ROUNDS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub max_depth: usize,
    pub learning_rate: f64,
    pub colsample_bytree: f64,
    pub subsample: f64,
    pub reg_alpha: f64,
    pub reg_lambda: f64,
    pub min_child_weight: f64,
    pub n_estimators_max: usize,
    /// Patience in rounds; 0 disables early stopping.
    pub early_stopping_rounds: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            max_depth: 6,
            learning_rate: 0.1,
            colsample_bytree: 0.3,
            subsample: 0.8,
            reg_alpha: 0.0,
            reg_lambda: 1.0,
            min_child_weight: 1.0,
            n_estimators_max: DEFAULT_N_ESTIMATORS_MAX,
            early_stopping_rounds: DEFAULT_EARLY_STOPPING_ROUNDS,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.max_depth >= 1
            && self.learning_rate > 0.0
            && self.colsample_bytree > 0.0
            && self.colsample_bytree <= 1.0
            && self.subsample > 0.0
            && self.subsample <= 1.0
            && self.reg_alpha >= 0.0
            && self.reg_lambda >= 0.0
            && self.min_child_weight >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::error::invalid(format!("invalid hyperparameters {self:?}")))
        }
    }
}

/// Draw each field uniformly from its search grid.
pub fn sample_hyperparams(rng: &mut Rng) -> Hyperparams {
    Hyperparams {
        max_depth: *MAX_DEPTH_GRID.choose(rng).unwrap(),
        learning_rate: *LEARNING_RATE_GRID.choose(rng).unwrap(),
        colsample_bytree: *COLSAMPLE_GRID.choose(rng).unwrap(),
        subsample: *SUBSAMPLE_GRID.choose(rng).unwrap(),
        reg_alpha: *REG_GRID.choose(rng).unwrap(),
        reg_lambda: *REG_GRID.choose(rng).unwrap(),
        min_child_weight: *MIN_CHILD_WEIGHT_GRID.choose(rng).unwrap(),
        n_estimators_max: DEFAULT_N_ESTIMATORS_MAX,
        early_stopping_rounds: DEFAULT_EARLY_STOPPING_ROUNDS,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn draws_stay_on_grid() {
        let mut r = stream(1);
        for _ in 0..500 {
            let h = sample_hyperparams(&mut r);
            assert!(MAX_DEPTH_GRID.contains(&h.max_depth));
            assert!(LEARNING_RATE_GRID.contains(&h.learning_rate));
            assert!(COLSAMPLE_GRID.contains(&h.colsample_bytree));
            assert!(SUBSAMPLE_GRID.contains(&h.subsample));
            assert!(REG_GRID.contains(&h.reg_alpha));
            assert!(REG_GRID.contains(&h.reg_lambda));
            assert!(MIN_CHILD_WEIGHT_GRID.contains(&h.min_child_weight));
        }
    }

    #[test]
    fn depth_draws_are_uniform() {
        let mut r = stream(2);
        let mut counts = [0usize; 7];
        let n = 10_000;
        for _ in 0..n {
            let d = sample_hyperparams(&mut r).max_depth;
            counts[MAX_DEPTH_GRID.iter().position(|&v| v == d).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 7.0).abs() < 0.02);
        }
    }

    #[test]
    fn replay_is_identical() {
        let a = sample_hyperparams(&mut stream(9));
        let b = sample_hyperparams(&mut stream(9));
        assert_eq!(a, b);
    }
}
