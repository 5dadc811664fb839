//! Evaluation metrics: rank correlation, stability, agreement with ground
//! truth, within-group equity, RMSE/AUC, and the two-axis variance
//! decomposition.

use serde::{Deserialize, Serialize};

use crate::data::GroupStructure;
use crate::error::{invalid, mismatch, undefined, Result};
use crate::rng;

/// Ranks starting at 1 with ties replaced by their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(mismatch("spearman inputs differ in length"));
    }
    if a.len() < 2 {
        return Err(invalid("spearman needs at least 2 values"));
    }
    pearson(&average_ranks(a), &average_ranks(b)).ok_or_else(|| undefined("zero rank variance"))
}

/// Mean pairwise Spearman correlation across repetitions.
pub fn stability(vectors: &[Vec<f64>]) -> Result<f64> {
    let r = vectors.len();
    if r < 2 {
        return Err(invalid("stability needs at least 2 repetitions"));
    }
    let mut sum = 0.0;
    for i in 0..r {
        for j in i + 1..r {
            sum += spearman(&vectors[i], &vectors[j])?;
        }
    }
    Ok(2.0 * sum / (r * (r - 1)) as f64)
}

/// Per-repetition contribution: mean Spearman of repetition `i` against all others.
pub fn stability_contributions(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let r = vectors.len();
    if r < 2 {
        return Err(invalid("stability needs at least 2 repetitions"));
    }
    let mut m = vec![0.0; r];
    for i in 0..r {
        for j in i + 1..r {
            let s = spearman(&vectors[i], &vectors[j])?;
            m[i] += s;
            m[j] += s;
        }
    }
    Ok(m.into_iter().map(|s| s / (r - 1) as f64).collect())
}

pub fn accuracy(importance: &[f64], truth: &[f64]) -> Result<f64> {
    spearman(importance, truth)
}

/// Mean within-group coefficient of variation (population SD) over groups
/// whose mean importance is at least `1e-6` in magnitude.
pub fn equity_cv(importance: &[f64], groups: &GroupStructure) -> Result<f64> {
    groups.validate()?;
    if importance.len() != groups.n_features() {
        return Err(mismatch("importance length differs from group structure"));
    }
    let mut total = 0.0;
    let mut used = 0usize;
    for g in &groups.groups {
        let vals: Vec<f64> = g.iter().map(|&j| importance[j]).collect();
        let n = vals.len() as f64;
        let mu = vals.iter().sum::<f64>() / n;
        if mu.abs() < 1e-6 {
            continue;
        }
        let sd = (vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
        total += sd / mu.abs();
        used += 1;
    }
    if used == 0 {
        return Err(undefined("every group has near-zero mean importance"));
    }
    Ok(total / used as f64)
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(mismatch("rmse inputs differ in length"));
    }
    if predictions.is_empty() {
        return Err(invalid("rmse of empty input"));
    }
    let mse = predictions.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / predictions.len() as f64;
    Ok(mse.sqrt())
}

/// Area under the ROC curve via the Mann-Whitney statistic (ties averaged).
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(mismatch("auc inputs differ in length"));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(undefined("AUC needs both classes"));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y == 1.0).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    /// Data seed fixed, model seeds vary: isolates model-selection variance.
    pub fixed_data_stability: f64,
    /// Model seed fixed, data seeds vary.
    pub fixed_model_stability: f64,
}

impl VarianceDecomposition {
    /// `1 - stability` with data held fixed.
    pub fn model_selection_instability(&self) -> f64 {
        1.0 - self.fixed_data_stability
    }

    /// Directional share of total instability attributable to model selection.
    pub fn model_selection_share(&self, total_stability: f64) -> Option<f64> {
        let total = 1.0 - total_stability;
        (total > 0.0).then(|| self.model_selection_instability() / total)
    }
}

/// Run `method(data_seed, model_seed)` `reps` times along each axis:
/// data fixed at `child(data_master, 0)` with model seeds `child(model_master, r)`,
/// then model fixed at `child(model_master, 0)` with data seeds `child(data_master, r)`.
pub fn variance_decomposition<F>(data_master: u64, model_master: u64, reps: usize, mut method: F) -> Result<VarianceDecomposition>
where
    F: FnMut(u64, u64) -> Result<Vec<f64>>,
{
    if reps < 2 {
        return Err(invalid("variance decomposition needs at least 2 repetitions"));
    }
    let d0 = rng::child(data_master, 0);
    let m0 = rng::child(model_master, 0);
    let fixed_data: Vec<Vec<f64>> =
        (0..reps).map(|r| method(d0, rng::child(model_master, r as u64))).collect::<Result<_>>()?;
    let fixed_model: Vec<Vec<f64>> =
        (0..reps).map(|r| method(rng::child(data_master, r as u64), m0)).collect::<Result<_>>()?;
    Ok(VarianceDecomposition {
        fixed_data_stability: stability(&fixed_data)?,
        fixed_model_stability: stability(&fixed_model)?,
    })
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn distinct_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-100.0f64..100.0, n)
    }

    proptest! {
        #[test]
        fn spearman_monotone_invariance(a in distinct_vec(12), b in distinct_vec(12)) {
            if let Ok(s) = spearman(&a, &b) {
                let ta: Vec<f64> = a.iter().map(|x| x.exp().min(1e300) + 3.0 * x).collect();
                let tb: Vec<f64> = b.iter().map(|x| x * 7.0 - 1.0).collect();
                prop_assert!((spearman(&ta, &tb).unwrap() - s).abs() < 1e-12);
            }
        }

        #[test]
        fn stability_bounded_and_order_free(vs in proptest::collection::vec(distinct_vec(6), 2..6)) {
            if let Ok(s) = stability(&vs) {
                prop_assert!((-1.0..=1.0).contains(&s));
                let mut rev = vs.clone();
                rev.reverse();
                prop_assert!((stability(&rev).unwrap() - s).abs() < 1e-12);
            }
        }

        #[test]
        fn equity_scale_invariant(v in proptest::collection::vec(0.01f64..10.0, 10), c in 0.1f64..100.0) {
            let g = GroupStructure::equal_blocks(2, 5, 0.5).unwrap();
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let a = equity_cv(&v, &g).unwrap();
            prop_assert!((equity_cv(&scaled, &g).unwrap() - a).abs() < 1e-9 * (1.0 + a));
        }

        #[test]
        fn rmse_symmetric(p in proptest::collection::vec(-10.0f64..10.0, 1..20)) {
            let t: Vec<f64> = p.iter().map(|x| x * 0.5 + 1.0).collect();
            prop_assert_eq!(rmse(&p, &t).unwrap(), rmse(&t, &p).unwrap());
            prop_assert!(rmse(&p, &t).unwrap() >= 0.0);
            prop_assert_eq!(rmse(&p, &p).unwrap(), 0.0);
        }
    }
}
