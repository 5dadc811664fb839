//! Paired-comparison statistics: Wilcoxon signed-rank, Holm step-down
//! adjustment, Cohen's d, and BCa bootstrap intervals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, undefined, Result};
use crate::metrics::average_ranks;
use crate::rng::{child, sample_indices_with_replacement, stream};

/// Largest sample size for which the exact null distribution is used.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub comparison: String,
    pub metric: String,
    pub rho: Option<f64>,
    pub n_pairs: usize,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub effect_d: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WilcoxonMethod {
    /// Exact for `n <= EXACT_MAX_N`, normal approximation above.
    Auto,
    Exact,
    Normal,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Two-sided Wilcoxon signed-rank p-value. Zero differences are dropped.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<f64> {
    wilcoxon_signed_rank_with(diffs, WilcoxonMethod::Auto)
}

pub fn wilcoxon_signed_rank_with(diffs: &[f64], method: WilcoxonMethod) -> Result<f64> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(invalid("non-finite difference"));
    }
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nz.is_empty() {
        return Err(undefined("all differences are zero"));
    }
    if nz.len() < 5 {
        return Err(invalid(format!("need at least 5 nonzero differences, got {}", nz.len())));
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let exact = match method {
        WilcoxonMethod::Auto => nz.len() <= EXACT_MAX_N,
        WilcoxonMethod::Exact => true,
        WilcoxonMethod::Normal => false,
    };
    if exact {
        Ok(exact_p(&nz, &ranks))
    } else {
        Ok(normal_p(&nz, &ranks))
    }
}

/// Exact null distribution over doubled (integer) midranks.
fn exact_p(d: &[f64], ranks: &[f64]) -> f64 {
    let twice: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = twice.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &t in &twice {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + t] += counts[s];
            }
        }
        reach += t;
    }
    let w: usize = d.iter().zip(&twice).filter(|(v, _)| **v > 0.0).map(|(_, t)| t).sum();
    let all: f64 = counts.iter().sum();
    let lower: f64 = counts[..=w].iter().sum::<f64>() / all;
    let upper: f64 = counts[w..].iter().sum::<f64>() / all;
    (2.0 * lower.min(upper)).min(1.0)
}

/// Normal approximation with tie and continuity correction.
fn normal_p(d: &[f64], ranks: &[f64]) -> f64 {
    let n = d.len() as f64;
    let w: f64 = d.iter().zip(ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie += t * t * t - t;
        i = j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    (2.0 * (1.0 - std_normal().cdf(z))).min(1.0)
}

/// Holm step-down adjusted p-values, returned in input order.
pub fn holm_bonferroni(p_values: &[f64]) -> Result<Vec<f64>> {
    if p_values.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
        return Err(invalid("p-values must lie in (0, 1]"));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (j, &i) in order.iter().enumerate() {
        let adj = ((m - j) as f64 * p_values[i]).min(1.0);
        running = running.max(adj);
        out[i] = running;
    }
    Ok(out)
}

/// Mean over sample SD of paired differences.
pub fn cohens_d(diffs: &[f64]) -> Result<f64> {
    let n = diffs.len();
    if n < 2 {
        return Err(invalid("need at least 2 differences"));
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Err(undefined("differences have zero standard deviation"));
    }
    Ok(mean / var.sqrt())
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bias-corrected and accelerated bootstrap interval for `statistic`.
///
/// Resample `b` draws indices from `stream(child(seed, b))`, so results do
/// not depend on thread scheduling.
pub fn bca_bootstrap<T, F>(samples: &[T], statistic: F, n_boot: usize, level: f64, seed: u64) -> Result<(f64, f64)>
where
    T: Clone + Sync,
    F: Fn(&[T]) -> Result<f64> + Sync,
{
    let n = samples.len();
    if n < 3 {
        return Err(invalid("bootstrap needs at least 3 samples"));
    }
    if n_boot < 1000 {
        return Err(invalid("n_boot must be at least 1000"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid("level must lie in (0, 1)"));
    }
    let point = statistic(samples)?;
    let mut boot: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(child(seed, b as u64));
            let idx = sample_indices_with_replacement(&mut rng, n, n);
            let resample: Vec<T> = idx.iter().map(|&i| samples[i].clone()).collect();
            statistic(&resample)
        })
        .collect::<Result<_>>()?;
    boot.sort_by(f64::total_cmp);
    if boot[0] == boot[n_boot - 1] {
        return Err(undefined("degenerate bootstrap distribution"));
    }

    let norm = std_normal();
    let below = boot.iter().filter(|v| **v < point).count() as f64;
    let equal = boot.iter().filter(|v| **v == point).count() as f64;
    let frac = ((below + 0.5 * equal) / n_boot as f64).clamp(0.5 / n_boot as f64, 1.0 - 0.5 / n_boot as f64);
    let z0 = norm.inverse_cdf(frac);

    let jack: Vec<f64> = (0..n)
        .map(|i| {
            let rest: Vec<T> = samples.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, s)| s.clone()).collect();
            statistic(&rest)
        })
        .collect::<Result<_>>()?;
    let jm = jack.iter().sum::<f64>() / n as f64;
    let num: f64 = jack.iter().map(|j| (jm - j).powi(3)).sum();
    let den: f64 = jack.iter().map(|j| (jm - j).powi(2)).sum();
    let a = if den > 0.0 { num / (6.0 * den.powf(1.5)) } else { 0.0 };

    let alpha = (1.0 - level) / 2.0;
    let adjust = |q: f64| {
        let z = norm.inverse_cdf(q);
        norm.cdf(z0 + (z0 + z) / (1.0 - a * (z0 + z)))
    };
    Ok((quantile(&boot, adjust(alpha)), quantile(&boot, adjust(1.0 - alpha))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn wilcoxon_all_positive_is_extreme() {
        let d: Vec<f64> = (1..=20).map(|i| i as f64 * 0.1).collect();
        let p = wilcoxon_signed_rank(&d).unwrap();
        assert!((p - 2.0 / 2f64.powi(20)).abs() < 1e-18);
        let neg: Vec<f64> = d.iter().map(|v| -v).collect();
        assert_eq!(wilcoxon_signed_rank(&neg).unwrap(), p);
    }

    #[test]
    fn wilcoxon_antisymmetric_is_central() {
        let d: Vec<f64> = (1..=10).flat_map(|i| [i as f64, -(i as f64)]).collect();
        assert!(wilcoxon_signed_rank(&d).unwrap() > 0.99);
    }

    #[test]
    fn wilcoxon_errors() {
        assert!(wilcoxon_signed_rank(&[0.0; 10]).is_err());
        assert!(wilcoxon_signed_rank(&[1.0, 2.0, 0.0, 0.0, 0.0, 3.0]).is_err());
    }

    #[test]
    fn wilcoxon_small_exact_by_enumeration() {
        let d = [1.5, -0.5, 2.0, 2.0, -3.0, 0.7, 4.0];
        let abs: Vec<f64> = d.iter().map(|v: &f64| v.abs()).collect();
        let r = average_ranks(&abs);
        let w: f64 = d.iter().zip(&r).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
        let (mut le, mut ge) = (0u32, 0u32);
        for mask in 0u32..(1 << d.len()) {
            let s: f64 = (0..d.len()).filter(|i| mask >> i & 1 == 1).map(|i| r[i]).sum();
            if s <= w + 1e-12 {
                le += 1;
            }
            if s >= w - 1e-12 {
                ge += 1;
            }
        }
        let expect = (2.0 * le.min(ge) as f64 / 128.0).min(1.0);
        assert!((wilcoxon_signed_rank(&d).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn holm_examples() {
        let adj = holm_bonferroni(&[0.01, 0.04, 0.03]).unwrap();
        for (a, e) in adj.iter().zip([0.03, 0.06, 0.06]) {
            assert!((a - e).abs() < 1e-15);
        }
        assert_eq!(holm_bonferroni(&[0.2]).unwrap(), vec![0.2]);
        assert_eq!(holm_bonferroni(&[1.0; 4]).unwrap(), vec![1.0; 4]);
        assert!(holm_bonferroni(&[0.0]).is_err());
    }

    #[test]
    fn cohens_d_examples() {
        assert!(cohens_d(&[1.0, 1.0, 1.0]).is_err());
        assert_eq!(cohens_d(&[1.0, -1.0]).unwrap(), 0.0);
        assert!((cohens_d(&[2.0, 4.0, 6.0]).unwrap() - 2.0).abs() < 1e-15);
    }

    fn mean(v: &[f64]) -> Result<f64> {
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    }

    #[test]
    fn bca_rejects_degenerate() {
        assert!(bca_bootstrap(&[1.0; 10], mean, 1000, 0.95, 1).is_err());
        assert!(bca_bootstrap(&[1.0, 2.0, 3.0], mean, 999, 0.95, 1).is_err());
    }

    #[test]
    fn bca_is_deterministic_and_brackets_point() {
        let mut rng = stream(5);
        let xs: Vec<f64> = (0..40).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a = bca_bootstrap(&xs, mean, 1000, 0.95, 9).unwrap();
        let b = bca_bootstrap(&xs, mean, 1000, 0.95, 9).unwrap();
        assert_eq!(a, b);
        let m = mean(&xs).unwrap();
        assert!(a.0 <= m && m <= a.1);
    }
}
