//! Datasets, deterministic four-way splits and the synthetic
//! correlated-group data-generating processes.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    BinaryClassification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    pub target: Vec<f64>,
    pub task: Task,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix, target: Vec<f64>, task: Task, feature_names: Vec<String>) -> Result<Self> {
        let ds = Self { features, target, task, feature_names };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target.len() != self.features.rows() {
            return Err(mismatch(format!(
                "target has {} rows, features have {}",
                self.target.len(),
                self.features.rows()
            )));
        }
        if self.feature_names.len() != self.features.cols() {
            return Err(mismatch("feature_names length differs from column count"));
        }
        if self.features.as_slice().iter().chain(&self.target).any(|v| !v.is_finite()) {
            return Err(invalid("dataset contains non-finite values"));
        }
        if self.task == Task::BinaryClassification && self.target.iter().any(|&t| t != 0.0 && t != 1.0) {
            return Err(invalid("binary-classification targets must be 0 or 1"));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    /// Features and target restricted to `idx`.
    pub fn subset(&self, idx: &[usize]) -> (Matrix, Vec<f64>) {
        (self.features.select_rows(idx), idx.iter().map(|&i| self.target[i]).collect())
    }
}

/// Partition of the feature indices into correlated groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStructure {
    pub groups: Vec<Vec<usize>>,
    pub within_rho: f64,
}

impl GroupStructure {
    pub fn new(groups: Vec<Vec<usize>>, within_rho: f64) -> Result<Self> {
        let gs = Self { groups, within_rho };
        gs.validate()?;
        Ok(gs)
    }

    /// `n_groups` consecutive blocks of `size` features each.
    pub fn equal_blocks(n_groups: usize, size: usize, within_rho: f64) -> Result<Self> {
        Self::new(
            (0..n_groups).map(|g| (g * size..(g + 1) * size).collect()).collect(),
            within_rho,
        )
    }

    pub fn n_features(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.within_rho) {
            return Err(invalid(format!("within_rho must lie in [0, 1), got {}", self.within_rho)));
        }
        let p = self.n_features();
        let mut seen = vec![false; p];
        for g in &self.groups {
            if g.is_empty() {
                return Err(invalid("empty feature group"));
            }
            for &j in g {
                if j >= p || seen[j] {
                    return Err(invalid("groups must partition 0..P exactly"));
                }
                seen[j] = true;
            }
        }
        Ok(())
    }

    /// Group index of every feature.
    pub fn membership(&self) -> Vec<usize> {
        let mut m = vec![0; self.n_features()];
        for (g, members) in self.groups.iter().enumerate() {
            for &j in members {
                m[j] = g;
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    Linear,
    Nonlinear,
}

impl DgpKind {
    pub fn label(self) -> &'static str {
        match self {
            DgpKind::Linear => "linear",
            DgpKind::Nonlinear => "nonlinear",
        }
    }
}

pub const DEFAULT_BETAS: [f64; 10] = [2.0, 1.5, 1.0, 0.8, 0.6, 0.4, 0.3, 0.2, 0.1, 0.0];
pub const DEFAULT_NOISE_SD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub betas: Vec<f64>,
    pub noise_sd: f64,
    pub n: usize,
    pub groups: GroupStructure,
    pub seed: u64,
}

impl DgpSpec {
    /// 10 groups of 5 with the default coefficients.
    pub fn full_default(kind: DgpKind, rho: f64, n: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            kind,
            betas: DEFAULT_BETAS.to_vec(),
            noise_sd: DEFAULT_NOISE_SD,
            n,
            groups: GroupStructure::equal_blocks(10, 5, rho)?,
            seed,
        })
    }

    fn validate(&self) -> Result<()> {
        self.groups.validate()?;
        if self.betas.len() != self.groups.groups.len() {
            return Err(mismatch(format!(
                "{} betas for {} groups",
                self.betas.len(),
                self.groups.groups.len()
            )));
        }
        if !(self.noise_sd > 0.0) {
            return Err(invalid("noise_sd must be positive"));
        }
        if self.kind == DgpKind::Nonlinear && self.groups.groups.len() < 3 {
            return Err(invalid("nonlinear DGP needs at least 3 groups"));
        }
        Ok(())
    }

    /// Draw features and target. Features use `child(seed, "features")`,
    /// noise uses `child(seed, "noise")`.
    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        let x = gen_correlated_features(&self.groups, self.n, rng::child_named(self.seed, "features"))?;
        let y = gen_target(&x, self)?;
        let names = (0..x.cols()).map(|j| format!("x{j}")).collect();
        Dataset::new(x, y, Task::Regression, names)
    }
}

/// Equicorrelated Gaussian blocks via a shared factor per group:
/// `x = sqrt(rho) * u_g + sqrt(1 - rho) * e`.
pub fn gen_correlated_features(groups: &GroupStructure, n: usize, seed: u64) -> Result<Matrix> {
    groups.validate()?;
    if n < 2 {
        return Err(invalid("need at least 2 rows"));
    }
    let p = groups.n_features();
    let a = groups.within_rho.sqrt();
    let b = (1.0 - groups.within_rho).sqrt();
    let mut rng = rng::stream(seed);
    let mut x = Matrix::zeros(n, p);
    for i in 0..n {
        let row = x.row_mut(i);
        for g in &groups.groups {
            let u: f64 = rng.sample(StandardNormal);
            for &j in g {
                let e: f64 = rng.sample(StandardNormal);
                row[j] = a * u + b * e;
            }
        }
    }
    Ok(x)
}

fn group_means(x: &Matrix, groups: &GroupStructure, i: usize) -> Vec<f64> {
    let row = x.row(i);
    groups
        .groups
        .iter()
        .map(|g| g.iter().map(|&j| row[j]).sum::<f64>() / g.len() as f64)
        .collect()
}

pub fn gen_target(features: &Matrix, spec: &DgpSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if features.cols() != spec.groups.n_features() {
        return Err(mismatch("feature matrix does not match group structure"));
    }
    let mut rng = rng::stream(rng::child_named(spec.seed, "noise"));
    let b = &spec.betas;
    let mut y = Vec::with_capacity(features.rows());
    for i in 0..features.rows() {
        let z = group_means(features, &spec.groups, i);
        let signal = match spec.kind {
            DgpKind::Linear => b.iter().zip(&z).map(|(b, z)| b * z).sum::<f64>(),
            DgpKind::Nonlinear => {
                b[0] * z[0] * z[0]
                    + b[1] * z[0] * z[1]
                    + b[2] * (std::f64::consts::PI * z[2]).sin()
                    + b[3..].iter().zip(&z[3..]).map(|(b, z)| b * z).sum::<f64>()
            }
        };
        let eps: f64 = rng.sample(StandardNormal);
        y.push(signal + spec.noise_sd * eps);
    }
    Ok(y)
}

/// Per-feature ground truth `|beta_g| / |G_g|` (linear DGP only).
pub fn ground_truth_importance(spec: &DgpSpec) -> Result<Vec<f64>> {
    if spec.kind != DgpKind::Linear {
        return Err(invalid("ground truth importance is defined for the linear DGP only"));
    }
    spec.groups.validate()?;
    if spec.betas.len() != spec.groups.groups.len() {
        return Err(mismatch("beta length does not match group count"));
    }
    let mut truth = vec![0.0; spec.groups.n_features()];
    for (g, members) in spec.groups.groups.iter().enumerate() {
        let v = spec.betas[g].abs() / members.len() as f64;
        for &j in members {
            truth[j] = v;
        }
    }
    Ok(truth)
}

pub const DEFAULT_FRACTIONS: [f64; 4] = [0.56, 0.16, 0.08, 0.20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourWaySplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub explain: Vec<usize>,
    pub test: Vec<usize>,
    pub fractions: [f64; 4],
}

impl FourWaySplit {
    pub fn sizes(&self) -> [usize; 4] {
        [self.train.len(), self.val.len(), self.explain.len(), self.test.len()]
    }
}

/// Shuffle `0..n` and cut by cumulative fractions (floor; remainder to test).
pub fn split_four_way(n: usize, fractions: [f64; 4], seed: u64) -> Result<FourWaySplit> {
    if n < 4 {
        return Err(invalid(format!("cannot split {n} rows four ways")));
    }
    if fractions.iter().any(|&f| !(f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(invalid("fractions must be positive and sum to 1"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed));
    let take = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
    let (a, b, c) = (take(fractions[0]), take(fractions[1]), take(fractions[2]));
    if a == 0 || b == 0 || c == 0 || a + b + c >= n {
        return Err(invalid(format!("{n} rows cannot populate all four splits")));
    }
    Ok(FourWaySplit {
        train: perm[..a].to_vec(),
        val: perm[a..a + b].to_vec(),
        explain: perm[a + b..a + b + c].to_vec(),
        test: perm[a + b + c..].to_vec(),
        fractions,
    })
}

/// Read a headered numeric CSV. Missing or non-numeric cells are rejected.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str, task: Task) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())
        .map_err(|e| Error::Csv(e.to_string()))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::Csv("empty file".into()));
    }
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::Csv(format!("missing target column `{target_column}`")))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let mut data = Vec::new();
    let mut target = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        if rec.len() != headers.len() {
            return Err(Error::Csv(format!("record {} has {} fields", line + 1, rec.len())));
        }
        for (i, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Csv(format!("non-numeric cell `{cell}` at record {}, column `{}`", line + 1, headers[i]))
            })?;
            if i == target_idx {
                target.push(v);
            } else {
                data.push(v);
            }
        }
    }
    if target.is_empty() {
        return Err(Error::Csv("no data rows".into()));
    }
    let features = Matrix::from_vec(target.len(), names.len(), data)?;
    Dataset::new(features, target, task, names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn within_group_correlation_full_layout() {
        let g = GroupStructure::equal_blocks(10, 5, 0.9).unwrap();
        let x = gen_correlated_features(&g, 5000, 11).unwrap();
        assert_eq!((x.rows(), x.cols()), (5000, 50));
        for grp in &g.groups {
            for a in 0..grp.len() {
                for b in a + 1..grp.len() {
                    let c = corr(&x.column(grp[a]), &x.column(grp[b]));
                    assert!((c - 0.9).abs() < 0.03, "{c}");
                }
            }
        }
        let cross = corr(&x.column(0), &x.column(5));
        assert!(cross.abs() < 3.0 / (5000f64).sqrt());
    }

    #[test]
    fn independence_at_rho_zero() {
        let g = GroupStructure::equal_blocks(2, 3, 0.0).unwrap();
        let n = 4000;
        let x = gen_correlated_features(&g, n, 5).unwrap();
        for a in 0..6 {
            for b in a + 1..6 {
                assert!(corr(&x.column(a), &x.column(b)).abs() < 3.0 / (n as f64).sqrt());
            }
        }
    }

    #[test]
    fn million_row_correlation() {
        // shared-factor construction: corr = rho exactly in population
        let g = GroupStructure::equal_blocks(2, 2, 0.5).unwrap();
        let x = gen_correlated_features(&g, 1_000_000, 2).unwrap();
        let c = corr(&x.column(0), &x.column(1));
        assert!((0.497..=0.503).contains(&c), "{c}");
        // marginals are standard normal
        let col = x.column(2);
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let v = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64;
        assert!(m.abs() < 0.01 && (v - 1.0).abs() < 0.01);
    }

    #[test]
    fn rejects_degenerate_rho() {
        assert!(GroupStructure::equal_blocks(2, 2, 1.0).is_err());
        let g = GroupStructure { groups: vec![vec![0, 1]], within_rho: 1.0 };
        assert!(gen_correlated_features(&g, 10, 0).is_err());
    }

    #[test]
    fn null_signal_target_is_noise() {
        let mut spec = DgpSpec::full_default(DgpKind::Linear, 0.5, 20_000, 3).unwrap();
        spec.betas = vec![0.0; 10];
        let ds = spec.generate().unwrap();
        let n = ds.target.len() as f64;
        let m = ds.target.iter().sum::<f64>() / n;
        let v = ds.target.iter().map(|y| (y - m).powi(2)).sum::<f64>() / n;
        assert!(m.abs() < 0.02);
        assert!((v - 0.25).abs() < 0.01, "{v}");
    }

    #[test]
    fn linear_target_variance_matches_closed_form() {
        let spec = DgpSpec::full_default(DgpKind::Linear, 0.9, 5000, 21).unwrap();
        let ds = spec.generate().unwrap();
        let n = ds.target.len() as f64;
        let m = ds.target.iter().sum::<f64>() / n;
        let v = ds.target.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1.0);
        // var(mean of 5 equicorrelated unit normals) = rho + (1 - rho) / 5
        let var_z = 0.9 + 0.1 / 5.0;
        let expected: f64 = DEFAULT_BETAS.iter().map(|b| b * b * var_z).sum::<f64>() + 0.25;
        assert!((v - expected).abs() / expected < 0.05, "{v} vs {expected}");
    }

    #[test]
    fn nonlinear_terms_use_first_three_groups() {
        let spec = DgpSpec::full_default(DgpKind::Nonlinear, 0.0, 50, 4).unwrap();
        let ds = spec.generate().unwrap();
        let mut rng = rng::stream(rng::child_named(spec.seed, "noise"));
        for i in 0..ds.n_rows() {
            let z = group_means(&ds.features, &spec.groups, i);
            let b = &spec.betas;
            let mut s = b[0] * z[0].powi(2) + b[1] * z[0] * z[1] + b[2] * (std::f64::consts::PI * z[2]).sin();
            for g in 3..10 {
                s += b[g] * z[g];
            }
            let e: f64 = rng.sample(StandardNormal);
            assert!((ds.target[i] - (s + 0.5 * e)).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_generation() {
        let spec = DgpSpec::full_default(DgpKind::Linear, 0.7, 300, 99).unwrap();
        assert_eq!(spec.generate().unwrap(), spec.generate().unwrap());
    }

    #[test]
    fn beta_length_mismatch() {
        let mut spec = DgpSpec::full_default(DgpKind::Linear, 0.7, 30, 9).unwrap();
        spec.betas.pop();
        let x = gen_correlated_features(&spec.groups, 30, 1).unwrap();
        assert!(gen_target(&x, &spec).is_err());
    }

    #[test]
    fn split_sizes() {
        assert_eq!(split_four_way(100, DEFAULT_FRACTIONS, 1).unwrap().sizes(), [56, 16, 8, 20]);
        assert_eq!(split_four_way(4, [0.25; 4], 1).unwrap().sizes(), [1, 1, 1, 1]);
        assert_eq!(split_four_way(5000, DEFAULT_FRACTIONS, 1).unwrap().sizes(), [2800, 800, 400, 1000]);
        assert!(split_four_way(3, [0.25; 4], 1).is_err());
        assert!(split_four_way(100, [0.5, 0.5, 0.5, -0.5], 1).is_err());
    }

    #[test]
    fn ground_truth_examples() {
        let spec = DgpSpec::full_default(DgpKind::Linear, 0.9, 100, 0).unwrap();
        let t = ground_truth_importance(&spec).unwrap();
        assert!(t[..5].iter().all(|&v| (v - 0.4).abs() < 1e-15));
        assert!(t[45..].iter().all(|&v| v == 0.0));

        let single = DgpSpec {
            kind: DgpKind::Linear,
            betas: vec![3.0],
            noise_sd: 0.5,
            n: 10,
            groups: GroupStructure::new(vec![vec![0]], 0.0).unwrap(),
            seed: 0,
        };
        assert_eq!(ground_truth_importance(&single).unwrap(), vec![3.0]);

        let uneven = DgpSpec {
            betas: vec![1.5, 1.0],
            groups: GroupStructure::new(vec![vec![0, 1, 2], vec![3, 4]], 0.3).unwrap(),
            ..single.clone()
        };
        assert_eq!(ground_truth_importance(&uneven).unwrap(), vec![0.5; 5]);

        let nl = DgpSpec { kind: DgpKind::Nonlinear, ..spec };
        assert!(ground_truth_importance(&nl).is_err());
    }

    #[test]
    fn csv_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "a,y,b\n1,0,2\n3,1,4\n").unwrap();
        let ds = load_csv(&p, "y", Task::BinaryClassification).unwrap();
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.target, vec![0.0, 1.0]);
        assert_eq!(ds.features.row(1), &[3.0, 4.0]);

        assert!(load_csv(&p, "missing", Task::Regression).is_err());
        std::fs::write(&p, "a,y\n1,x\n").unwrap();
        assert!(load_csv(&p, "y", Task::Regression).is_err());
        std::fs::write(&p, "a,y\n1,\n").unwrap();
        assert!(load_csv(&p, "y", Task::Regression).is_err());
        std::fs::write(&p, "").unwrap();
        assert!(load_csv(&p, "y", Task::Regression).is_err());
    }
}
