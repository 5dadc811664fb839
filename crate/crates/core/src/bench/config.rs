use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{MethodName, MethodParams};
use crate::data::{DgpKind, DgpSpec, GroupStructure, Task, DEFAULT_BETAS, DEFAULT_FRACTIONS, DEFAULT_NOISE_SD};
use crate::error::{invalid, Result};
use crate::pipeline::PipelineConfig;

pub const BENCH_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Paper,
    Desk,
}

/// A user-supplied CSV in place of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSource {
    pub path: String,
    pub target_column: String,
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub schema_version: u32,
    pub scale: Scale,
    /// Dataset label used in reports and by the criteria checker.
    pub dataset: String,
    pub dgp: DgpKind,
    pub rho_levels: Vec<f64>,
    pub reps: usize,
    pub n: usize,
    pub n_groups: usize,
    pub group_size: usize,
    pub betas: Vec<f64>,
    pub noise_sd: f64,
    pub fractions: [f64; 4],
    pub methods: Vec<MethodName>,
    pub method_params: MethodParams,
    pub pipeline: PipelineConfig,
    pub master_seed: u64,
    pub csv: Option<CsvSource>,
    /// Correlation level for the extended table, epsilon ablation and
    /// variance decomposition.
    pub ablation_rho: f64,
    pub epsilon_grid: Vec<f64>,
    pub population_grid: Vec<usize>,
    pub variance_decomposition: bool,
    pub n_boot: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl BenchmarkConfig {
    /// Full-size protocol: 10 groups of 5, N = 5000, M = 200, 20 repetitions.
    pub fn paper() -> Self {
        Self {
            schema_version: BENCH_SCHEMA_VERSION,
            scale: Scale::Paper,
            dataset: "synthetic".into(),
            dgp: DgpKind::Linear,
            rho_levels: vec![0.0, 0.5, 0.7, 0.9, 0.95],
            reps: 20,
            n: 5000,
            n_groups: 10,
            group_size: 5,
            betas: DEFAULT_BETAS.to_vec(),
            noise_sd: DEFAULT_NOISE_SD,
            fractions: DEFAULT_FRACTIONS,
            methods: MethodName::ALL.to_vec(),
            method_params: MethodParams { sr_draws: 100, ensemble_trees: 2000, ..MethodParams::default() },
            pipeline: PipelineConfig::default(),
            master_seed: 0,
            csv: None,
            ablation_rho: 0.9,
            epsilon_grid: vec![0.03, 0.05, 0.08, 0.10],
            population_grid: vec![50, 100, 200, 500],
            variance_decomposition: true,
            n_boot: 1000,
        }
    }

    /// Laptop-size protocol: 4 groups of 5, N = 2000, M = 60, 8 repetitions.
    pub fn desk() -> Self {
        let paper = Self::paper();
        Self {
            scale: Scale::Desk,
            reps: 8,
            n: 2000,
            n_groups: 4,
            betas: DESK_BETAS.to_vec(),
            method_params: MethodParams { sr_draws: 60, ensemble_trees: 500, ..MethodParams::default() },
            pipeline: PipelineConfig { population_size: 60, background_size: 50, ..PipelineConfig::default() },
            population_grid: vec![15, 30, 60, 120],
            ..paper
        }
    }

    pub fn preset(scale: Scale) -> Self {
        match scale {
            Scale::Paper => Self::paper(),
            Scale::Desk => Self::desk(),
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != BENCH_SCHEMA_VERSION {
            return Err(invalid(format!("unsupported benchmark schema version {}", self.schema_version)));
        }
        self.pipeline.validate()?;
        if self.reps < 2 {
            return Err(invalid("need at least 2 repetitions"));
        }
        if self.methods.is_empty() {
            return Err(invalid("no methods configured"));
        }
        if self.csv.is_none() {
            if self.rho_levels.is_empty() {
                return Err(invalid("no correlation levels configured"));
            }
            if self.betas.len() != self.n_groups {
                return Err(invalid(format!("{} betas for {} groups", self.betas.len(), self.n_groups)));
            }
            if self.rho_levels.iter().any(|r| !(0.0..1.0).contains(r)) {
                return Err(invalid("correlation levels must lie in [0, 1)"));
            }
        }
        Ok(())
    }

    /// Stable hash of the configuration, used to validate checkpoints.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", crate::rng::fnv1a(json.as_bytes()))
    }

    pub fn dgp_spec(&self, rho: f64, seed: u64) -> Result<DgpSpec> {
        Ok(DgpSpec {
            kind: self.dgp,
            betas: self.betas.clone(),
            noise_sd: self.noise_sd,
            n: self.n,
            groups: GroupStructure::equal_blocks(self.n_groups, self.group_size, rho)?,
            seed,
        })
    }

    /// Correlation levels as cell keys; a CSV source has a single unlabeled level.
    pub fn levels(&self) -> Vec<Option<f64>> {
        if self.csv.is_some() {
            vec![None]
        } else {
            self.rho_levels.iter().copied().map(Some).collect()
        }
    }
}

/// Coefficients for the four desk-scale groups: the leading entries of the
/// full profile. With only 20 features, a spread profile that keeps the null
/// group leaves too few strong groups for correlation to move rankings.
pub const DESK_BETAS: [f64; 4] = [2.0, 1.5, 1.0, 0.8];
