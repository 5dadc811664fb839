//! Benchmark harness: correlation sweep over all methods, ablations,
//! diagnostics export and the criteria checker.
//!
//! Seeds form a tree: master -> (level, rep) cell -> data / models ->
//! per-method and per-model children, all through [`crate::rng::child`].
//! Adding a method never changes another method's numbers.

pub mod ablation;
pub mod config;
pub mod criteria;
pub mod report;
pub mod runner;
pub mod tables;

use std::path::{Path, PathBuf};

use crate::container::{load_dataset, save_dash_result, save_dataset};
use crate::diagnostics::{highest_variance_row, local_disagreement, write_disagreement, write_fsi, write_is_plot};
use crate::error::Result;
use crate::pipeline::{run_dash, DashResult, PipelineConfig};
use crate::rng::child_named;

pub use ablation::{ablate_epsilon, ablate_population, AblationAxis, AblationReport};
pub use config::{BenchmarkConfig, CsvSource, Scale};
pub use criteria::{all_evaluable_pass, check_criteria, Criterion, Verdict};
pub use report::{build_report, BenchmarkReport};
pub use runner::{cell_seed, CellData, CellResult};

/// Write every (level, rep) dataset with its split as container files.
pub fn gen_data(cfg: &BenchmarkConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let fixed = runner::load_fixed_dataset(cfg)?;
    let dir = out.join("data");
    let mut paths = Vec::new();
    for rho in cfg.levels() {
        for rep in 0..cfg.reps {
            let seed = cell_seed(cfg.master_seed, rho, rep);
            let data = CellData::new(cfg, rho, child_named(seed, "data"), fixed.as_ref())?;
            let stem = match rho {
                Some(r) => format!("rho{r:.3}-rep{rep:03}"),
                None => format!("{}-rep{rep:03}", cfg.dataset),
            };
            paths.push(save_dataset(&dir, &stem, &data.dataset, Some(&data.split))?);
        }
    }
    Ok(paths)
}

/// Run the sweep, resuming from `out/cells`, and write `report.json`, the CSV
/// tables and `timings.json` (kept apart so the report is reproducible).
pub fn run_benchmark(cfg: &BenchmarkConfig, out: &Path, workers: usize) -> Result<BenchmarkReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let fixed = runner::load_fixed_dataset(cfg)?;
    let done = runner::run_cells(cfg, fixed.as_ref(), Some(&out.join("cells")), workers)?;
    let variance = if cfg.variance_decomposition {
        report::run_variance_decomposition(cfg, fixed.as_ref())?
    } else {
        vec![]
    };
    let (cells, timings): (Vec<_>, Vec<_>) = done.into_iter().unzip();
    let report = build_report(cfg, cells, variance);
    report.write_json(out.join("report.json"))?;
    tables::write_table2(&report, &out.join("table2.csv"))?;
    tables::write_table4(&report, &out.join("table4.csv"))?;
    tables::write_table5(&report, &out.join("table5.csv"))?;
    tables::write_table7(&report, &out.join("table7.csv"))?;
    let timing_summary = report::summarize_timings(cfg, &timings);
    tables::write_timings(&timing_summary, &out.join("timings.csv"))?;
    std::fs::write(
        out.join("timings.json"),
        serde_json::to_string_pretty(&serde_json::json!({ "per_cell": timings, "summary": timing_summary }))?,
    )?;
    Ok(report)
}

pub fn ablate(cfg: &BenchmarkConfig, axis: AblationAxis, out: &Path) -> Result<AblationReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let fixed = runner::load_fixed_dataset(cfg)?;
    let rep = match axis {
        AblationAxis::Epsilon => ablate_epsilon(cfg, fixed.as_ref())?,
        AblationAxis::PopulationSize => ablate_population(cfg, fixed.as_ref())?,
    };
    match axis {
        AblationAxis::Epsilon => {
            std::fs::write(out.join("ablation_epsilon.json"), serde_json::to_string_pretty(&rep)?)?;
            let shim = BenchmarkReport {
                schema_version: config::BENCH_SCHEMA_VERSION,
                config: cfg.clone(),
                cells: vec![],
                summary: vec![],
                tests: vec![],
                epsilon_ablation: rep.epsilon.clone(),
                variance_decomposition: vec![],
                max_local_error: 0.0,
            };
            tables::write_table7(&shim, &out.join("table7.csv"))?;
        }
        AblationAxis::PopulationSize => {
            std::fs::write(out.join("ablation_population.json"), serde_json::to_string_pretty(&rep)?)?;
            let mut w = csv::Writer::from_path(out.join("population_ablation.csv"))?;
            w.write_record(["population_size", "k_eff_mean", "stability", "accuracy", "equity"])?;
            let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            for r in &rep.population {
                w.write_record([
                    r.population_size.to_string(),
                    r.k_eff_mean.to_string(),
                    o(r.stability),
                    o(r.accuracy),
                    o(r.equity),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(rep)
}

/// Run DASH once and write `is_plot.csv`, `disagreement.csv`, `fsi.csv` and
/// the result container. Uses `dataset` (a container manifest) when given,
/// otherwise the first repetition at the ablation level.
pub fn diagnose(cfg: &BenchmarkConfig, dataset: Option<&Path>, out: &Path) -> Result<DashResult> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let (ds, split) = match dataset {
        Some(path) => {
            let (ds, split) = load_dataset(path)?;
            let split = match split {
                Some(s) => s,
                None => crate::data::split_four_way(ds.n_rows(), cfg.fractions, child_named(cfg.master_seed, "split"))?,
            };
            (ds, split)
        }
        None => {
            let fixed = runner::load_fixed_dataset(cfg)?;
            let rho = if fixed.is_some() { None } else { Some(cfg.ablation_rho) };
            let seed = cell_seed(cfg.master_seed, rho, 0);
            let data = CellData::new(cfg, rho, child_named(seed, "data"), fixed.as_ref())?;
            (data.dataset, data.split)
        }
    };
    let pcfg = PipelineConfig { master_seed: child_named(cfg.master_seed, "diagnose"), ..cfg.pipeline.clone() };
    let result = run_dash(&ds, &split, &pcfg)?;
    write_is_plot(out.join("is_plot.csv"), &ds.feature_names, &result.fsi, &result.quadrants)?;
    let row = highest_variance_row(&result.per_model)?;
    let pairs = local_disagreement(&result.per_model, row)?;
    write_disagreement(out.join("disagreement.csv"), &ds.feature_names, &pairs, split.explain[row])?;
    write_fsi(out.join("fsi.csv"), &ds.feature_names, &result.fsi)?;
    save_dash_result(out, "dash_result", &result)?;
    Ok(result)
}
