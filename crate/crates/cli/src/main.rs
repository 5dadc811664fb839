//! `dash-bench`: data generation, the correlation sweep, ablations,
//! diagnostics export and the criteria checklist.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dash_core::bench::{self, AblationAxis, BenchmarkConfig, BenchmarkReport, Scale, Verdict};

#[derive(Parser)]
#[command(name = "dash-bench", version, about = "Stable feature attribution benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON benchmark configuration; overrides the preset chosen by --scale.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    scale: ScaleArg,
    /// Master seed (overrides the configuration's).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Cells run concurrently; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Paper,
    Desk,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Epsilon,
    PopulationSize,
}

#[derive(Subcommand)]
enum Command {
    /// Write dataset and split containers for every (rho, rep) cell.
    GenData(Common),
    /// Run every method on every cell and write report.json plus CSV tables.
    Run(Common),
    /// Sweep epsilon or population size at the ablation correlation level.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "epsilon")]
        axis: AxisArg,
    },
    /// Run DASH once and export IS-plot, disagreement and FSI CSVs.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Dataset container manifest (from gen-data); generated when omitted.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Evaluate the pass/fail checklist over one or more report.json files.
    CheckCriteria {
        #[command(flatten)]
        common: Common,
        /// Reports to evaluate; defaults to <out>/report.json.
        #[arg(long = "report")]
        reports: Vec<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<BenchmarkConfig> {
    let mut cfg = match &c.config {
        Some(path) => BenchmarkConfig::from_json_file(path).with_context(|| format!("reading {}", path.display()))?,
        None => BenchmarkConfig::preset(match c.scale {
            ScaleArg::Paper => Scale::Paper,
            ScaleArg::Desk => Scale::Desk,
        }),
    };
    if let Some(seed) = c.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenData(c) => {
            let cfg = load_config(&c)?;
            let paths = bench::gen_data(&cfg, &c.out)?;
            println!("wrote {} datasets under {}", paths.len(), c.out.join("data").display());
            Ok(true)
        }
        Command::Run(c) => {
            let cfg = load_config(&c)?;
            let report = bench::run_benchmark(&cfg, &c.out, c.workers)?;
            print_summary(&report);
            let failed = report.failed_cells();
            if failed > 0 {
                eprintln!("{failed} method cells failed; see report.json");
            }
            Ok(failed == 0)
        }
        Command::Ablate { common, axis } => {
            let cfg = load_config(&common)?;
            let axis = match axis {
                AxisArg::Epsilon => AblationAxis::Epsilon,
                AxisArg::PopulationSize => AblationAxis::PopulationSize,
            };
            let rep = bench::ablate(&cfg, axis, &common.out)?;
            for r in &rep.epsilon {
                println!("epsilon {:.3}: passing {:.1}, K_eff {:.1}", r.epsilon, r.models_passing, r.k_eff_mean);
            }
            for r in &rep.population {
                let stab = r.stability.map_or("n/a".to_string(), |s| format!("{s:.4}"));
                println!("M {}: K_eff {:.1}, stability {stab}", r.population_size, r.k_eff_mean);
            }
            Ok(true)
        }
        Command::Diagnose { common, dataset } => {
            let cfg = load_config(&common)?;
            let res = bench::diagnose(&cfg, dataset.as_deref(), &common.out)?;
            println!("K_eff {} of {} passing; outputs in {}", res.k_eff(), res.filtered.len(), common.out.display());
            Ok(true)
        }
        Command::CheckCriteria { common, reports } => {
            let paths = if reports.is_empty() { vec![common.out.join("report.json")] } else { reports };
            let mut loaded = Vec::with_capacity(paths.len());
            for p in &paths {
                loaded.push(BenchmarkReport::from_json_file(p).with_context(|| format!("reading {}", p.display()))?);
            }
            if loaded.is_empty() {
                bail!("no reports given");
            }
            let criteria = bench::check_criteria(&loaded);
            for c in &criteria {
                let tag = match c.verdict {
                    Verdict::Pass => "PASS",
                    Verdict::Fail => "FAIL",
                    Verdict::NotEvaluable => "N/A ",
                };
                println!("{tag} {:>2}. {}: {}", c.id, c.name, c.measured);
            }
            std::fs::create_dir_all(&common.out)?;
            std::fs::write(common.out.join("criteria.json"), serde_json::to_string_pretty(&criteria)?)?;
            let failed = loaded.iter().map(|r| r.failed_cells()).sum::<usize>();
            Ok(failed == 0 && bench::all_evaluable_pass(&criteria))
        }
    }
}

fn print_summary(report: &BenchmarkReport) {
    println!("{:<22} {:>6} {:>10} {:>10} {:>10}", "method", "rho", "stability", "accuracy", "equity");
    let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    for r in &report.summary {
        let rho = r.rho.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
        println!("{:<22} {:>6} {:>10} {:>10} {:>10}", r.method.label(), rho, f(r.stability), f(r.accuracy), f(r.equity));
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
