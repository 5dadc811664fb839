//! Automated pass/fail checks over one or more benchmark reports.

use serde::{Deserialize, Serialize};

use super::report::BenchmarkReport;
use crate::baselines::MethodName;
use crate::data::DgpKind;

const SB: MethodName = MethodName::SingleBest30;
const DASH: MethodName = MethodName::DashMaxmin;

/// Allowed stability shortfall for the no-degradation check.
pub const SAFETY_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotEvaluable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: usize,
    pub name: String,
    pub verdict: Verdict,
    pub measured: String,
}

impl Criterion {
    fn new(id: usize, name: &str, verdict: Verdict, measured: impl Into<String>) -> Self {
        Self { id, name: name.into(), verdict, measured: measured.into() }
    }

    fn missing(id: usize, name: &str, why: &str) -> Self {
        Self::new(id, name, Verdict::NotEvaluable, why)
    }
}

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn is_synthetic(r: &BenchmarkReport, dgp: DgpKind) -> bool {
    r.config.csv.is_none() && r.config.dgp == dgp
}

/// Count of correlation levels where `better(dash, sb)` holds, over levels where both exist.
fn level_wins(r: &BenchmarkReport, value: impl Fn(MethodName, Option<f64>) -> Option<f64>, better: impl Fn(f64, f64) -> bool) -> Option<(usize, usize)> {
    let mut wins = 0;
    let mut total = 0;
    for level in r.config.levels() {
        if let (Some(d), Some(s)) = (value(DASH, level), value(SB, level)) {
            total += 1;
            wins += better(d, s) as usize;
        }
    }
    (total > 0).then_some((wins, total))
}

fn majority_levels(r: &BenchmarkReport, id: usize, name: &str, metric: &str, value: impl Fn(MethodName, Option<f64>) -> Option<f64>, better: impl Fn(f64, f64) -> bool) -> Criterion {
    let expected = r.config.rho_levels.len();
    match level_wins(r, value, better) {
        Some((w, t)) if t == expected => {
            let need = (0.8 * t as f64).ceil() as usize;
            Criterion::new(id, name, verdict(w >= need), format!("{metric}: {w}/{t} levels (need {need})"))
        }
        _ => Criterion::missing(id, name, "missing single_best_30 or dash_maxmin cells"),
    }
}

fn real_data(reports: &[BenchmarkReport], id: usize, dataset: &str) -> Criterion {
    let name = format!("{dataset}: DASH stability > single best");
    let Some(r) = reports.iter().find(|r| r.config.csv.is_some() && r.config.dataset == dataset) else {
        return Criterion::missing(id, &name, "no report for this dataset");
    };
    match (r.stability(DASH, None), r.stability(SB, None)) {
        (Some(d), Some(s)) => Criterion::new(id, &name, verdict(d > s), format!("{d:.4} vs {s:.4}")),
        _ => Criterion::missing(id, &name, "missing stability values"),
    }
}

/// Evaluate all eleven criteria. Reports are matched by content: the linear
/// synthetic sweep, a nonlinear synthetic run, and CSV runs by dataset name.
pub fn check_criteria(reports: &[BenchmarkReport]) -> Vec<Criterion> {
    let linear = reports.iter().find(|r| is_synthetic(r, DgpKind::Linear));
    let nonlinear = reports.iter().find(|r| is_synthetic(r, DgpKind::Nonlinear));
    let mut out = Vec::new();

    let no_linear = |id, name: &str| Criterion::missing(id, name, "no linear synthetic report");
    let names = [
        "stability: DASH > single best on most correlation levels",
        "accuracy at the ablation level: DASH >= single best",
        "equity: DASH CV < single best on most correlation levels",
        "safety at rho = 0: no stability degradation vs single best",
        "K_eff nondecreasing in epsilon",
        "nonlinear DGP: DASH > single best stability",
        "at least half of the paired tests significant after Holm",
    ];

    match linear {
        None => {
            for (i, n) in names.iter().enumerate() {
                if i != 5 {
                    out.push(no_linear(i + 1, n));
                }
            }
        }
        Some(r) => {
            out.push(majority_levels(r, 1, names[0], "stability", |m, l| r.stability(m, l), |d, s| d > s));
            let lvl = Some(r.config.ablation_rho);
            let acc = |m| r.row(m, lvl).and_then(|x| x.accuracy);
            out.push(match (acc(DASH), acc(SB)) {
                (Some(d), Some(s)) => Criterion::new(2, names[1], verdict(d >= s), format!("{d:.4} vs {s:.4}")),
                _ => Criterion::missing(2, names[1], "missing accuracy at the ablation level"),
            });
            out.push(majority_levels(r, 3, names[2], "equity", |m, l| r.row(m, l).and_then(|x| x.equity), |d, s| d < s));
            out.push(match (r.stability(DASH, Some(0.0)), r.stability(SB, Some(0.0))) {
                (Some(d), Some(s)) => Criterion::new(
                    4,
                    names[3],
                    verdict(d >= s - SAFETY_TOLERANCE),
                    format!("gap {:+.4} (tolerance {SAFETY_TOLERANCE})", d - s),
                ),
                _ => Criterion::missing(4, names[3], "no rho = 0 cells"),
            });
            let ks: Vec<f64> = r.epsilon_ablation.iter().map(|e| e.k_eff_mean).collect();
            out.push(if ks.len() >= 2 {
                let mono = ks.windows(2).all(|w| w[1] >= w[0]);
                Criterion::new(5, names[4], verdict(mono), format!("{ks:.2?}"))
            } else {
                Criterion::missing(5, names[4], "no epsilon ablation")
            });
            let sig = r.tests.iter().filter(|t| t.p_adjusted < 0.05).count();
            out.push(if r.tests.is_empty() {
                Criterion::missing(7, names[6], "no paired tests")
            } else {
                Criterion::new(7, names[6], verdict(2 * sig >= r.tests.len()), format!("{sig}/{} significant", r.tests.len()))
            });
        }
    }

    out.push(match nonlinear {
        None => Criterion::missing(6, names[5], "no nonlinear synthetic report"),
        Some(r) => {
            let lvl = Some(r.config.ablation_rho);
            match (r.stability(DASH, lvl), r.stability(SB, lvl)) {
                (Some(d), Some(s)) => Criterion::new(6, names[5], verdict(d > s), format!("{d:.4} vs {s:.4}")),
                _ => Criterion::missing(6, names[5], "missing stability at the ablation level"),
            }
        }
    });

    out.push(real_data(reports, 8, "superconductor"));
    out.push(real_data(reports, 9, "california_housing"));
    out.push(real_data(reports, 10, "breast_cancer"));

    let vd_name = "variance decomposition: DASH model-selection instability < single best";
    let vd = reports.iter().flat_map(|r| &r.variance_decomposition).collect::<Vec<_>>();
    let get = |m| vd.iter().find(|v| v.method == m).map(|v| v.model_selection_instability);
    out.push(match (get(DASH), get(SB)) {
        (Some(d), Some(s)) => Criterion::new(11, vd_name, verdict(d < s), format!("{d:.4} vs {s:.4}")),
        _ => Criterion::missing(11, vd_name, "no variance decomposition"),
    });

    out.sort_by_key(|c| c.id);
    out
}

/// True when no evaluable criterion failed.
pub fn all_evaluable_pass(criteria: &[Criterion]) -> bool {
    criteria.iter().all(|c| c.verdict != Verdict::Fail)
}
