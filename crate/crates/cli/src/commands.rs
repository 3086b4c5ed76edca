//! The `run`, `convergence` and `compare` commands.

use std::collections::BTreeMap;
use std::fs;

use oldroyd_core::stepping::Discretization;
use oldroyd_core::verify::{gap_norms, ConvergenceReport, GapNorms, LevelRecord, StudyMode};
use rayon::prelude::*;
use serde::Serialize;

use crate::check::{self, CheckLine};
use crate::config::{Problem, RunConfig};
use crate::output::{gnuplot_script, write_csv, write_diagnostics, write_vtk};
use crate::runs::{galerkin, two_level, Outcome};
use crate::CliError;

/// Columns of `convergence.csv`. Order columns hold the successive order
/// against the previous row of the same mode.
pub const STUDY_COLUMNS: [&str; 14] = [
    "mode",
    "h",
    "H",
    "errL2_u",
    "errH1_u",
    "errL2_p",
    "gapH1",
    "gapP",
    "order_errL2_u",
    "order_errH1_u",
    "order_errL2_p",
    "order_gapH1",
    "order_gapP",
    "wall_ms",
];

#[derive(Clone, Debug)]
pub struct RunReport {
    pub outcome: Outcome,
    pub checks: Vec<CheckLine>,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    key: &'a str,
    value: String,
}

/// Single simulation: Galerkin, or two-level when `mesh.coarse_n` is set.
/// Writes `diagnostics.csv` and `summary.csv` (and VTK snapshots) to the
/// output directory.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunReport, CliError> {
    fs::create_dir_all(&cfg.out_dir)?;
    let (disc, outcome) = match cfg.coarse_n {
        Some(c) => two_level(cfg, c, cfg.n)?,
        None => galerkin(cfg, cfg.n)?,
    };
    write_diagnostics(&cfg.out_dir.join("diagnostics.csv"), &outcome.diagnostics)?;

    let p = &cfg.params;
    let mut summary = vec![
        ("mode", if cfg.coarse_n.is_some() { "two_level" } else { "galerkin" }.to_string()),
        ("mu", p.mu.to_string()),
        ("gamma", p.gamma.to_string()),
        ("delta", p.delta.to_string()),
        ("h", outcome.h().to_string()),
        ("H", outcome.coarse_h().map_or(String::new(), |v| v.to_string())),
        ("steps", (outcome.diagnostics.len() - 1).to_string()),
        ("picard_total", outcome.picard_total.to_string()),
        ("picard_failures", outcome.picard_failures.to_string()),
        ("wall_seconds", outcome.wall_seconds.to_string()),
    ];
    if let Some((nu, kappa, lambda)) = p.physical {
        summary.extend([("nu", nu.to_string()), ("kappa", kappa.to_string()), ("lambda", lambda.to_string())]);
    }
    if let Some(e) = outcome.errors {
        summary.extend([
            ("errL2_u", e.velocity_l2.to_string()),
            ("errH1_u", e.velocity_h1.to_string()),
            ("errL2_p", e.pressure_l2.to_string()),
        ]);
    }
    write_csv(
        &cfg.out_dir.join("summary.csv"),
        summary.iter().map(|(k, v)| SummaryRow { key: k, value: v.clone() }),
    )?;

    if cfg.vtk {
        write_vtk(&cfg.out_dir.join("final.vtk"), &disc.space, &outcome.u, &outcome.p, "final state")?;
    }

    let checks = match cfg.problem {
        Problem::Zero | Problem::Rough { .. } => vec![check::energy_bound("energy bound", &outcome)],
        Problem::Mms(_) => Vec::new(),
    };
    Ok(RunReport { outcome, checks })
}

#[derive(Clone, Debug)]
pub struct StudyReport {
    pub galerkin: ConvergenceReport,
    pub two_level: ConvergenceReport,
    pub coupled: ConvergenceReport,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))
}

fn record(o: &Outcome, gap: Option<GapNorms>) -> LevelRecord {
    LevelRecord {
        h: o.h(),
        coarse_h: o.coarse_h(),
        errors: o.errors,
        gap,
        wall_seconds: o.wall_seconds,
    }
}

/// Galerkin sweep over `galerkin_n`, two-level sweep over
/// `two_level_coarse_n` at `two_level_fine_n`, and the coupled pairs.
/// Independent runs execute concurrently on up to `jobs` threads.
pub fn run_study(cfg: &RunConfig, jobs: usize) -> Result<StudyReport, CliError> {
    let c = &cfg.convergence;
    let pool = pool(jobs)?;

    let mut galerkin_n: Vec<usize> = c.galerkin_n.clone();
    if !c.two_level_coarse_n.is_empty() && !galerkin_n.contains(&c.two_level_fine_n) {
        galerkin_n.push(c.two_level_fine_n);
    }
    let galerkin_runs: Vec<(usize, (Discretization, Outcome))> = pool.install(|| {
        galerkin_n
            .par_iter()
            .map(|&n| galerkin(cfg, n).map(|r| (n, r)))
            .collect::<Result<_, _>>()
    })?;
    let galerkin_runs: BTreeMap<usize, (Discretization, Outcome)> = galerkin_runs.into_iter().collect();

    let mut pairs: Vec<(usize, usize)> = c.two_level_coarse_n.iter().map(|&h| (h, c.two_level_fine_n)).collect();
    for &p in &c.coupled {
        if !pairs.contains(&p) {
            pairs.push(p);
        }
    }
    let two_level_runs: Vec<((usize, usize), Outcome)> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(hc, hf)| two_level(cfg, hc, hf).map(|(_, o)| ((hc, hf), o)))
            .collect::<Result<_, _>>()
    })?;
    let two_level_runs: BTreeMap<(usize, usize), Outcome> = two_level_runs.into_iter().collect();

    let galerkin_records = c.galerkin_n.iter().map(|n| record(&galerkin_runs[n].1, None)).collect();

    let mut gap_records = Vec::new();
    if let Some((disc, reference)) = galerkin_runs.get(&c.two_level_fine_n) {
        for &hc in &c.two_level_coarse_n {
            let o = &two_level_runs[&(hc, c.two_level_fine_n)];
            let gap = gap_norms(&disc.ops, &o.u, &o.p, &reference.u, &reference.p)?;
            gap_records.push(record(o, Some(gap)));
        }
    }
    let coupled_records = c.coupled.iter().map(|p| record(&two_level_runs[p], None)).collect();

    Ok(StudyReport {
        galerkin: ConvergenceReport {
            mode: StudyMode::Galerkin,
            records: galerkin_records,
        },
        two_level: ConvergenceReport {
            mode: StudyMode::TwoLevel,
            records: gap_records,
        },
        coupled: ConvergenceReport {
            mode: StudyMode::Coupled,
            records: coupled_records,
        },
    })
}

#[derive(Serialize)]
struct StudyRow {
    mode: &'static str,
    h: f64,
    #[serde(rename = "H")]
    coarse_h: Option<f64>,
    #[serde(rename = "errL2_u")]
    err_l2_u: Option<f64>,
    #[serde(rename = "errH1_u")]
    err_h1_u: Option<f64>,
    #[serde(rename = "errL2_p")]
    err_l2_p: Option<f64>,
    #[serde(rename = "gapH1")]
    gap_h1: Option<f64>,
    #[serde(rename = "gapP")]
    gap_p: Option<f64>,
    #[serde(rename = "order_errL2_u")]
    order_err_l2_u: Option<f64>,
    #[serde(rename = "order_errH1_u")]
    order_err_h1_u: Option<f64>,
    #[serde(rename = "order_errL2_p")]
    order_err_l2_p: Option<f64>,
    #[serde(rename = "order_gapH1")]
    order_gap_h1: Option<f64>,
    #[serde(rename = "order_gapP")]
    order_gap_p: Option<f64>,
    wall_ms: f64,
}

fn successive(prev: Option<(f64, f64)>, cur: Option<(f64, f64)>) -> Option<f64> {
    let ((e0, h0), (e1, h1)) = (prev?, cur?);
    (e0 > 0.0 && e1 > 0.0).then(|| (e0 / e1).ln() / (h0 / h1).ln())
}

fn study_rows(r: &ConvergenceReport) -> Vec<StudyRow> {
    type Pick = fn(&LevelRecord) -> Option<f64>;
    let picks: [Pick; 5] = [
        |x| x.errors.map(|e| e.velocity_l2),
        |x| x.errors.map(|e| e.velocity_h1),
        |x| x.errors.map(|e| e.pressure_l2),
        |x| x.gap.map(|g| g.velocity_h1),
        |x| x.gap.map(|g| g.pressure_l2),
    ];
    r.records
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let order = |k: usize| {
                let at = |y: &LevelRecord| picks[k](y).map(|e| (e, r.sweep_size(y)));
                i.checked_sub(1).and_then(|j| successive(at(&r.records[j]), at(x)))
            };
            StudyRow {
                mode: r.mode.as_str(),
                h: x.h,
                coarse_h: x.coarse_h,
                err_l2_u: picks[0](x),
                err_h1_u: picks[1](x),
                err_l2_p: picks[2](x),
                gap_h1: picks[3](x),
                gap_p: picks[4](x),
                order_err_l2_u: order(0),
                order_err_h1_u: order(1),
                order_err_l2_p: order(2),
                order_gap_h1: order(3),
                order_gap_p: order(4),
                wall_ms: 1e3 * x.wall_seconds,
            }
        })
        .collect()
}

#[derive(Serialize)]
struct OrderRow {
    mode: &'static str,
    quantity: &'static str,
    slope: f64,
}

/// Runs the study and writes `convergence.csv`, `orders.csv` (least-squares
/// slopes) and `convergence.gp`.
pub fn cmd_convergence(cfg: &RunConfig, jobs: usize) -> Result<(StudyReport, Vec<CheckLine>), CliError> {
    if cfg.convergence.galerkin_n.len() < StudyMode::Galerkin.min_levels()
        && cfg.convergence.two_level_coarse_n.len() < StudyMode::TwoLevel.min_levels()
    {
        return Err(CliError::Config(crate::config::ConfigError {
            key: "convergence".into(),
            message: "a study needs at least 3 mesh levels".into(),
        }));
    }
    fs::create_dir_all(&cfg.out_dir)?;
    let report = run_study(cfg, jobs)?;
    let reports = [&report.galerkin, &report.two_level, &report.coupled];
    write_csv(
        &cfg.out_dir.join("convergence.csv"),
        reports.iter().flat_map(|r| study_rows(r)),
    )?;
    let mut orders = Vec::new();
    for r in reports {
        type Pick = fn(&LevelRecord) -> Option<f64>;
        let picks: [(&str, Pick); 5] = [
            ("errL2_u", |x| x.errors.map(|e| e.velocity_l2)),
            ("errH1_u", |x| x.errors.map(|e| e.velocity_h1)),
            ("errL2_p", |x| x.errors.map(|e| e.pressure_l2)),
            ("gapH1", |x| x.gap.map(|g| g.velocity_h1)),
            ("gapP", |x| x.gap.map(|g| g.pressure_l2)),
        ];
        for (name, f) in picks {
            if let Some(o) = r.order(f) {
                orders.push(OrderRow {
                    mode: r.mode.as_str(),
                    quantity: name,
                    slope: o.slope,
                });
            }
        }
    }
    write_csv(&cfg.out_dir.join("orders.csv"), orders)?;
    fs::write(cfg.out_dir.join("convergence.gp"), gnuplot_script("convergence.csv"))?;
    let checks = check::study(&report);
    Ok((report, checks))
}

#[derive(Clone, Debug)]
pub struct CompareReport {
    pub coarse_n: usize,
    pub n: usize,
    pub galerkin: Outcome,
    pub two_level: Outcome,
    /// Two-level over Galerkin wall clock.
    pub ratio: f64,
    pub gap: GapNorms,
    /// `|u_h - u^h|_1 / |u_h|_1`
    pub relative_gap_h1: f64,
}

/// Full fine Galerkin run, then the two-level run on the same data.
pub fn run_compare(cfg: &RunConfig, coarse_n: usize, n: usize) -> Result<CompareReport, CliError> {
    let (disc, g) = galerkin(cfg, n)?;
    let (_, t) = two_level(cfg, coarse_n, n)?;
    let gap = gap_norms(&disc.ops, &t.u, &t.p, &g.u, &g.p)?;
    let norm = disc.h1_seminorm(&g.u);
    let relative_gap_h1 = if norm > 0.0 { gap.velocity_h1 / norm } else { gap.velocity_h1 };
    Ok(CompareReport {
        coarse_n,
        n,
        ratio: t.wall_seconds / g.wall_seconds,
        galerkin: g,
        two_level: t,
        gap,
        relative_gap_h1,
    })
}

#[derive(Serialize)]
struct CompareRow {
    h: f64,
    #[serde(rename = "H")]
    coarse_h: f64,
    galerkin_wall_ms: f64,
    two_level_wall_ms: f64,
    ratio: f64,
    coarse_ms: f64,
    transfer_ms: f64,
    fine_ms: f64,
    picard_galerkin: usize,
    picard_coarse: usize,
    #[serde(rename = "gapL2")]
    gap_l2: f64,
    #[serde(rename = "gapH1")]
    gap_h1: f64,
    #[serde(rename = "gapP")]
    gap_p: f64,
    #[serde(rename = "rel_gapH1")]
    rel_gap_h1: f64,
    #[serde(rename = "errH1_galerkin")]
    err_h1_galerkin: Option<f64>,
    #[serde(rename = "errH1_two_level")]
    err_h1_two_level: Option<f64>,
}

/// Compares the levels `(mesh.coarse_n, mesh.n)`; writes `compare.csv`.
pub fn cmd_compare(cfg: &RunConfig) -> Result<(CompareReport, Vec<CheckLine>), CliError> {
    let coarse_n = cfg.coarse_n.ok_or_else(|| {
        CliError::Config(crate::config::ConfigError {
            key: "mesh.coarse_n".into(),
            message: "compare needs a coarse mesh".into(),
        })
    })?;
    fs::create_dir_all(&cfg.out_dir)?;
    let r = run_compare(cfg, coarse_n, cfg.n)?;
    let tm = r.two_level.timings.unwrap_or_default();
    write_csv(
        &cfg.out_dir.join("compare.csv"),
        [CompareRow {
            h: r.galerkin.h(),
            coarse_h: 1.0 / coarse_n as f64,
            galerkin_wall_ms: 1e3 * r.galerkin.wall_seconds,
            two_level_wall_ms: 1e3 * r.two_level.wall_seconds,
            ratio: r.ratio,
            coarse_ms: 1e3 * tm.coarse,
            transfer_ms: 1e3 * tm.transfer,
            fine_ms: 1e3 * tm.fine,
            picard_galerkin: r.galerkin.picard_total,
            picard_coarse: r.two_level.picard_total,
            gap_l2: r.gap.velocity_l2,
            gap_h1: r.gap.velocity_h1,
            gap_p: r.gap.pressure_l2,
            rel_gap_h1: r.relative_gap_h1,
            err_h1_galerkin: r.galerkin.errors.map(|e| e.velocity_h1),
            err_h1_two_level: r.two_level.errors.map(|e| e.velocity_h1),
        }],
    )?;
    let checks = check::compare(&r);
    Ok((r, checks))
}
