//! Acceptance thresholds and the checks `--check` applies to reports.

use std::fmt;

use crate::commands::{CompareReport, StudyReport};
use crate::runs::Outcome;
use oldroyd_core::verify::{ConvergenceReport, LevelRecord};

/// Fitted velocity L2 order of the Galerkin sweep.
pub const GALERKIN_L2_ORDER: (f64, f64) = (1.7, 2.3);
/// Fitted velocity H1 order of the Galerkin sweep.
pub const GALERKIN_H1_ORDER: (f64, f64) = (0.8, 1.2);
/// Fitted pressure L2/R order of the Galerkin sweep.
pub const GALERKIN_P_ORDER: (f64, f64) = (0.7, 1.3);
/// Fitted order in `H` of the two-level velocity gap `|u_h - u^h|_1`.
pub const GAP_H1_ORDER: (f64, f64) = (1.6, 2.4);
/// Largest distance between the pressure-gap and velocity-gap orders.
pub const GAP_P_ORDER_DISTANCE: f64 = 0.4;
/// Fitted order in `h` of the total two-level error with `H = sqrt(h)`.
pub const COUPLED_H1_ORDER: (f64, f64) = (0.7, 1.3);
/// Two-level over full Galerkin wall clock.
pub const COST_RATIO_MAX: f64 = 1.0;
/// Relative H1 gap when coarse and fine meshes coincide.
pub const COLLAPSE_RELATIVE_GAP: f64 = 1e-8;
/// Slack of the bound `|u^n| <= |u^0|` with zero forcing.
pub const ENERGY_SLACK: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub detail: String,
    pub pass: bool,
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn within(name: &str, value: Option<f64>, (lo, hi): (f64, f64)) -> CheckLine {
    match value {
        Some(v) => CheckLine {
            name: name.to_string(),
            detail: format!("{v:.4} in [{lo}, {hi}]"),
            pass: (lo..=hi).contains(&v),
        },
        None => CheckLine {
            name: name.to_string(),
            detail: "not enough levels".into(),
            pass: false,
        },
    }
}

fn slope<F: Fn(&LevelRecord) -> Option<f64>>(r: &ConvergenceReport, f: F) -> Option<f64> {
    r.order(f).map(|o| o.slope)
}

pub fn galerkin_rates(r: &ConvergenceReport) -> Vec<CheckLine> {
    vec![
        within("galerkin velocity L2 order", slope(r, |x| x.errors.map(|e| e.velocity_l2)), GALERKIN_L2_ORDER),
        within("galerkin velocity H1 order", slope(r, |x| x.errors.map(|e| e.velocity_h1)), GALERKIN_H1_ORDER),
        within("galerkin pressure L2 order", slope(r, |x| x.errors.map(|e| e.pressure_l2)), GALERKIN_P_ORDER),
    ]
}

pub fn gap_rates(r: &ConvergenceReport) -> Vec<CheckLine> {
    let u = slope(r, |x| x.gap.map(|g| g.velocity_h1));
    let p = slope(r, |x| x.gap.map(|g| g.pressure_l2));
    let pressure = match (u, p) {
        (Some(u), Some(p)) => CheckLine {
            name: "two-level pressure gap order".into(),
            detail: format!("{p:.4} within {GAP_P_ORDER_DISTANCE} of {u:.4}"),
            pass: (p - u).abs() <= GAP_P_ORDER_DISTANCE,
        },
        _ => within("two-level pressure gap order", None, (0.0, 0.0)),
    };
    vec![within("two-level velocity gap order", u, GAP_H1_ORDER), pressure]
}

pub fn coupled_rate(r: &ConvergenceReport) -> Vec<CheckLine> {
    vec![within(
        "coupled total H1 order",
        slope(r, |x| x.errors.map(|e| e.velocity_h1)),
        COUPLED_H1_ORDER,
    )]
}

pub fn study(r: &StudyReport) -> Vec<CheckLine> {
    let mut lines = Vec::new();
    if !r.galerkin.records.is_empty() {
        lines.extend(galerkin_rates(&r.galerkin));
    }
    if !r.two_level.records.is_empty() {
        lines.extend(gap_rates(&r.two_level));
    }
    if !r.coupled.records.is_empty() {
        lines.extend(coupled_rate(&r.coupled));
    }
    lines
}

pub fn compare(r: &CompareReport) -> Vec<CheckLine> {
    let mut lines = vec![CheckLine {
        name: "cost ratio".into(),
        detail: format!("{:.4} < {COST_RATIO_MAX}", r.ratio),
        pass: r.ratio < COST_RATIO_MAX,
    }];
    if r.coarse_n == r.n {
        lines.push(CheckLine {
            name: "collapse relative H1 gap".into(),
            detail: format!("{:.3e} <= {COLLAPSE_RELATIVE_GAP:e}", r.relative_gap_h1),
            pass: r.relative_gap_h1 <= COLLAPSE_RELATIVE_GAP,
        });
    }
    lines
}

/// `|u^n| <= |u^0| + slack` at every step of an unforced run.
pub fn energy_bound(name: &str, run: &Outcome) -> CheckLine {
    let u0 = run.diagnostics.first().map_or(0.0, |d| d.l2_norm);
    let worst = run
        .diagnostics
        .iter()
        .map(|d| d.l2_norm - u0)
        .fold(f64::NEG_INFINITY, f64::max);
    CheckLine {
        name: name.to_string(),
        detail: format!("max(|u^n| - |u^0|) = {worst:.3e} over {} steps", run.diagnostics.len() - 1),
        pass: worst <= ENERGY_SLACK,
    }
}
