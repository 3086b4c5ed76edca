//! Run configuration: a TOML file of flat `key = value` pairs grouped in
//! sections.
//!
//! ```toml
//! [model]
//! nu = 1.0          # or mu / gamma / delta
//! kappa = 0.5
//! lambda = 1.0
//!
//! [mesh]
//! n = 32            # fine mesh, h = 1/n
//! coarse_n = 8      # optional: two-level run with H = 1/coarse_n
//! element = "mini"
//!
//! [time]
//! scheme = "bdf2"
//! dt = 5e-4
//! T = 0.25
//! kernel_rule = "pw_linear_exact"
//!
//! [problem]
//! kind = "mms"      # mms | zero | rough
//! case = "default"
//! ```

use std::path::{Path, PathBuf};

use oldroyd_core::solver::{SolverConfig, SolverMethod};
use oldroyd_core::stepping::{TimeScheme, TimeSchemeKind};
use oldroyd_core::verify::{mms_case, MmsCase};
use oldroyd_core::{ElementKind, KernelRule, OldroydParams};
use serde::Deserialize;

/// A rejected configuration; `key` is the offending `section.key`.
#[derive(Debug, thiserror::Error)]
#[error("config key '{key}': {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: key.to_string(),
            message: message.into(),
        }
    }

    fn missing(key: &str) -> Self {
        Self::new(key, "missing")
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    nu: Option<f64>,
    kappa: Option<f64>,
    lambda: Option<f64>,
    mu: Option<f64>,
    gamma: Option<f64>,
    delta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    n: Option<usize>,
    coarse_n: Option<usize>,
    element: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    scheme: Option<String>,
    dt: Option<f64>,
    #[serde(rename = "T")]
    t_final: Option<f64>,
    kernel_rule: Option<String>,
    picard_tol: Option<f64>,
    picard_max: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    method: Option<String>,
    tolerance: Option<f64>,
    max_iterations: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    kind: Option<String>,
    case: Option<String>,
    amplitude: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConvergence {
    galerkin_n: Option<Vec<usize>>,
    two_level_fine_n: Option<usize>,
    two_level_coarse_n: Option<Vec<usize>>,
    coupled: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    vtk: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<RawModel>,
    mesh: Option<RawMesh>,
    time: Option<RawTime>,
    solver: Option<RawSolver>,
    problem: Option<RawProblem>,
    convergence: Option<RawConvergence>,
    output: Option<RawOutput>,
}

/// Data of the simulated problem.
#[derive(Clone, Debug)]
pub enum Problem {
    /// Manufactured solution with its derived forcing and initial velocity.
    Mms(MmsCase),
    /// `f = 0`, `u_0 = 0`.
    Zero,
    /// `f = 0` and a rough initial velocity: random interior values of a
    /// piecewise-linear field on the fine mesh.
    Rough { amplitude: f64 },
}

impl Problem {
    pub fn mms(&self) -> Option<&MmsCase> {
        match self {
            Problem::Mms(c) => Some(c),
            _ => None,
        }
    }
}

/// Mesh sizes of the convergence study, as divisions `n = 1/h`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceConfig {
    pub galerkin_n: Vec<usize>,
    pub two_level_fine_n: usize,
    pub two_level_coarse_n: Vec<usize>,
    /// `(coarse n, fine n)` pairs with `H = sqrt(h)`.
    pub coupled: Vec<(usize, usize)>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            galerkin_n: vec![8, 16, 32],
            two_level_fine_n: 64,
            two_level_coarse_n: vec![4, 8, 16],
            coupled: vec![(4, 16), (8, 64)],
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub params: OldroydParams,
    pub element: ElementKind,
    pub n: usize,
    pub coarse_n: Option<usize>,
    pub scheme: TimeScheme,
    pub final_time: f64,
    pub solver: SolverConfig,
    pub problem: Problem,
    pub seed: u64,
    pub convergence: ConvergenceConfig,
    pub out_dir: PathBuf,
    pub vtk: bool,
}

fn parse_enum<T: std::str::FromStr>(key: &str, value: Option<String>, default: T) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    match value {
        None => Ok(default),
        Some(v) => v.parse().map_err(|e: T::Err| ConfigError::new(key, e.to_string())),
    }
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::new(key, format!("must be positive (got {v})")))
    }
}

fn nested(key: &str, coarse: usize, fine: usize) -> Result<(), ConfigError> {
    if coarse == 0 || fine % coarse != 0 || !(fine / coarse).is_power_of_two() {
        return Err(ConfigError::new(
            key,
            format!("coarse n={coarse} must divide fine n={fine} by a power of two"),
        ));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            // serde names the unknown or mistyped field in its message
            ConfigError::new("toml", msg)
        })?;
        Self::validate(raw)
    }

    fn validate(raw: RawConfig) -> Result<Self, ConfigError> {
        let model = raw.model.ok_or_else(|| ConfigError::missing("model"))?;
        let physical = [model.nu, model.kappa, model.lambda];
        let direct = [model.mu, model.gamma, model.delta];
        let params = match (physical.iter().any(Option::is_some), direct.iter().any(Option::is_some)) {
            (true, true) => {
                return Err(ConfigError::new(
                    "model",
                    "give either (nu, kappa, lambda) or (mu, gamma, delta), not both",
                ))
            }
            (false, false) => return Err(ConfigError::new("model", "missing (nu, kappa, lambda) or (mu, gamma, delta)")),
            (true, false) => {
                let nu = model.nu.ok_or_else(|| ConfigError::missing("model.nu"))?;
                let kappa = model.kappa.ok_or_else(|| ConfigError::missing("model.kappa"))?;
                let lambda = model.lambda.ok_or_else(|| ConfigError::missing("model.lambda"))?;
                OldroydParams::from_physical(nu, kappa, lambda).map_err(|e| ConfigError::new("model", e.to_string()))?
            }
            (false, true) => {
                let mu = model.mu.ok_or_else(|| ConfigError::missing("model.mu"))?;
                let gamma = model.gamma.ok_or_else(|| ConfigError::missing("model.gamma"))?;
                let delta = model.delta.ok_or_else(|| ConfigError::missing("model.delta"))?;
                OldroydParams::from_coefficients(mu, gamma, delta).map_err(|e| ConfigError::new("model", e.to_string()))?
            }
        };

        let mesh = raw.mesh.ok_or_else(|| ConfigError::missing("mesh"))?;
        let n = mesh.n.ok_or_else(|| ConfigError::missing("mesh.n"))?;
        if n == 0 {
            return Err(ConfigError::new("mesh.n", "must be at least 1"));
        }
        if let Some(c) = mesh.coarse_n {
            nested("mesh.coarse_n", c, n)?;
        }
        let element = parse_enum("mesh.element", mesh.element, ElementKind::Mini)?;

        let time = raw.time.ok_or_else(|| ConfigError::missing("time"))?;
        let kind = parse_enum("time.scheme", time.scheme, TimeSchemeKind::ImplicitEuler)?;
        let dt = positive("time.dt", time.dt.ok_or_else(|| ConfigError::missing("time.dt"))?)?;
        let final_time = time.t_final.ok_or_else(|| ConfigError::missing("T"))?;
        if !(final_time.is_finite() && final_time >= 0.0) {
            return Err(ConfigError::new("T", format!("must be nonnegative (got {final_time})")));
        }
        let rule = parse_enum("time.kernel_rule", time.kernel_rule, KernelRule::RightRect)?;
        let mut scheme = TimeScheme::new(kind, dt)
            .map_err(|e| ConfigError::new("time.dt", e.to_string()))?
            .with_kernel_rule(rule);
        if time.picard_tol.is_some() || time.picard_max.is_some() {
            scheme = scheme
                .with_picard(
                    time.picard_tol.unwrap_or(scheme.picard_tol),
                    time.picard_max.unwrap_or(scheme.picard_max),
                )
                .map_err(|e| ConfigError::new("time.picard_tol", e.to_string()))?;
        }
        scheme
            .steps_to(final_time)
            .map_err(|e| ConfigError::new("T", e.to_string()))?;

        let solver_raw = raw.solver.unwrap_or_default();
        let mut solver = SolverConfig::default();
        solver.method = parse_enum("solver.method", solver_raw.method, SolverMethod::SparseLu)?;
        if let Some(t) = solver_raw.tolerance {
            solver.tolerance = t;
        }
        if let Some(m) = solver_raw.max_iterations {
            solver.max_iterations = m;
        }
        solver
            .validate()
            .map_err(|e| ConfigError::new("solver", e.to_string()))?;

        let problem_raw = raw.problem.unwrap_or_default();
        let amplitude = problem_raw.amplitude.map(|a| positive("problem.amplitude", a)).transpose()?;
        let problem = match problem_raw.kind.as_deref().unwrap_or("mms") {
            "mms" => {
                let id = problem_raw.case.as_deref().unwrap_or("default");
                let case = mms_case(id, params).map_err(|e| ConfigError::new("problem.case", e.to_string()))?;
                let case = match amplitude {
                    Some(a) => case
                        .with_amplitude(a)
                        .map_err(|e| ConfigError::new("problem.amplitude", e.to_string()))?,
                    None => case,
                };
                Problem::Mms(case)
            }
            "zero" => Problem::Zero,
            "rough" => Problem::Rough {
                amplitude: amplitude.unwrap_or(1.0),
            },
            other => {
                return Err(ConfigError::new(
                    "problem.kind",
                    format!("unknown kind '{other}' (expected mms, zero or rough)"),
                ))
            }
        };

        let conv_raw = raw.convergence.unwrap_or_default();
        let defaults = ConvergenceConfig::default();
        let convergence = ConvergenceConfig {
            galerkin_n: conv_raw.galerkin_n.unwrap_or(defaults.galerkin_n),
            two_level_fine_n: conv_raw.two_level_fine_n.unwrap_or(defaults.two_level_fine_n),
            two_level_coarse_n: conv_raw.two_level_coarse_n.unwrap_or(defaults.two_level_coarse_n),
            coupled: conv_raw
                .coupled
                .map(|v| v.into_iter().map(|[c, f]| (c, f)).collect())
                .unwrap_or(defaults.coupled),
        };
        for &c in &convergence.two_level_coarse_n {
            nested("convergence.two_level_coarse_n", c, convergence.two_level_fine_n)?;
        }
        for &(c, f) in &convergence.coupled {
            nested("convergence.coupled", c, f)?;
        }
        if convergence.galerkin_n.contains(&0) {
            return Err(ConfigError::new("convergence.galerkin_n", "mesh divisions must be at least 1"));
        }

        let output = raw.output.unwrap_or_default();
        Ok(Self {
            params,
            element,
            n,
            coarse_n: mesh.coarse_n,
            scheme,
            final_time,
            solver,
            problem,
            seed: problem_raw.seed.unwrap_or(1),
            convergence,
            out_dir: output.dir.unwrap_or_else(|| PathBuf::from("out")),
            vtk: output.vtk.unwrap_or(false),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[model]
nu = 1.0
kappa = 0.5
lambda = 1.0

[mesh]
n = 8

[time]
scheme = "bdf2"
dt = 0.01
T = 0.1
"#;

    #[test]
    fn parses_minimal_config() {
        let c = RunConfig::from_toml(BASE).unwrap();
        assert_eq!(c.n, 8);
        assert_eq!(c.element, ElementKind::Mini);
        assert_eq!(c.scheme.kind, TimeSchemeKind::Bdf2);
        assert!((c.params.mu - 1.0).abs() < 1e-15 && (c.params.gamma - 1.0).abs() < 1e-15);
        assert!(matches!(c.problem, Problem::Mms(_)));
        assert_eq!(c.convergence, ConvergenceConfig::default());
    }

    #[test]
    fn missing_final_time_names_t() {
        let text = BASE.replace("T = 0.1\n", "");
        let e = RunConfig::from_toml(&text).unwrap_err();
        assert_eq!(e.key, "T");
        assert!(e.to_string().contains("'T'"));
    }

    #[test]
    fn rejects_mixed_and_partial_parameters() {
        let mixed = BASE.replace("lambda = 1.0", "lambda = 1.0\nmu = 2.0");
        assert_eq!(RunConfig::from_toml(&mixed).unwrap_err().key, "model");
        let partial = BASE.replace("kappa = 0.5\n", "");
        assert_eq!(RunConfig::from_toml(&partial).unwrap_err().key, "model.kappa");
        let direct = BASE.replace("nu = 1.0\nkappa = 0.5\nlambda = 1.0", "mu = 1.0\ngamma = 0.0\ndelta = 2.0");
        let c = RunConfig::from_toml(&direct).unwrap();
        assert_eq!(c.params.physical, None);
    }

    #[test]
    fn rejects_bad_values() {
        let cases = [
            (BASE.replace("dt = 0.01", "dt = -1.0"), "time.dt"),
            (BASE.replace("T = 0.1", "T = 0.105"), "T"),
            (BASE.replace("n = 8", "n = 8\ncoarse_n = 3"), "mesh.coarse_n"),
            (BASE.replace("n = 8", "n = 8\nelement = \"q2\""), "mesh.element"),
            (format!("{BASE}\n[problem]\nkind = \"wild\"\n"), "problem.kind"),
            (format!("{BASE}\n[problem]\ncase = \"other\"\n"), "problem.case"),
            (format!("{BASE}\n[solver]\ntolerance = 0.5\n"), "solver"),
        ];
        for (text, key) in cases {
            assert_eq!(RunConfig::from_toml(&text).unwrap_err().key, key, "{text}");
        }
        let unknown = BASE.replace("n = 8", "n = 8\nsize = 3");
        let e = RunConfig::from_toml(&unknown).unwrap_err();
        assert!(e.message.contains("size"), "{e}");
    }
}
