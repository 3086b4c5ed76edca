//! Single Galerkin and two-level runs built from a [`RunConfig`].

use std::sync::Arc;

use oldroyd_core::stepping::{
    run_simulation, Discretization, Forcing, InitialData, SimulationConfig, StepDiagnostics,
};
use oldroyd_core::twolevel::{run_two_level, TwoLevelTimings};
use oldroyd_core::verify::{error_norms, ErrorNorms};
use oldroyd_core::{ElementKind, FeSpace, Mesh, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Problem, RunConfig};
use crate::CliError;

/// Piecewise-linear field on the `n x n` mesh with independent uniform
/// random vertex values in `[-amplitude, amplitude]` and zero boundary values.
pub fn rough_field(n: usize, seed: u64, amplitude: f64) -> Result<Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>, CliError> {
    let space = FeSpace::new(Mesh::unit_square(n)?, ElementKind::P1P1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<f64> = (0..space.n_velocity())
        .map(|_| amplitude * rng.random_range(-1.0..1.0))
        .collect();
    space.apply_no_slip(&mut u);
    Ok(Arc::new(move |x| space.eval_velocity_at(&u, x).unwrap_or([0.0; 2])))
}

/// Forcing and initial data of the configured problem. Rough data live on
/// the mesh of the run's fine level.
pub fn simulation_config(cfg: &RunConfig) -> Result<SimulationConfig, CliError> {
    let (forcing, initial) = match &cfg.problem {
        Problem::Mms(case) => (case.forcing_field(), case.initial_data()),
        Problem::Zero => (Forcing::Zero, InitialData::Zero),
        Problem::Rough { amplitude } => (
            Forcing::Zero,
            InitialData::Field(rough_field(cfg.n, cfg.seed, *amplitude)?),
        ),
    };
    Ok(SimulationConfig {
        params: cfg.params,
        scheme: cfg.scheme,
        solver: cfg.solver,
        forcing,
        initial,
        final_time: cfg.final_time,
        keep_trajectory: false,
        keep_kernel_history: false,
    })
}

/// Final state and bookkeeping of one run.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub n: usize,
    pub coarse_n: Option<usize>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    /// Against the manufactured solution at the final time.
    pub errors: Option<ErrorNorms>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub wall_seconds: f64,
    /// Picard iterations over all nonlinear steps (coarse level for two-level runs).
    pub picard_total: usize,
    pub picard_failures: usize,
    pub timings: Option<TwoLevelTimings>,
}

impl Outcome {
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn coarse_h(&self) -> Option<f64> {
        self.coarse_n.map(|c| 1.0 / c as f64)
    }
}

fn errors(cfg: &RunConfig, disc: &Discretization, u: &[f64], p: &[f64]) -> Result<Option<ErrorNorms>, CliError> {
    Ok(match cfg.problem.mms() {
        Some(case) => Some(error_norms(&disc.space, u, p, case, cfg.final_time)?),
        None => None,
    })
}

/// Galerkin run on the `n x n` mesh.
pub fn galerkin(cfg: &RunConfig, n: usize) -> Result<(Discretization, Outcome), CliError> {
    let disc = Discretization::unit_square(n, cfg.element)?;
    let sim = simulation_config(cfg)?;
    let r = run_simulation(&disc, &sim)?;
    let errors = errors(cfg, &disc, &r.final_state.u, &r.final_state.p)?;
    let out = Outcome {
        n,
        coarse_n: None,
        errors,
        diagnostics: r.diagnostics,
        wall_seconds: r.wall_seconds,
        picard_total: r.picard_total,
        picard_failures: r.picard_failures.len(),
        timings: None,
        u: r.final_state.u,
        p: r.final_state.p,
    };
    Ok((disc, out))
}

/// Two-level run with coarse mesh `coarse_n` and fine mesh `n`.
pub fn two_level(cfg: &RunConfig, coarse_n: usize, n: usize) -> Result<(Discretization, Outcome), CliError> {
    let coarse = Discretization::unit_square(coarse_n, cfg.element)?;
    let fine = Discretization::unit_square(n, cfg.element)?;
    let sim = simulation_config(cfg)?;
    let r = run_two_level(&coarse, &fine, &sim)?;
    let errors = errors(cfg, &fine, &r.fine.final_state.u, &r.fine.final_state.p)?;
    let out = Outcome {
        n,
        coarse_n: Some(coarse_n),
        errors,
        diagnostics: r.fine.diagnostics,
        wall_seconds: r.timings.total,
        picard_total: r.coarse.picard_total,
        picard_failures: r.coarse.picard_failures.len(),
        timings: Some(r.timings),
        u: r.fine.final_state.u,
        p: r.fine.final_state.p,
    };
    Ok((fine, out))
}
