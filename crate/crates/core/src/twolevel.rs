//! Two-level scheme: a nonlinear Galerkin run on a coarse mesh, then a
//! linear run on a nested fine mesh in which the convection is the load
//! `b(u_H, u_H, phi_h)` taken from the coarse velocity at the same time.
//!
//! Only the meshes are nested. MINI bubbles do not nest, so the coarse
//! velocity is evaluated exactly at the fine quadrature points instead of
//! being interpolated into the fine space.

use std::time::Instant;

use rayon::prelude::*;

use crate::assembly::{trilinear_rule, trilinear_vector_from_fields, QuadratureField};
use crate::error::{check_len, Error, Result};
use crate::fespace::FeSpace;
use crate::quadrature::QuadratureRule;
use crate::stepping::{run_simulation, run_with, Discretization, SimulationConfig, SimulationResult};

/// Location of every fine quadrature point in the coarse mesh, entry
/// `t * n_points + q`.
#[derive(Clone, Debug)]
pub struct CrossMeshMap {
    n_points: usize,
    locations: Vec<(usize, [f64; 3])>,
}

impl CrossMeshMap {
    /// Fails unless `fine` is the coarse mesh refined uniformly `k >= 0` times.
    pub fn new(coarse: &FeSpace, fine: &FeSpace, rule: &QuadratureRule) -> Result<Self> {
        let (cm, fm) = (coarse.mesh(), fine.mesh());
        let ancestors = cm.ancestors_of(fm)?;
        let locations = (0..fm.n_triangles())
            .into_par_iter()
            .flat_map_iter(|t| {
                let anc = ancestors[t];
                rule.points()
                    .iter()
                    .map(move |&l| cm.locate(fm.point_from_barycentric(t, l), Some(anc)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n_points: rule.len(),
            locations,
        })
    }

    /// Value and gradient of the coarse velocity `u_coarse` at every fine
    /// quadrature point.
    pub fn evaluate(&self, coarse: &FeSpace, u_coarse: &[f64]) -> Result<QuadratureField> {
        check_len(coarse.n_velocity(), u_coarse.len())?;
        let (values, grads) = self
            .locations
            .par_iter()
            .map(|&(t, l)| coarse.eval_velocity(u_coarse, t, l))
            .unzip();
        Ok(QuadratureField {
            n_points: self.n_points,
            values,
            grads,
        })
    }
}

/// `u_H` sampled at the trilinear quadrature points of the fine space.
pub fn eval_coarse_at_fine_quadrature(u_coarse: &[f64], fine: &FeSpace, coarse: &FeSpace) -> Result<QuadratureField> {
    CrossMeshMap::new(coarse, fine, &trilinear_rule(fine))?.evaluate(coarse, u_coarse)
}

/// Frozen convection load `r_i = b(u_H, u_H, phi_i)` on the fine space.
pub struct FrozenConvection<'a> {
    coarse: &'a FeSpace,
    fine: &'a FeSpace,
    rule: QuadratureRule,
    map: CrossMeshMap,
}

impl<'a> FrozenConvection<'a> {
    pub fn new(coarse: &'a FeSpace, fine: &'a FeSpace) -> Result<Self> {
        if coarse.kind() != fine.kind() {
            return Err(Error::InvalidArgument("coarse and fine spaces use different elements".into()));
        }
        let rule = trilinear_rule(fine);
        let map = CrossMeshMap::new(coarse, fine, &rule)?;
        Ok(Self { coarse, fine, rule, map })
    }

    pub fn load(&self, u_coarse: &[f64]) -> Result<Vec<f64>> {
        let field = self.map.evaluate(self.coarse, u_coarse)?;
        Ok(trilinear_vector_from_fields(self.fine, &self.rule, &field, &field))
    }
}

/// Wall-clock split of a two-level run, in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TwoLevelTimings {
    pub coarse: f64,
    /// Point location plus the per-step frozen-convection assembly.
    pub transfer: f64,
    /// Fine linear solves, excluding `transfer`.
    pub fine: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct TwoLevelResult {
    /// Coarse Galerkin run; its trajectory holds every coarse time level.
    pub coarse: SimulationResult,
    pub fine: SimulationResult,
    pub timings: TwoLevelTimings,
}

/// Coarse Galerkin run from `P_H u_0`, keeping the velocity at every step.
pub fn run_first_level(coarse: &Discretization, cfg: &SimulationConfig) -> Result<SimulationResult> {
    let cfg = SimulationConfig {
        keep_trajectory: true,
        ..cfg.clone()
    };
    run_simulation(coarse, &cfg)
}

/// Both levels with the same scheme, step and data. The fine run starts
/// from `P_h u_0`; step `n` consumes the coarse velocity at step `n`.
pub fn run_two_level(coarse: &Discretization, fine: &Discretization, cfg: &SimulationConfig) -> Result<TwoLevelResult> {
    let start = Instant::now();
    let t0 = Instant::now();
    let transfer = FrozenConvection::new(&coarse.space, &fine.space)?;
    let setup_seconds = t0.elapsed().as_secs_f64();
    let mut step_transfer = 0.0;

    let first = run_first_level(coarse, cfg)?;
    let trajectory = first.trajectory.as_ref().expect("first level keeps its trajectory");
    let nsteps = cfg.scheme.steps_to(cfg.final_time)?;
    if trajectory.len() != nsteps + 1 {
        return Err(Error::InvalidArgument(format!(
            "coarse trajectory has {} time levels, fine run needs {}",
            trajectory.len(),
            nsteps + 1
        )));
    }

    let second = run_with(fine, cfg, |stepper, state| {
        let t0 = Instant::now();
        let conv = transfer.load(&trajectory[state.step + 1])?;
        step_transfer += t0.elapsed().as_secs_f64();
        stepper.step_linearized(state, &conv, &cfg.forcing)
    })?;
    let timings = TwoLevelTimings {
        coarse: first.wall_seconds,
        transfer: setup_seconds + step_transfer,
        fine: (second.wall_seconds - step_transfer).max(0.0),
        total: start.elapsed().as_secs_f64(),
    };
    Ok(TwoLevelResult {
        coarse: first,
        fine: second,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::assembly::assemble_trilinear_vector;
    use crate::fespace::ElementKind;
    use crate::memory::OldroydParams;
    use crate::mesh::{Mesh, Point};
    use crate::solver::SolverConfig;
    use crate::stepping::{Forcing, InitialData, TimeScheme, TimeSchemeKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_velocity(space: &FeSpace, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u: Vec<f64> = (0..space.n_velocity()).map(|_| rng.random_range(-1.0..1.0)).collect();
        space.apply_no_slip(&mut u);
        u
    }

    fn space(n: usize, kind: ElementKind) -> FeSpace {
        FeSpace::new(Mesh::unit_square(n).unwrap(), kind)
    }

    #[test]
    fn same_mesh_matches_direct_evaluation() {
        for kind in [ElementKind::Mini, ElementKind::TaylorHood] {
            let s = space(4, kind);
            let u = random_velocity(&s, 1);
            let rule = trilinear_rule(&s);
            let cross = eval_coarse_at_fine_quadrature(&u, &s, &s).unwrap();
            let direct = QuadratureField::from_coefficients(&s, &rule, &u);
            for (a, b) in cross.values.iter().zip(&direct.values) {
                assert!((a[0] - b[0]).abs() <= 1e-14 && (a[1] - b[1]).abs() <= 1e-14);
            }
            for (a, b) in cross.grads.iter().zip(&direct.grads) {
                for c in 0..2 {
                    for d in 0..2 {
                        assert!((a[c][d] - b[c][d]).abs() <= 1e-13 * (1.0 + b[c][d].abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn linear_field_is_reproduced() {
        let coarse = space(2, ElementKind::Mini);
        let fine = space(8, ElementKind::Mini);
        let f = |p: Point| [1.0 + 2.0 * p[0] - 3.0 * p[1], -0.5 + p[0] + 4.0 * p[1]];
        let u = coarse.interpolate(f);
        let rule = trilinear_rule(&fine);
        let field = eval_coarse_at_fine_quadrature(&u, &fine, &coarse).unwrap();
        let fm = fine.mesh();
        for t in 0..fm.n_triangles() {
            for (q, &l) in rule.points().iter().enumerate() {
                let exact = f(fm.point_from_barycentric(t, l));
                let k = t * rule.len() + q;
                for c in 0..2 {
                    assert!((field.values[k][c] - exact[c]).abs() <= 1e-13);
                }
                assert!((field.grads[k][0][0] - 2.0).abs() <= 1e-13);
                assert!((field.grads[k][1][1] - 4.0).abs() <= 1e-13);
            }
        }
    }

    /// Taylor-Hood spaces nest, so re-interpolating `u_H` on the fine mesh is
    /// exact and the same-mesh assembly is an independent oracle.
    #[test]
    fn convection_matches_reinterpolation_oracle() {
        let coarse = space(2, ElementKind::TaylorHood);
        let fine = space(8, ElementKind::TaylorHood);
        let u = random_velocity(&coarse, 7);
        let on_fine = fine.interpolate(|x| coarse.eval_velocity_at(&u, x).unwrap());
        let oracle = assemble_trilinear_vector(&fine, &on_fine, &on_fine).unwrap();
        let got = FrozenConvection::new(&coarse, &fine).unwrap().load(&u).unwrap();
        let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in got.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
        }
    }

    /// MINI bubbles do not nest; the oracle integrates with a higher-degree
    /// rule and locates every point without ancestor hints.
    #[test]
    fn mini_convection_matches_brute_force_quadrature() {
        let coarse = space(2, ElementKind::Mini);
        let fine = space(8, ElementKind::Mini);
        let u = random_velocity(&coarse, 9);
        let got = FrozenConvection::new(&coarse, &fine).unwrap().load(&u).unwrap();

        let rule = QuadratureRule::new(10).unwrap();
        let fm = fine.mesh();
        let ns = fine.n_scalar();
        let mut oracle = vec![0.0; fine.n_velocity()];
        for t in 0..fm.n_triangles() {
            let jac = 2.0 * fine.area(t);
            for (l, w) in rule.iter() {
                let x = fm.point_from_barycentric(t, *l);
                let (ct, cl) = coarse.mesh().locate(x, None).unwrap();
                let (v, g) = coarse.eval_velocity(&u, ct, cl);
                let b = fine.eval_basis(t, *l).unwrap();
                for (i, &dof) in fine.cell_dofs(t).iter().enumerate() {
                    let vgrad_phi = v[0] * b.grads[i][0] + v[1] * b.grads[i][1];
                    for c in 0..2 {
                        let conv = v[0] * g[c][0] + v[1] * g[c][1];
                        oracle[c * ns + dof] += 0.5 * w * jac * (conv * b.values[i] - vgrad_phi * v[c]);
                    }
                }
            }
        }
        let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in got.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_non_nested_pairs() {
        let a = space(4, ElementKind::Mini);
        let b = space(6, ElementKind::Mini);
        assert!(matches!(FrozenConvection::new(&a, &b), Err(Error::NestingViolation(_))));
        let c = space(2, ElementKind::Mini);
        assert!(FrozenConvection::new(&a, &c).is_err());
        let d = space(8, ElementKind::TaylorHood);
        assert!(FrozenConvection::new(&a, &d).is_err());
    }

    fn config(scheme: TimeScheme, forcing: Forcing, initial: InitialData, t: f64) -> SimulationConfig {
        SimulationConfig {
            params: OldroydParams::from_physical(1.0, 0.5, 1.0).unwrap(),
            scheme,
            solver: SolverConfig::default(),
            forcing,
            initial,
            final_time: t,
            keep_trajectory: false,
            keep_kernel_history: false,
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let c = Discretization::unit_square(2, ElementKind::Mini).unwrap();
        let f = Discretization::unit_square(4, ElementKind::Mini).unwrap();
        let s = TimeScheme::new(TimeSchemeKind::Bdf2, 0.05).unwrap();
        let r = run_two_level(&c, &f, &config(s, Forcing::Zero, InitialData::Zero, 0.25)).unwrap();
        for st in [&r.coarse.final_state, &r.fine.final_state] {
            assert!(st.u.iter().chain(&st.p).all(|&v| v == 0.0));
        }
        assert_eq!(r.coarse.trajectory.as_ref().unwrap().len(), 6);
    }

    #[test]
    fn first_level_is_the_coarse_galerkin_run() {
        let c = Discretization::unit_square(4, ElementKind::Mini).unwrap();
        let s = TimeScheme::new(TimeSchemeKind::ImplicitEuler, 0.05).unwrap();
        let force: Forcing = Forcing::Field(Arc::new(|p: Point, t: f64| [p[1] * t.cos(), -p[0]]));
        let cfg = config(s, force, InitialData::Zero, 0.2);
        let a = run_first_level(&c, &cfg).unwrap();
        let b = run_simulation(&c, &cfg).unwrap();
        assert_eq!(a.final_state, b.final_state);
    }

    /// With `H = h` the linear step at the converged coarse velocity has the
    /// Galerkin solution as its unique solution.
    #[test]
    fn equal_meshes_collapse_to_galerkin() {
        let c = Discretization::unit_square(4, ElementKind::Mini).unwrap();
        let f = Discretization::unit_square(4, ElementKind::Mini).unwrap();
        let s = TimeScheme::new(TimeSchemeKind::Bdf2, 0.05)
            .unwrap()
            .with_picard(1e-12, 100)
            .unwrap();
        let init = InitialData::Field(Arc::new(|p: Point| {
            let (x, y) = (p[0], p[1]);
            [
                20.0 * x * x * (1.0 - x).powi(2) * y * (1.0 - y) * (1.0 - 2.0 * y),
                -20.0 * y * y * (1.0 - y).powi(2) * x * (1.0 - x) * (1.0 - 2.0 * x),
            ]
        }));
        let force = Forcing::Field(Arc::new(|p: Point, t: f64| [10.0 * (p[1] - 0.5) * t.cos(), 10.0 * p[0] * p[0]]));
        let r = run_two_level(&c, &f, &config(s, force, init, 0.5)).unwrap();
        let gap: Vec<f64> = r
            .fine
            .final_state
            .u
            .iter()
            .zip(&r.coarse.final_state.u)
            .map(|(a, b)| a - b)
            .collect();
        let rel = f.h1_seminorm(&gap) / f.h1_seminorm(&r.coarse.final_state.u);
        assert!(rel <= 1e-8, "relative gap {rel}");
        assert!(r.timings.total >= r.timings.coarse);
    }
}
