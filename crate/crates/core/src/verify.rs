//! Manufactured solutions, error and gap norms, observed orders.
//!
//! The default case is built from the stream function
//! `psi = x^2 (1-x)^2 y^2 (1-y)^2`, so the exact velocity
//! `u* = A curl(psi) e^{-t}` is divergence free and vanishes to second order
//! on the boundary. The pressure is `p* = (x - 1/2)(y - 1/2) cos t`, which has
//! zero mean. The forcing is derived in closed form, including the memory
//! integral `int_0^t gamma e^{-delta (t-s)} e^{-s} ds`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assembly::{AssembledOperators, LOAD_DEGREE};
use crate::error::{check_len, Error, Result};
use crate::fespace::FeSpace;
use crate::memory::OldroydParams;
use crate::mesh::Point;
use crate::quadrature::QuadratureRule;
use crate::stepping::{Forcing, InitialData};

/// `X(s) = s^2 (1-s)^2` and its first four derivatives.
fn profile(s: f64) -> [f64; 5] {
    let q = s * (1.0 - s);
    [
        q * q,
        2.0 * q * (1.0 - 2.0 * s),
        2.0 * (1.0 - 6.0 * s + 6.0 * s * s),
        12.0 * (2.0 * s - 1.0),
        24.0,
    ]
}

/// `int_0^t e^{-delta (t-s)} e^{-s} ds`, stable for `delta` near 1.
pub fn memory_time_factor(delta: f64, t: f64) -> f64 {
    let d = delta - 1.0;
    if d == 0.0 {
        t * (-t).exp()
    } else {
        (-t).exp() * -(-d * t).exp_m1() / d
    }
}

#[derive(Clone, Debug)]
pub struct MmsCase {
    id: String,
    params: OldroydParams,
    amplitude: f64,
}

/// Known ids: `"default"`.
pub fn mms_case(id: &str, params: OldroydParams) -> Result<MmsCase> {
    let case = match id {
        "default" => MmsCase {
            id: id.to_string(),
            params,
            amplitude: 1.0,
        },
        other => return Err(Error::UnknownCase(other.to_string())),
    };
    case.check_invariants()?;
    Ok(case)
}

impl MmsCase {
    /// Scales the velocity; the forcing scales accordingly.
    pub fn with_amplitude(mut self, amplitude: f64) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(Error::InvalidArgument(format!("amplitude must be positive (got {amplitude})")));
        }
        self.amplitude = amplitude;
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn params(&self) -> &OldroydParams {
        &self.params
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    fn time_factor(&self, t: f64) -> f64 {
        self.amplitude * (-t).exp()
    }

    /// Velocity, gradient (`g[c][d] = d u_c / d x_d`) and Laplacian of
    /// `curl(psi)`, without the time factor.
    fn spatial(x: Point) -> ([f64; 2], [[f64; 2]; 2], [f64; 2]) {
        let [xa, xb, xc, xd, _] = profile(x[0]);
        let [ya, yb, yc, yd, _] = profile(x[1]);
        let u = [xa * yb, -xb * ya];
        let g = [[xb * yb, xa * yc], [-xc * ya, -xb * yb]];
        let lap = [xc * yb + xa * yd, -xd * ya - xb * yc];
        (u, g, lap)
    }

    pub fn velocity(&self, x: Point, t: f64) -> [f64; 2] {
        let s = self.time_factor(t);
        Self::spatial(x).0.map(|v| s * v)
    }

    pub fn velocity_gradient(&self, x: Point, t: f64) -> [[f64; 2]; 2] {
        let s = self.time_factor(t);
        Self::spatial(x).1.map(|r| r.map(|v| s * v))
    }

    pub fn pressure(&self, x: Point, t: f64) -> f64 {
        (x[0] - 0.5) * (x[1] - 0.5) * t.cos()
    }

    /// `f = u_t + u.grad u - mu lap u - int_0^t beta(t-s) lap u(s) ds + grad p`.
    pub fn forcing(&self, x: Point, t: f64) -> [f64; 2] {
        let (u, g, lap) = Self::spatial(x);
        let s = self.time_factor(t);
        let mem = self.params.gamma * self.amplitude * memory_time_factor(self.params.delta, t);
        let grad_p = [(x[1] - 0.5) * t.cos(), (x[0] - 0.5) * t.cos()];
        let mut f = [0.0; 2];
        for c in 0..2 {
            let conv = u[0] * g[c][0] + u[1] * g[c][1];
            f[c] = -s * u[c] + s * s * conv - self.params.mu * s * lap[c] - mem * lap[c] + grad_p[c];
        }
        f
    }

    pub fn forcing_field(&self) -> Forcing {
        let case = self.clone();
        Forcing::Field(Arc::new(move |x, t| case.forcing(x, t)))
    }

    pub fn initial_data(&self) -> InitialData {
        let case = self.clone();
        InitialData::Field(Arc::new(move |x| case.velocity(x, 0.0)))
    }

    fn check_invariants(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..200 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let t = rng.random::<f64>();
            let g = self.velocity_gradient(x, t);
            if (g[0][0] + g[1][1]).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("case '{}' is not divergence free", self.id)));
            }
            let s = rng.random::<f64>();
            let side = [[s, 0.0], [s, 1.0], [0.0, s], [1.0, s]][rng.random_range(0..4)];
            if self.velocity(side, t).iter().any(|v| v.abs() > 1e-12) {
                return Err(Error::InvalidArgument(format!("case '{}' violates no-slip", self.id)));
            }
        }
        let rule = QuadratureRule::new(LOAD_DEGREE)?;
        let mesh = crate::mesh::Mesh::unit_square(4)?;
        let mut mean = 0.0;
        for tri in 0..mesh.n_triangles() {
            let area = mesh.signed_area(tri);
            for (l, w) in rule.iter() {
                mean += 2.0 * area * w * self.pressure(mesh.point_from_barycentric(tri, *l), 0.0);
            }
        }
        if mean.abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("case '{}' pressure has mean {mean}", self.id)));
        }
        Ok(())
    }
}

/// Errors of a discrete solution at one time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorNorms {
    pub velocity_l2: f64,
    /// `|grad (u - u_h)|_{L2}`
    pub velocity_h1: f64,
    /// Both pressures shifted to zero mean first.
    pub pressure_l2: f64,
}

/// Errors against an arbitrary exact pair, by element quadrature.
pub fn error_norms_against<U, P>(space: &FeSpace, u: &[f64], p: &[f64], exact_u: U, exact_p: P) -> Result<ErrorNorms>
where
    U: Fn(Point) -> ([f64; 2], [[f64; 2]; 2]) + Sync,
    P: Fn(Point) -> f64 + Sync,
{
    check_len(space.n_velocity(), u.len())?;
    check_len(space.n_pressure(), p.len())?;
    let rule = QuadratureRule::new(LOAD_DEGREE)?;
    let mesh = space.mesh();
    let nt = mesh.n_triangles();
    let pt = |t: usize, l: &[f64; 3]| mesh.point_from_barycentric(t, *l);

    // per-triangle partial sums are added in triangle order for
    // run-to-run reproducibility
    // [int p_h, int p*, area]
    let means = (0..nt)
        .into_par_iter()
        .map(|t| {
            let jac = 2.0 * space.area(t);
            let mut acc = [0.0; 3];
            for (l, w) in rule.iter() {
                acc[0] += w * jac * space.eval_pressure(p, t, *l);
                acc[1] += w * jac * exact_p(pt(t, l));
                acc[2] += w * jac;
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold([0.0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]]);
    let (mean_h, mean_x) = (means[0] / means[2], means[1] / means[2]);

    let sums = (0..nt)
        .into_par_iter()
        .map(|t| {
            let jac = 2.0 * space.area(t);
            let mut acc = [0.0; 3];
            for (l, w) in rule.iter() {
                let x = pt(t, l);
                let (uh, gh) = space.eval_velocity(u, t, *l);
                let (ue, ge) = exact_u(x);
                for c in 0..2 {
                    acc[0] += w * jac * (uh[c] - ue[c]).powi(2);
                    for d in 0..2 {
                        acc[1] += w * jac * (gh[c][d] - ge[c][d]).powi(2);
                    }
                }
                let dp = (space.eval_pressure(p, t, *l) - mean_h) - (exact_p(x) - mean_x);
                acc[2] += w * jac * dp * dp;
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold([0.0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]]);
    Ok(ErrorNorms {
        velocity_l2: sums[0].sqrt(),
        velocity_h1: sums[1].sqrt(),
        pressure_l2: sums[2].sqrt(),
    })
}

/// Errors of `(u, p)` against the manufactured solution at time `t`.
pub fn error_norms(space: &FeSpace, u: &[f64], p: &[f64], case: &MmsCase, t: f64) -> Result<ErrorNorms> {
    error_norms_against(
        space,
        u,
        p,
        |x| (case.velocity(x, t), case.velocity_gradient(x, t)),
        |x| case.pressure(x, t),
    )
}

/// Norms of the difference of two discrete solutions on one space.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GapNorms {
    pub velocity_l2: f64,
    pub velocity_h1: f64,
    /// Pressure difference with its weighted mean removed.
    pub pressure_l2: f64,
}

pub fn gap_norms(ops: &AssembledOperators, u_a: &[f64], p_a: &[f64], u_b: &[f64], p_b: &[f64]) -> Result<GapNorms> {
    let nv = ops.mass.nrows();
    let np = ops.pressure_mass.nrows();
    for (n, v) in [(nv, u_a), (nv, u_b), (np, p_a), (np, p_b)] {
        check_len(n, v.len())?;
    }
    let du: Vec<f64> = u_a.iter().zip(u_b).map(|(a, b)| a - b).collect();
    let mut dp: Vec<f64> = p_a.iter().zip(p_b).map(|(a, b)| a - b).collect();
    let m = ops.pressure_weights();
    let mean = crate::sparse::dot(&m, &dp) / m.iter().sum::<f64>();
    dp.iter_mut().for_each(|v| *v -= mean);
    let sq = |v: f64| v.max(0.0).sqrt();
    Ok(GapNorms {
        velocity_l2: sq(ops.mass.quadratic_form(&du)),
        velocity_h1: sq(ops.stiffness.quadratic_form(&du)),
        pressure_l2: sq(ops.pressure_mass.quadratic_form(&dp)),
    })
}

/// Successive orders `log(e_i / e_{i+1}) / log(h_i / h_{i+1})` and the
/// least-squares slope of `log e` against `log h`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedOrders {
    pub successive: Vec<f64>,
    pub slope: f64,
}

pub fn observed_order(errors: &[f64], sizes: &[f64]) -> Result<ObservedOrders> {
    check_len(sizes.len(), errors.len())?;
    if errors.len() < 2 {
        return Err(Error::InvalidArgument("need at least two levels".into()));
    }
    if sizes.windows(2).any(|w| !(w[1] < w[0])) || sizes.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::InvalidArgument("mesh sizes must be positive and strictly decreasing".into()));
    }
    if errors.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidArgument("errors must be positive and finite".into()));
    }
    let successive = errors
        .windows(2)
        .zip(sizes.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect();
    let xs: Vec<f64> = sizes.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(ObservedOrders {
        successive,
        slope: sxy / sxx,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyMode {
    /// Galerkin runs over `h`.
    Galerkin,
    /// Two-level runs over `H` at a fixed fine mesh.
    TwoLevel,
    /// Two-level runs with `H` tied to `h`.
    Coupled,
}

impl StudyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StudyMode::Galerkin => "galerkin",
            StudyMode::TwoLevel => "two_level",
            StudyMode::Coupled => "coupled",
        }
    }

    /// Levels needed before orders are reported. The coupled study pairs
    /// `H = sqrt(h)`, which leaves only two levels at desk scale.
    pub fn min_levels(self) -> usize {
        match self {
            StudyMode::Coupled => 2,
            _ => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelRecord {
    pub h: f64,
    pub coarse_h: Option<f64>,
    /// Against the manufactured solution.
    pub errors: Option<ErrorNorms>,
    /// Two-level against Galerkin on the same fine mesh.
    pub gap: Option<GapNorms>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub mode: StudyMode,
    pub records: Vec<LevelRecord>,
}

impl ConvergenceReport {
    /// The mesh size the study varies.
    pub fn sweep_size(&self, r: &LevelRecord) -> f64 {
        match self.mode {
            StudyMode::TwoLevel => r.coarse_h.unwrap_or(r.h),
            _ => r.h,
        }
    }

    /// Orders of the quantity picked by `value`; `None` with too few levels
    /// or a missing value.
    pub fn order<F>(&self, value: F) -> Option<ObservedOrders>
    where
        F: Fn(&LevelRecord) -> Option<f64>,
    {
        if self.records.len() < self.mode.min_levels() {
            return None;
        }
        let errors: Option<Vec<f64>> = self.records.iter().map(&value).collect();
        let sizes: Vec<f64> = self.records.iter().map(|r| self.sweep_size(r)).collect();
        observed_order(&errors?, &sizes).ok()
    }
}

/// Independent check of the manufactured forcing: derivatives by exact
/// polynomial arithmetic on the stream function and the memory integral by
/// Gauss-Legendre quadrature.
pub mod oracle {
    use super::MmsCase;
    use crate::mesh::Point;

    /// Dense bivariate polynomial `sum c[i][j] x^i y^j`, for an independent
    /// derivation of the manufactured derivatives.
    #[derive(Clone)]
    pub struct Poly(Vec<Vec<f64>>);

    impl Poly {
        pub fn from_x(c: &[f64]) -> Self {
            Poly(c.iter().map(|&v| vec![v]).collect())
        }
        pub fn from_y(c: &[f64]) -> Self {
            Poly(vec![c.to_vec()])
        }
        pub fn mul(&self, o: &Poly) -> Poly {
            let nx = self.0.len() + o.0.len() - 1;
            let ny = self.0.iter().map(Vec::len).max().unwrap() + o.0.iter().map(Vec::len).max().unwrap() - 1;
            let mut c = vec![vec![0.0; ny]; nx];
            for (i, a) in self.0.iter().enumerate() {
                for (j, &va) in a.iter().enumerate() {
                    for (k, b) in o.0.iter().enumerate() {
                        for (l, &vb) in b.iter().enumerate() {
                            c[i + k][j + l] += va * vb;
                        }
                    }
                }
            }
            Poly(c)
        }
        pub fn scale(&self, s: f64) -> Poly {
            Poly(self.0.iter().map(|r| r.iter().map(|v| v * s).collect()).collect())
        }
        pub fn add(&self, o: &Poly) -> Poly {
            let nx = self.0.len().max(o.0.len());
            let mut c = vec![Vec::new(); nx];
            for (i, row) in c.iter_mut().enumerate() {
                let a = self.0.get(i).cloned().unwrap_or_default();
                let b = o.0.get(i).cloned().unwrap_or_default();
                *row = (0..a.len().max(b.len()))
                    .map(|j| a.get(j).unwrap_or(&0.0) + b.get(j).unwrap_or(&0.0))
                    .collect();
            }
            Poly(c)
        }
        pub fn dx(&self) -> Poly {
            let c: Vec<Vec<f64>> =
                self.0.iter().enumerate().skip(1).map(|(i, r)| r.iter().map(|v| v * i as f64).collect()).collect();
            if c.is_empty() {
                Poly(vec![vec![0.0]])
            } else {
                Poly(c)
            }
        }
        pub fn dy(&self) -> Poly {
            Poly(
                self.0
                    .iter()
                    .map(|r| {
                        let d: Vec<f64> = r.iter().enumerate().skip(1).map(|(j, v)| v * j as f64).collect();
                        if d.is_empty() {
                            vec![0.0]
                        } else {
                            d
                        }
                    })
                    .collect(),
            )
        }
        pub fn eval(&self, x: Point) -> f64 {
            self.0
                .iter()
                .rev()
                .fold(0.0, |acc, r| acc * x[0] + r.iter().rev().fold(0.0, |a, &c| a * x[1] + c))
        }
    }

    /// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
    pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
                let mut dp = 0.0;
                for _ in 0..100 {
                    let (mut p0, mut p1) = (1.0, x);
                    for k in 2..=n {
                        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                    let step = p1 / dp;
                    x -= step;
                    if step.abs() < 1e-16 {
                        break;
                    }
                }
                (x, 2.0 / ((1.0 - x * x) * dp * dp))
            })
            .collect()
    }

    pub struct Oracle {
        u: [Poly; 2],
        grad: [[Poly; 2]; 2],
        lap: [Poly; 2],
        gl: Vec<(f64, f64)>,
    }

    impl Oracle {
        pub fn new() -> Self {
            let s = [0.0, 0.0, 1.0, -2.0, 1.0]; // s^2 (1-s)^2
            let psi = Poly::from_x(&s).mul(&Poly::from_y(&s));
            let u = [psi.dy(), psi.dx().scale(-1.0)];
            let grad = [[u[0].dx(), u[0].dy()], [u[1].dx(), u[1].dy()]];
            let lap = [grad[0][0].dx().add(&grad[0][1].dy()), grad[1][0].dx().add(&grad[1][1].dy())];
            Self {
                u,
                grad,
                lap,
                gl: gauss_legendre(40),
            }
        }

        /// Momentum residual of the manufactured pair at `(x, t)`.
        pub fn residual(&self, case: &MmsCase, x: Point, t: f64) -> [f64; 2] {
            let a = case.amplitude();
            let prm = case.params();
            let g = |s: f64| a * (-s).exp();
            let dg = |s: f64| -a * (-s).exp();
            // memory: int_0^t beta(t-s) g(s) ds, Gauss-Legendre on [0, t]
            let mem: f64 = self
                .gl
                .iter()
                .map(|&(z, w)| {
                    let s = 0.5 * t * (z + 1.0);
                    0.5 * t * w * prm.kernel(t - s) * g(s)
                })
                .sum();
            let p_poly = Poly::from_x(&[-0.5, 1.0]).mul(&Poly::from_y(&[-0.5, 1.0]));
            let gp = [p_poly.dx().eval(x) * t.cos(), p_poly.dy().eval(x) * t.cos()];
            let u = [self.u[0].eval(x), self.u[1].eval(x)];
            let f = case.forcing(x, t);
            let mut r = [0.0; 2];
            for c in 0..2 {
                let conv = g(t) * g(t) * (u[0] * self.grad[c][0].eval(x) + u[1] * self.grad[c][1].eval(x));
                let lap = self.lap[c].eval(x);
                r[c] = dg(t) * u[c] + conv - prm.mu * g(t) * lap - mem * lap + gp[c] - f[c];
            }
            r
        }
    }

    impl Default for Oracle {
        fn default() -> Self {
            Self::new()
        }
    }

    /// Largest momentum residual component over `samples` random points
    /// `(x, t)` with `x` in the unit square and `t` in `[0, t_max)`.
    pub fn max_residual(case: &MmsCase, samples: usize, t_max: f64, seed: u64) -> f64 {
        use rand::{Rng, SeedableRng};
        let oracle = Oracle::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..samples)
            .map(|_| {
                let x = [rng.random::<f64>(), rng.random::<f64>()];
                let t = rng.random::<f64>() * t_max;
                let r = oracle.residual(case, x, t);
                r[0].abs().max(r[1].abs())
            })
            .fold(0.0, f64::max)
    }
}
