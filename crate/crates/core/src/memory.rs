//! Physical parameters and the fading-memory term.
//!
//! The kernel is `beta(t) = gamma * exp(-delta t)`. Because it is a single
//! exponential, the history integral `I(t) = int_0^t beta(t - s) u(s) ds`
//! satisfies `I(t + dt) = exp(-delta dt) I(t) + int_t^{t+dt} beta(t + dt - s) u(s) ds`,
//! so the whole history is carried by one coefficient vector.

use crate::error::{check_len, Error, Result};
use crate::sparse::{norm2, CsrMatrix};

/// Constants of the order-one Oldroyd model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OldroydParams {
    /// `(nu, kappa, lambda)` when derived from physical constants.
    pub physical: Option<(f64, f64, f64)>,
    /// Viscous coefficient `2 kappa / lambda`.
    pub mu: f64,
    /// Kernel amplitude `2 (nu - kappa / lambda) / lambda`.
    pub gamma: f64,
    /// Kernel decay rate `1 / lambda`.
    pub delta: f64,
}

impl OldroydParams {
    /// Derives `mu`, `gamma`, `delta` from viscosity `nu`, retardation
    /// constant `kappa` and relaxation time `lambda`.
    pub fn from_physical(nu: f64, kappa: f64, lambda: f64) -> Result<Self> {
        if !(nu > 0.0 && kappa > 0.0 && lambda > 0.0) {
            return Err(Error::InvalidParams(format!(
                "nu, kappa, lambda must be positive (got {nu}, {kappa}, {lambda})"
            )));
        }
        let gamma = 2.0 * (nu - kappa / lambda) / lambda;
        if gamma <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "need nu > kappa/lambda so that gamma > 0 (nu={nu}, kappa/lambda={})",
                kappa / lambda
            )));
        }
        Ok(Self {
            physical: Some((nu, kappa, lambda)),
            mu: 2.0 * kappa / lambda,
            gamma,
            delta: 1.0 / lambda,
        })
    }

    /// Direct coefficients. `gamma = 0` is accepted and switches the memory
    /// term off (plain Navier-Stokes).
    pub fn from_coefficients(mu: f64, gamma: f64, delta: f64) -> Result<Self> {
        if !(mu > 0.0 && gamma >= 0.0 && delta > 0.0) {
            return Err(Error::InvalidParams(format!(
                "need mu > 0, gamma >= 0, delta > 0 (got {mu}, {gamma}, {delta})"
            )));
        }
        Ok(Self {
            physical: None,
            mu,
            gamma,
            delta,
        })
    }

    pub fn kernel(&self, t: f64) -> f64 {
        self.gamma * (-self.delta * t).exp()
    }
}

/// Time quadrature of the history integral over one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KernelRule {
    /// Right-endpoint rectangle rule: `I_n = sum_{m<=n} dt beta(t_n - t_m) u_m`.
    #[default]
    RightRect,
    /// Exact integration of the kernel against the piecewise-linear
    /// interpolant of the history.
    PwLinearExact,
}

impl std::str::FromStr for KernelRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "right_rect" | "rightrect" => Ok(KernelRule::RightRect),
            "pw_linear" | "pw_linear_exact" => Ok(KernelRule::PwLinearExact),
            other => Err(Error::InvalidArgument(format!("unknown kernel rule '{other}'"))),
        }
    }
}

/// One-step update `I_{n+1} = decay * I_n + w_old * u_n + w_new * u_{n+1}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelWeights {
    pub decay: f64,
    pub w_old: f64,
    pub w_new: f64,
}

impl KernelWeights {
    pub fn new(params: &OldroydParams, dt: f64, rule: KernelRule) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive (got {dt})")));
        }
        let x = params.delta * dt;
        let decay = (-x).exp();
        let (w_old, w_new) = match rule {
            KernelRule::RightRect => (0.0, params.gamma * dt),
            KernelRule::PwLinearExact => {
                let (p0, p1) = (expm1_ratio(x), linear_moment(x));
                (params.gamma * dt * p1, params.gamma * dt * (p0 - p1))
            }
        };
        Ok(Self { decay, w_old, w_new })
    }
}

/// `(1 - e^{-x}) / x`
fn expm1_ratio(x: f64) -> f64 {
    if x < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

/// `(1 - e^{-x}(1 + x)) / x^2`, i.e. `int_0^1 s e^{-x s} ds`.
fn linear_moment(x: f64) -> f64 {
    if x < 0.1 {
        // sum_{n>=2} (-1)^n (n-1) x^{n-2} / n!
        let mut sum = 0.0;
        let mut fact = 2.0;
        let mut pow = 1.0;
        for n in 2..20u32 {
            if n > 2 {
                fact *= n as f64;
                pow *= -x;
            }
            sum += (n - 1) as f64 * pow / fact;
        }
        sum
    } else {
        (1.0 - (-x).exp() * (1.0 + x)) / (x * x)
    }
}

/// Recursively updated history integral in coefficient space.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelState {
    accumulator: Vec<f64>,
    last: Vec<f64>,
    time: f64,
    history: Option<Vec<Vec<f64>>>,
}

impl KernelState {
    /// Empty history starting from `u0` at `t = 0`.
    pub fn new(u0: &[f64]) -> Self {
        Self {
            accumulator: vec![0.0; u0.len()],
            last: u0.to_vec(),
            time: 0.0,
            history: None,
        }
    }

    /// Same as [`KernelState::new`] but retains the full trajectory (one
    /// vector per time level, starting with `u0`) for direct summation.
    pub fn with_history(u0: &[f64]) -> Self {
        Self {
            history: Some(vec![u0.to_vec()]),
            ..Self::new(u0)
        }
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.accumulator
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn history(&self) -> Option<&[Vec<f64>]> {
        self.history.as_deref()
    }

    /// Part of the next accumulator that does not depend on the new
    /// velocity: `decay * I_n + w_old * u_n`.
    pub fn lagged(&self, w: &KernelWeights) -> Vec<f64> {
        self.accumulator
            .iter()
            .zip(&self.last)
            .map(|(a, u)| w.decay * a + w.w_old * u)
            .collect()
    }

    /// Advances the history by one step ending at velocity `u_new`.
    pub fn update(&mut self, params: &OldroydParams, u_new: &[f64], dt: f64, rule: KernelRule) -> Result<()> {
        check_len(self.accumulator.len(), u_new.len())?;
        let w = KernelWeights::new(params, dt, rule)?;
        let mut acc = self.lagged(&w);
        for (a, u) in acc.iter_mut().zip(u_new) {
            *a += w.w_new * u;
        }
        self.accumulator = acc;
        self.last.copy_from_slice(u_new);
        self.time += dt;
        if let Some(h) = self.history.as_mut() {
            h.push(u_new.to_vec());
        }
        Ok(())
    }

    /// `A I(t)`: the memory term's contribution to the Galerkin equations.
    pub fn contribution(&self, stiffness: &CsrMatrix) -> Result<Vec<f64>> {
        stiffness.try_mul_vec(&self.accumulator)
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.accumulator)
    }
}

/// Discrete analogue of `int_0^T (int_0^t e^{-alpha(t-s)} phi(s) ds) phi(t) dt`
/// with right-endpoint rectangles in both integrals:
/// `sum_n dt phi_n sum_{m<=n} dt e^{-alpha (t_n - t_m)} phi_m`.
///
/// Always nonnegative: it equals half the exponential Gram form
/// `phi^T E phi` (`E_nm = dt^2 e^{-alpha|t_n - t_m|}`, positive definite)
/// plus half the diagonal `dt^2 |phi|^2`.
pub fn kernel_quadratic_form(phi: &[f64], alpha: f64, dt: f64) -> f64 {
    let decay = (-alpha * dt).exp();
    let mut inner = 0.0;
    let mut total = 0.0;
    for &p in phi {
        inner = decay * inner + dt * p;
        total += dt * p * inner;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> OldroydParams {
        OldroydParams::from_coefficients(1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn derived_parameters() {
        let p = OldroydParams::from_physical(1.0, 0.5, 1.0).unwrap();
        assert_eq!((p.mu, p.gamma, p.delta), (1.0, 1.0, 1.0));
        let p = OldroydParams::from_physical(2.0, 1.0, 2.0).unwrap();
        assert_eq!((p.mu, p.gamma, p.delta), (1.0, 1.5, 0.5));
        assert!(matches!(
            OldroydParams::from_physical(1.0, 1.0, 1.0),
            Err(Error::InvalidParams(_))
        ));
        assert!(OldroydParams::from_physical(-1.0, 1.0, 1.0).is_err());
        assert!(OldroydParams::from_coefficients(1.0, 0.0, 1.0).is_ok());
        assert!(OldroydParams::from_coefficients(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn pw_linear_constant_history_is_exact() {
        let p = unit();
        for steps in [1usize, 3, 10, 97] {
            let dt = 1.0 / steps as f64;
            let mut k = KernelState::new(&[1.0]);
            for _ in 0..steps {
                k.update(&p, &[1.0], dt, KernelRule::PwLinearExact).unwrap();
            }
            let exact = 1.0 - (-1.0f64).exp();
            assert!((k.accumulator()[0] - exact).abs() < 1e-12, "{steps}: {}", k.accumulator()[0]);
        }
    }

    #[test]
    fn pw_linear_linear_history_is_exact() {
        // u(s) = a + b s, kernel 1.5 e^{-0.7 (t-s)}:
        // int_0^t = 1.5 [ (a + b t)(1 - e^{-d t})/d - b (1 - e^{-d t}(1 + d t))/d^2 ]
        let p = OldroydParams::from_coefficients(1.0, 1.5, 0.7).unwrap();
        let (a, b) = (0.3, -2.0);
        for steps in [1usize, 7, 50] {
            let t = 1.3;
            let dt = t / steps as f64;
            let mut k = KernelState::new(&[a]);
            for n in 1..=steps {
                k.update(&p, &[a + b * n as f64 * dt], dt, KernelRule::PwLinearExact).unwrap();
            }
            let d = 0.7;
            let e = (-d * t).exp();
            let exact = 1.5 * ((a + b * t) * (1.0 - e) / d - b * (1.0 - e * (1.0 + d * t)) / (d * d));
            assert!((k.accumulator()[0] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn right_rect_is_first_order() {
        let p = unit();
        let exact = 1.0 - (-1.0f64).exp();
        let err = |steps: usize| {
            let dt = 1.0 / steps as f64;
            let mut k = KernelState::new(&[1.0]);
            for _ in 0..steps {
                k.update(&p, &[1.0], dt, KernelRule::RightRect).unwrap();
            }
            (k.accumulator()[0] - exact).abs()
        };
        let e: Vec<f64> = [100, 200, 400].iter().map(|&s| err(s)).collect();
        for w in e.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!((rate - 1.0).abs() < 0.02, "rate {rate}");
        }
    }

    #[test]
    fn zero_history_stays_zero_and_errors() {
        let p = unit();
        let mut k = KernelState::new(&[0.0; 4]);
        for _ in 0..10 {
            k.update(&p, &[0.0; 4], 0.1, KernelRule::RightRect).unwrap();
        }
        assert!(k.accumulator().iter().all(|&a| a == 0.0));
        assert!(k.update(&p, &[0.0; 4], 0.0, KernelRule::RightRect).is_err());
        assert!(k.update(&p, &[0.0; 3], 0.1, KernelRule::RightRect).is_err());
    }

    #[test]
    fn contribution_single_step() {
        let p = OldroydParams::from_coefficients(1.0, 2.0, 3.0).unwrap();
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)]);
        let mut k = KernelState::new(&[0.0, 0.0]);
        assert_eq!(k.contribution(&a).unwrap(), vec![0.0, 0.0]);
        let u1 = [1.0, 3.0];
        k.update(&p, &u1, 0.25, KernelRule::RightRect).unwrap();
        let au = a.mul_vec(&u1);
        let c = k.contribution(&a).unwrap();
        assert_eq!(c, vec![0.25 * 2.0 * au[0], 0.25 * 2.0 * au[1]]);
        assert!(k.contribution(&CsrMatrix::from_triplets(3, 3, &[])).is_err());
    }

    #[test]
    fn moments_match_quadrature() {
        for x in [1e-9, 1e-5, 0.01, 0.0999, 0.1, 0.5, 3.0] {
            // Simpson oracle for int_0^1 s e^{-x s} ds
            let n = 2000;
            let h = 1.0 / n as f64;
            let f = |s: f64| s * (-x * s).exp();
            let mut simp = f(0.0) + f(1.0);
            for i in 1..n {
                simp += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
            }
            simp *= h / 3.0;
            assert!((linear_moment(x) - simp).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn quadratic_form_trivial_cases() {
        assert_eq!(kernel_quadratic_form(&[0.0; 10], 1.0, 0.1), 0.0);
        let mut phi = vec![0.0; 8];
        phi[3] = 2.0;
        assert!((kernel_quadratic_form(&phi, 1.0, 0.1) - 0.01 * 4.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn quadratic_form_nonnegative(
            phi in prop::collection::vec(-10.0f64..10.0, 1..200),
            alpha in prop::sample::select(vec![0.1, 1.0, 10.0]),
            dt in 1e-3f64..0.5,
        ) {
            prop_assert!(kernel_quadratic_form(&phi, alpha, dt) >= -1e-12);
        }

        #[test]
        fn quadratic_form_matches_double_sum(
            phi in prop::collection::vec(-3.0f64..3.0, 1..60),
            alpha in 0.05f64..12.0,
            dt in 1e-3f64..0.5,
        ) {
            let mut brute = 0.0;
            for n in 0..phi.len() {
                for m in 0..=n {
                    brute += dt * phi[n] * dt * (-alpha * (n - m) as f64 * dt).exp() * phi[m];
                }
            }
            let q = kernel_quadratic_form(&phi, alpha, dt);
            prop_assert!((q - brute).abs() <= 1e-12 * brute.abs().max(dt * dt));
        }

        #[test]
        fn recursion_matches_direct_sum(
            hist in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..100),
            dt in 1e-3f64..0.2,
            gamma in 0.1f64..3.0,
            delta in 0.1f64..5.0,
        ) {
            let p = OldroydParams::from_coefficients(1.0, gamma, delta).unwrap();
            let mut k = KernelState::new(&[0.0; 3]);
            for u in &hist {
                k.update(&p, u, dt, KernelRule::RightRect).unwrap();
            }
            let n = hist.len();
            for c in 0..3 {
                let direct: f64 = (0..n)
                    .map(|m| dt * p.kernel((n - 1 - m) as f64 * dt) * hist[m][c])
                    .sum();
                let scale = direct.abs().max(hist.iter().map(|u| u[c].abs()).fold(0.0, f64::max) * gamma * dt);
                prop_assert!((k.accumulator()[c] - direct).abs() <= 1e-12 * scale.max(1e-300));
            }
        }

        #[test]
        fn kernel_mass_bounds(
            hist in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..100),
            dt in 1e-3f64..0.5,
        ) {
            let p = OldroydParams::from_coefficients(1.0, 1.3, 0.8).unwrap();
            let mut rr = KernelState::new(&[0.0; 2]);
            let mut pl = KernelState::new(&hist[0]);
            for u in &hist {
                rr.update(&p, u, dt, KernelRule::RightRect).unwrap();
                pl.update(&p, u, dt, KernelRule::PwLinearExact).unwrap();
            }
            let umax = hist.iter().map(|u| norm2(u)).fold(0.0, f64::max);
            let rr_mass = p.gamma * dt / (1.0 - (-p.delta * dt).exp());
            prop_assert!(rr.norm() <= rr_mass * umax * (1.0 + 1e-12));
            prop_assert!(pl.norm() <= p.gamma / p.delta * umax * (1.0 + 1e-12));
        }
    }
}
