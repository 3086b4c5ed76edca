//! L2 projection onto discretely divergence-free velocities and the
//! discrete inf-sup constant.

use nalgebra::{DMatrix, DVector};

use super::lu::{self, SparseLu};
use super::{SaddleOperator, SolverConfig};
use crate::assembly::{assemble_load, assemble_operators, AssembledOperators};
use crate::error::{Error, Result};
use crate::fespace::FeSpace;
use crate::mesh::Point;

/// `P_h field`: the mass-matrix saddle solve
/// `M u - B^T q = (field, phi)`, `B u = 0`.
pub fn l2_project_divfree<F>(space: &FeSpace, ops: &AssembledOperators, field: F, cfg: &SolverConfig) -> Result<Vec<f64>>
where
    F: Fn(Point) -> [f64; 2] + Sync,
{
    let rhs = assemble_load(space, |x, _| field(x), 0.0);
    project_load(space, ops, &rhs, cfg)
}

/// Projection of a discrete velocity of the same space.
pub fn project_coefficients(space: &FeSpace, ops: &AssembledOperators, u: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    let rhs = ops.mass.try_mul_vec(u)?;
    project_load(space, ops, &rhs, cfg)
}

fn project_load(space: &FeSpace, ops: &AssembledOperators, rhs: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    let mut op = SaddleOperator::new(space, ops, *cfg)?;
    let fac = op.factor(&ops.mass)?;
    let (u, _, stats) = op.solve_full(&fac, rhs, &vec![0.0; space.n_pressure()])?;
    if !stats.converged {
        return Err(Error::NotConverged {
            what: "L2 projection",
            iterations: stats.iterations,
            residual: stats.residual,
        });
    }
    Ok(u)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InfSupEstimate {
    /// Discrete inf-sup constant over all mean-zero pressures; zero when
    /// spurious pressure modes exist.
    pub value: f64,
    /// Same quantity restricted to pressures orthogonal to the kernel of
    /// `B^T`; equals `value` for a stable pair.
    pub reduced: f64,
    /// Dimension of the kernel of `B^T` beyond the constants.
    pub spurious_modes: usize,
    pub iterations: usize,
    /// Set for degenerate spaces (no interior vertex) and unstable pairs.
    pub warning: bool,
}

/// Largest pressure space the dense Schur complement is formed for.
pub const INFSUP_LIMIT: usize = 6000;

/// Discrete inf-sup constant
/// `min_q max_v (q, div v) / (|grad v| |q|)` over mean-zero `q`: the square
/// root of the smallest eigenvalue of `B A^{-1} B^T q = lambda Mp q` on the
/// Mp-complement of the constants. Found by inverse power iteration after
/// shifting the kernel of `B^T` out of the way.
pub fn estimate_infsup(space: &FeSpace) -> Result<InfSupEstimate> {
    let ops = assemble_operators(space);
    let np = space.n_pressure();
    if np > INFSUP_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "inf-sup estimate limited to {INFSUP_LIMIT} pressure dofs (got {np})"
        )));
    }
    let (s, mp, bbt) = schur_complement(space, &ops)?;
    let z = numerical_kernel(&bbt);
    let spurious = z.ncols().saturating_sub(1);
    // Mp-orthogonal projector onto the complement of span(z), and the
    // shift S + 10 W G^{-1} W^T (W = Mp z, G = z^T Mp z) that sends the
    // kernel to eigenvalue 10, above every inf-sup eigenvalue (all <= 1).
    let w = &mp * &z;
    let g_inv = (z.transpose() * &w)
        .try_inverse()
        .ok_or_else(|| Error::Singular("pressure mass matrix restricted to the kernel".into()))?;
    let shifted = &s + (&w * &g_inv * w.transpose()) * 10.0;
    let orth = |x: &mut DVector<f64>| {
        let c = &g_inv * (w.transpose() * &*x);
        *x -= &z * c;
    };
    let degenerate = space.mesh().n() < 2;
    let Some(chol) = shifted.clone().cholesky() else {
        return Ok(InfSupEstimate {
            value: 0.0,
            reduced: 0.0,
            spurious_modes: spurious,
            iterations: 0,
            warning: true,
        });
    };
    let mut x = DVector::from_fn(np, |i, _| 1.0 + ((i * 7919) % 101) as f64 / 101.0);
    orth(&mut x);
    let mut lambda_old = f64::INFINITY;
    let max_iter = 20_000;
    for it in 1..=max_iter {
        let mut y = chol.solve(&(&mp * &x));
        orth(&mut y);
        let ymy = y.dot(&(&mp * &y));
        if !(ymy > 0.0) {
            return Err(Error::Singular("inf-sup iterate vanished".into()));
        }
        let lambda = y.dot(&(&shifted * &y)) / ymy;
        x = y / ymy.sqrt();
        if (lambda - lambda_old).abs() <= 1e-13 * lambda.abs() {
            let reduced = lambda.max(0.0).sqrt();
            let value = if spurious > 0 { 0.0 } else { reduced };
            return Ok(InfSupEstimate {
                value,
                reduced,
                spurious_modes: spurious,
                iterations: it,
                warning: degenerate || spurious > 0 || value < 1e-8,
            });
        }
        lambda_old = lambda;
    }
    Err(Error::NotConverged {
        what: "inf-sup inverse iteration",
        iterations: max_iter,
        residual: lambda_old,
    })
}

/// Orthonormal basis of the numerical kernel of a symmetric positive
/// semidefinite matrix.
fn numerical_kernel(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let cols: Vec<DVector<f64>> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &e)| e <= 1e-10 * top)
        .map(|(i, _)| eig.eigenvectors.column(i).into_owned())
        .collect();
    DMatrix::from_columns(&cols)
}

/// Dense `S = B A^{-1} B^T`, pressure mass matrix and `B B^T`.
fn schur_complement(space: &FeSpace, ops: &AssembledOperators) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let op = SaddleOperator::new(space, ops, SolverConfig::default())?;
    let a = op.restrict_matrix(&ops.stiffness)?;
    let b = op.divergence();
    let ni = a.nrows();
    let np = b.nrows();
    let mut x = vec![0.0; ni * np];
    let bt = b.transpose();
    for i in 0..ni {
        for (j, v) in bt.row(i) {
            x[j * ni + i] = v;
        }
    }
    if ni > 0 {
        let lu = SparseLu::factor(&a, lu::symbolic(&a)?)?;
        lu.solve_many_in_place(&mut x, np);
    }
    let mut s = DMatrix::zeros(np, np);
    for r in 0..np {
        for (k, v) in b.row(r) {
            for c in 0..np {
                s[(r, c)] += v * x[c * ni + k];
            }
        }
    }
    let s = (&s + s.transpose()) * 0.5;
    let mp = ops.pressure_mass.to_dense();
    let bd = b.to_dense();
    let bbt = &bd * bd.transpose();
    Ok((s, mp, bbt))
}
