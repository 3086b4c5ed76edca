//! Saddle-point linear algebra.
//!
//! Systems have the form
//!
//! ```text
//! K u - B^T p = f
//! B u         = g
//! ```
//!
//! over interior velocity dofs, with `B[j][k] = (q_j, div phi_k)`. The
//! pressure is determined up to a constant; every solve returns the
//! representative with zero mean `m . p = 0`, where `m_j = (1, q_j)`.
//! Direct factorizations fix pressure dof 0 to remove the constant mode and
//! shift to the zero-mean representative afterwards.

mod condense;
mod krylov;
mod lu;
mod projection;

pub use krylov::{bicgstab, pcg, KrylovResult};
pub use projection::{estimate_infsup, l2_project_divfree, project_coefficients, InfSupEstimate};

use faer::sparse::linalg::solvers::SymbolicLu;
use nalgebra::DVector;

use crate::assembly::AssembledOperators;
use crate::error::{check_len, Error, Result};
use crate::fespace::{DofEntity, FeSpace};
use crate::sparse::{dot, norm2, CsrMatrix};

use condense::Condensation;
use lu::SparseLu;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SolverMethod {
    /// Dense LU of the block matrix; small systems only.
    DirectDense,
    /// Krylov iteration on the pressure Schur complement.
    UzawaCg,
    /// Sparse LU of the block matrix.
    #[default]
    SparseLu,
}

impl std::str::FromStr for SolverMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "direct_dense" | "dense" => Ok(SolverMethod::DirectDense),
            "uzawa_cg" | "uzawa" => Ok(SolverMethod::UzawaCg),
            "sparse_lu" | "lu" => Ok(SolverMethod::SparseLu),
            other => Err(Error::InvalidArgument(format!("unknown solver method '{other}'"))),
        }
    }
}

/// Largest block system `DirectDense` accepts.
pub const DENSE_LIMIT: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub method: SolverMethod,
    /// Relative residual target, in `(0, 1e-2]`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolverMethod::SparseLu,
            tolerance: 1e-10,
            max_iterations: 2000,
        }
    }
}

impl SolverConfig {
    pub fn new(method: SolverMethod, tolerance: f64, max_iterations: usize) -> Result<Self> {
        let cfg = Self {
            method,
            tolerance,
            max_iterations,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance <= 1e-2) {
            return Err(Error::InvalidArgument(format!(
                "solver tolerance must lie in (0, 1e-2] (got {})",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("solver max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub method: SolverMethod,
    /// Krylov iterations (outer) or refinement sweeps (direct).
    pub iterations: usize,
    /// `|r| / |rhs|` over both block equations.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct SaddleSolution {
    /// Interior velocity coefficients.
    pub u: Vec<f64>,
    /// Mean-zero pressure coefficients.
    pub p: Vec<f64>,
    pub stats: SolveStats,
}

/// Pressure mean-zero data.
#[derive(Clone, Debug)]
pub struct PressureNormalization {
    /// `m_j = (1, q_j)`
    pub weights: Vec<f64>,
    /// Diagonal of the pressure mass matrix; the Schur preconditioner.
    pub mass_diagonal: Vec<f64>,
}

impl PressureNormalization {
    pub fn from_operators(ops: &AssembledOperators) -> Self {
        Self {
            weights: ops.pressure_weights(),
            mass_diagonal: ops.pressure_mass.diagonal(),
        }
    }

    /// Subtracts the weighted mean so that `m . p = 0`.
    pub fn remove_mean(&self, p: &mut [f64]) {
        let c = dot(&self.weights, p) / self.weights.iter().sum::<f64>();
        p.iter_mut().for_each(|v| *v -= c);
    }

    /// Removes the component of `g` that no `B u` can produce.
    fn compatible(&self, g: &[f64]) -> Vec<f64> {
        let c = g.iter().sum::<f64>() / self.weights.iter().sum::<f64>();
        g.iter().zip(&self.weights).map(|(g, m)| g - c * m).collect()
    }
}

#[derive(Clone, Debug)]
pub struct SaddleSystem {
    /// Velocity block over interior dofs.
    pub k: CsrMatrix,
    /// Divergence block, pressure rows by interior velocity columns.
    pub b: CsrMatrix,
    pub rhs_u: Vec<f64>,
    pub rhs_p: Vec<f64>,
    pub normalization: PressureNormalization,
}

impl SaddleSystem {
    pub fn validate(&self) -> Result<()> {
        let n = self.k.nrows();
        check_len(n, self.k.ncols())?;
        check_len(n, self.b.ncols())?;
        check_len(n, self.rhs_u.len())?;
        let np = self.b.nrows();
        check_len(np, self.rhs_p.len())?;
        check_len(np, self.normalization.weights.len())?;
        check_len(np, self.normalization.mass_diagonal.len())
    }
}

/// Solves one saddle system from scratch.
pub fn solve_saddle(sys: &SaddleSystem, cfg: &SolverConfig) -> Result<SaddleSolution> {
    sys.validate()?;
    cfg.validate()?;
    let f = SaddleFactorization::new(
        sys.k.clone(),
        sys.b.clone(),
        sys.normalization.clone(),
        *cfg,
        None,
        None,
    )?;
    f.solve(&sys.rhs_u, &sys.rhs_p)
}

/// Block matrix `[[K, -B^T], [B, 0]]` with pressure dof 0 replaced by the
/// equation `p_0 = 0`.
fn block_matrix(k: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    let n = k.nrows();
    let np = b.nrows();
    let size = n + np;
    let mut t = Vec::with_capacity(k.nnz() + 2 * b.nnz() + 1);
    for i in 0..n {
        t.extend(k.row(i).map(|(j, v)| (i, j, v)));
    }
    for r in 1..np {
        for (j, v) in b.row(r) {
            t.push((j, n + r, -v));
            t.push((n + r, j, v));
        }
    }
    if np > 0 {
        t.push((n, n, 1.0));
    }
    CsrMatrix::from_triplets(size, size, &t)
}

enum Factor {
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Sparse {
        lu: SparseLu,
        symbolic: SymbolicLu<usize>,
        condensation: Option<Condensation>,
    },
    Iterative { k_symmetric: bool, k_diag: Vec<f64> },
}

/// A saddle operator prepared for repeated solves with different
/// right-hand sides.
pub struct SaddleFactorization {
    k: CsrMatrix,
    b: CsrMatrix,
    norm: PressureNormalization,
    cfg: SolverConfig,
    factor: Factor,
}

impl SaddleFactorization {
    /// `symbolic` must stem from an earlier factorization with the same
    /// `K` pattern and `condense` mask. `condense` flags velocity unknowns
    /// whose mutual block of `K` is diagonal; they are eliminated before
    /// the sparse factorization.
    pub fn new(
        k: CsrMatrix,
        b: CsrMatrix,
        norm: PressureNormalization,
        cfg: SolverConfig,
        symbolic: Option<SymbolicLu<usize>>,
        condense: Option<&[bool]>,
    ) -> Result<Self> {
        let factor = match cfg.method {
            SolverMethod::DirectDense => {
                let size = k.nrows() + b.nrows();
                if size > DENSE_LIMIT {
                    return Err(Error::InvalidArgument(format!(
                        "direct_dense supports at most {DENSE_LIMIT} unknowns (got {size})"
                    )));
                }
                Factor::Dense(block_matrix(&k, &b).to_dense().lu())
            }
            SolverMethod::SparseLu => {
                let m = block_matrix(&k, &b);
                let (condensation, m) = match condense {
                    Some(mask) if mask.iter().any(|&c| c) => {
                        check_len(k.nrows(), mask.len())?;
                        let mut full = mask.to_vec();
                        full.resize(m.nrows(), false);
                        let (c, r) = Condensation::new(&m, &full)?;
                        (Some(c), r)
                    }
                    _ => (None, m),
                };
                let symbolic = match symbolic {
                    Some(s) => s,
                    None => lu::symbolic(&m)?,
                };
                Factor::Sparse {
                    lu: SparseLu::factor(&m, symbolic.clone())?,
                    symbolic,
                    condensation,
                }
            }
            SolverMethod::UzawaCg => {
                let k_diag = k.diagonal();
                if k_diag.iter().any(|&d| d <= 0.0) {
                    return Err(Error::Singular("velocity block has a nonpositive diagonal".into()));
                }
                Factor::Iterative {
                    k_symmetric: k.is_symmetric(1e-13),
                    k_diag,
                }
            }
        };
        Ok(Self {
            k,
            b,
            norm,
            cfg,
            factor,
        })
    }

    fn symbolic(&self) -> Option<SymbolicLu<usize>> {
        match &self.factor {
            Factor::Sparse { symbolic, .. } => Some(symbolic.clone()),
            _ => None,
        }
    }

    pub fn n_velocity(&self) -> usize {
        self.k.nrows()
    }

    pub fn n_pressure(&self) -> usize {
        self.b.nrows()
    }

    pub fn solve(&self, rhs_u: &[f64], rhs_p: &[f64]) -> Result<SaddleSolution> {
        check_len(self.k.nrows(), rhs_u.len())?;
        check_len(self.b.nrows(), rhs_p.len())?;
        let g = self.norm.compatible(rhs_p);
        let scale = (norm2(rhs_u).powi(2) + norm2(&g).powi(2)).sqrt();
        if scale == 0.0 {
            return Ok(SaddleSolution {
                u: vec![0.0; self.k.nrows()],
                p: vec![0.0; self.b.nrows()],
                stats: SolveStats {
                    method: self.cfg.method,
                    iterations: 0,
                    residual: 0.0,
                    converged: true,
                },
            });
        }
        let (u, mut p, iterations) = match &self.factor {
            Factor::Iterative { k_symmetric, k_diag } => self.uzawa(rhs_u, &g, *k_symmetric, k_diag)?,
            _ => self.direct(rhs_u, &g, scale)?,
        };
        if u.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(Error::Singular("saddle solve produced non-finite values".into()));
        }
        self.norm.remove_mean(&mut p);
        let residual = self.residual(&u, &p, rhs_u, &g) / scale;
        Ok(SaddleSolution {
            u,
            p,
            stats: SolveStats {
                method: self.cfg.method,
                iterations,
                residual,
                converged: residual <= self.cfg.tolerance,
            },
        })
    }

    fn residual(&self, u: &[f64], p: &[f64], f: &[f64], g: &[f64]) -> f64 {
        let ku = self.k.mul_vec(u);
        let btp = self.b.mul_transpose_vec(p);
        let bu = self.b.mul_vec(u);
        let r1: f64 = (0..u.len()).map(|i| (f[i] - ku[i] + btp[i]).powi(2)).sum();
        let r2: f64 = (0..p.len()).map(|i| (g[i] - bu[i]).powi(2)).sum();
        (r1 + r2).sqrt()
    }

    fn apply_inverse(&self, x: &mut [f64]) -> Result<()> {
        match &self.factor {
            Factor::Dense(lu) => {
                let rhs = DVector::from_column_slice(x);
                let sol = lu
                    .solve(&rhs)
                    .ok_or_else(|| Error::Singular("dense saddle matrix is singular".into()))?;
                x.copy_from_slice(sol.as_slice());
            }
            Factor::Sparse {
                lu, condensation: None, ..
            } => lu.solve_in_place(x),
            Factor::Sparse {
                lu,
                condensation: Some(c),
                ..
            } => {
                let mut xk = c.reduce_rhs(x);
                lu.solve_in_place(&mut xk);
                let full = c.expand(x, &xk);
                x.copy_from_slice(&full);
            }
            Factor::Iterative { .. } => unreachable!(),
        }
        Ok(())
    }

    /// Direct solve with up to three sweeps of iterative refinement.
    fn direct(&self, f: &[f64], g: &[f64], scale: f64) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        let n = self.k.nrows();
        let np = self.b.nrows();
        let mut rhs: Vec<f64> = f.iter().chain(g).copied().collect();
        if np > 0 {
            rhs[n] = 0.0;
        }
        self.apply_inverse(&mut rhs)?;
        let mut u = rhs[..n].to_vec();
        let mut p = rhs[n..].to_vec();
        let mut sweeps = 0;
        while sweeps < 3 {
            let ku = self.k.mul_vec(&u);
            let btp = self.b.mul_transpose_vec(&p);
            let bu = self.b.mul_vec(&u);
            let mut r: Vec<f64> = (0..n).map(|i| f[i] - ku[i] + btp[i]).collect();
            r.extend((0..np).map(|i| g[i] - bu[i]));
            if norm2(&r) <= 1e-3 * self.cfg.tolerance * scale {
                break;
            }
            if np > 0 {
                r[n] = 0.0;
            }
            self.apply_inverse(&mut r)?;
            u.iter_mut().zip(&r[..n]).for_each(|(a, d)| *a += d);
            p.iter_mut().zip(&r[n..]).for_each(|(a, d)| *a += d);
            sweeps += 1;
        }
        Ok((u, p, sweeps))
    }

    fn inner_solve(&self, rhs: &[f64], x: &mut [f64], symmetric: bool, diag: &[f64], tol: f64) -> KrylovResult {
        let apply = |v: &[f64], out: &mut [f64]| self.k.mul_vec_into(v, out);
        let pre = |v: &[f64], out: &mut [f64]| {
            for ((o, v), d) in out.iter_mut().zip(v).zip(diag) {
                *o = v / d;
            }
        };
        let max = 20 * self.cfg.max_iterations;
        if symmetric {
            pcg(&apply, &pre, None, rhs, x, tol, max)
        } else {
            bicgstab(&apply, &pre, None, rhs, x, tol, max)
        }
    }

    /// Schur-complement iteration `S p = g - B K^{-1} f` with
    /// `S = B K^{-1} B^T`, preconditioned by the diagonal of the pressure
    /// mass matrix.
    fn uzawa(&self, f: &[f64], g: &[f64], symmetric: bool, diag: &[f64]) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        let n = self.k.nrows();
        let np = self.b.nrows();
        let tol = self.cfg.tolerance;
        let inner_tol = (tol * 1e-3).max(1e-15);
        let inner_failed = std::cell::Cell::new(false);
        let solve_k = |rhs: &[f64]| {
            let mut x = vec![0.0; n];
            let r = self.inner_solve(rhs, &mut x, symmetric, diag, inner_tol);
            if !r.converged && r.residual > 10.0 * inner_tol {
                inner_failed.set(true);
            }
            x
        };
        let kf = solve_k(f);
        let bkf = self.b.mul_vec(&kf);
        let rhs: Vec<f64> = g.iter().zip(&bkf).map(|(g, b)| g - b).collect();
        let schur = |v: &[f64], out: &mut [f64]| {
            let w = solve_k(&self.b.mul_transpose_vec(v));
            self.b.mul_vec_into(&w, out);
            // S applied to a pressure; keep the image in the zero-sum space
            let s = out.iter().sum::<f64>() / np as f64;
            out.iter_mut().for_each(|o| *o -= s);
        };
        let mass = &self.norm.mass_diagonal;
        let pre = |v: &[f64], out: &mut [f64]| {
            for ((o, v), d) in out.iter_mut().zip(v).zip(mass) {
                *o = v / d;
            }
        };
        let weights = &self.norm.weights;
        let wsum: f64 = weights.iter().sum();
        let project = |v: &mut [f64]| {
            let c = dot(weights, v) / wsum;
            v.iter_mut().for_each(|x| *x -= c);
        };
        let mut p = vec![0.0; np];
        let outer = if symmetric {
            pcg(&schur, &pre, Some(&project), &rhs, &mut p, tol * 1e-1, self.cfg.max_iterations)
        } else {
            bicgstab(&schur, &pre, Some(&project), &rhs, &mut p, tol * 1e-1, self.cfg.max_iterations)
        };
        let mut fp = f.to_vec();
        for (a, b) in fp.iter_mut().zip(self.b.mul_transpose_vec(&p)) {
            *a += b;
        }
        let u = solve_k(&fp);
        if inner_failed.get() {
            return Err(Error::NotConverged {
                what: "inner velocity solve",
                iterations: 20 * self.cfg.max_iterations,
                residual: inner_tol,
            });
        }
        Ok((u, p, outer.iterations))
    }
}

/// Saddle systems on one discrete space: restriction to interior dofs,
/// cached symbolic factorization, and lifting of solutions back to full
/// coefficient vectors.
pub struct SaddleOperator {
    cfg: SolverConfig,
    interior: Vec<usize>,
    n_velocity: usize,
    b: CsrMatrix,
    norm: PressureNormalization,
    condense: Vec<bool>,
    symbolic: Option<SymbolicLu<usize>>,
}

impl SaddleOperator {
    pub fn new(space: &FeSpace, ops: &AssembledOperators, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let interior = space.interior_dofs().to_vec();
        let rows: Vec<usize> = (0..space.n_pressure()).collect();
        let (b, _) = ops.divergence.submatrix(&rows, &interior);
        let condense = interior
            .iter()
            .map(|&i| matches!(space.dof_entity(i).0, DofEntity::Bubble(_)))
            .collect();
        Ok(Self {
            cfg,
            condense,
            interior,
            n_velocity: space.n_velocity(),
            b,
            norm: PressureNormalization::from_operators(ops),
            symbolic: None,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn divergence(&self) -> &CsrMatrix {
        &self.b
    }

    pub fn normalization(&self) -> &PressureNormalization {
        &self.norm
    }

    /// Restricts a full velocity matrix to interior dofs.
    pub fn restrict_matrix(&self, k_full: &CsrMatrix) -> Result<CsrMatrix> {
        check_len(self.n_velocity, k_full.nrows())?;
        Ok(k_full.submatrix(&self.interior, &self.interior).0)
    }

    /// Prepares `K` (a full velocity matrix) for repeated solves. The
    /// symbolic LU is computed once and reused while the pattern of `K` is
    /// unchanged.
    pub fn factor(&mut self, k_full: &CsrMatrix) -> Result<SaddleFactorization> {
        let k = self.restrict_matrix(k_full)?;
        let fac = SaddleFactorization::new(
            k,
            self.b.clone(),
            self.norm.clone(),
            self.cfg,
            self.symbolic.clone(),
            Some(&self.condense),
        )?;
        if self.symbolic.is_none() {
            self.symbolic = fac.symbolic();
        }
        Ok(fac)
    }

    /// Solves with full-length velocity data; boundary rows of `rhs_u` are
    /// ignored and boundary coefficients of the result are zero.
    pub fn solve_full(&self, f: &SaddleFactorization, rhs_u: &[f64], rhs_p: &[f64]) -> Result<(Vec<f64>, Vec<f64>, SolveStats)> {
        check_len(self.n_velocity, rhs_u.len())?;
        let r: Vec<f64> = self.interior.iter().map(|&i| rhs_u[i]).collect();
        let sol = f.solve(&r, rhs_p)?;
        let mut u = vec![0.0; self.n_velocity];
        for (&i, v) in self.interior.iter().zip(sol.u) {
            u[i] = v;
        }
        Ok((u, sol.p, sol.stats))
    }
}
