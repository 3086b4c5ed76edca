//! Assembly of the bilinear, trilinear and linear forms.
//!
//! All velocity operators (`M`, `A`, the Oseen matrix `N(w)`) share one
//! block-diagonal sparsity pattern so time-stepping matrices can be formed
//! as plain linear combinations of value arrays. Element contributions are
//! computed in parallel and scattered in triangle order, which keeps the
//! result bit-for-bit deterministic.

use rayon::prelude::*;

use crate::error::{check_len, Result};
use crate::fespace::FeSpace;
use crate::mesh::Point;
use crate::quadrature::QuadratureRule;
use crate::sparse::CsrMatrix;

/// Quadrature degree used for load vectors and error norms.
pub const LOAD_DEGREE: usize = 8;

#[derive(Clone, Debug)]
pub struct AssembledOperators {
    /// Velocity mass matrix `(u, phi)`.
    pub mass: CsrMatrix,
    /// Velocity stiffness matrix `(grad u, grad phi)`.
    pub stiffness: CsrMatrix,
    /// `B[j][k] = (q_j, div phi_k)`, pressure rows by velocity columns.
    pub divergence: CsrMatrix,
    /// Pressure mass matrix.
    pub pressure_mass: CsrMatrix,
    scalar_pattern: CsrMatrix,
}

impl AssembledOperators {
    /// Zero matrix on the shared velocity pattern.
    pub fn velocity_pattern(&self) -> CsrMatrix {
        let mut z = self.mass.clone();
        z.values_mut().iter_mut().for_each(|v| *v = 0.0);
        z
    }

    /// `(1, q_j)`: integrals of the pressure basis functions.
    pub fn pressure_weights(&self) -> Vec<f64> {
        self.pressure_mass.mul_vec(&vec![1.0; self.pressure_mass.nrows()])
    }
}

/// Velocity (or any vector field) and its gradient sampled at the
/// quadrature points of every triangle: entry `t * n_points + q`.
#[derive(Clone, Debug)]
pub struct QuadratureField {
    pub n_points: usize,
    pub values: Vec<[f64; 2]>,
    pub grads: Vec<[[f64; 2]; 2]>,
}

impl QuadratureField {
    /// Samples a discrete velocity of `space` at the points of `rule`.
    pub fn from_coefficients(space: &FeSpace, rule: &QuadratureRule, u: &[f64]) -> Self {
        let nq = rule.len();
        let nt = space.mesh().n_triangles();
        let samples: Vec<([f64; 2], [[f64; 2]; 2])> = (0..nt)
            .into_par_iter()
            .flat_map_iter(|t| rule.points().iter().map(move |&l| space.eval_velocity(u, t, l)))
            .collect();
        let (values, grads) = samples.into_iter().unzip();
        Self {
            n_points: nq,
            values,
            grads,
        }
    }

    pub fn zeros(n_triangles: usize, n_points: usize) -> Self {
        Self {
            n_points,
            values: vec![[0.0; 2]; n_triangles * n_points],
            grads: vec![[[0.0; 2]; 2]; n_triangles * n_points],
        }
    }
}

fn scalar_pattern(space: &FeSpace) -> CsrMatrix {
    let ns = space.n_scalar();
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); ns];
    for t in 0..space.mesh().n_triangles() {
        let dofs = space.cell_dofs(t);
        for &i in dofs {
            rows[i].extend_from_slice(dofs);
        }
    }
    CsrMatrix::from_pattern(ns, ns, rows)
}

pub fn assemble_operators(space: &FeSpace) -> AssembledOperators {
    let rule = QuadratureRule::new(space.kind().bilinear_degree()).expect("supported degree");
    let nt = space.mesh().n_triangles();
    let nl = space.n_local();

    struct Local {
        mass: [[f64; 6]; 6],
        stiff: [[f64; 6]; 6],
        // div[j][c][k] = (q_j, d_c phi_k)
        div: [[[f64; 6]; 2]; 3],
        pmass: [[f64; 3]; 3],
    }

    let locals: Vec<Local> = (0..nt)
        .into_par_iter()
        .map(|t| {
            let mut loc = Local {
                mass: [[0.0; 6]; 6],
                stiff: [[0.0; 6]; 6],
                div: [[[0.0; 6]; 2]; 3],
                pmass: [[0.0; 3]; 3],
            };
            let jac = 2.0 * space.area(t);
            for (l, w) in rule.iter() {
                let b = space.basis(t, *l);
                let wj = w * jac;
                for i in 0..nl {
                    for j in 0..nl {
                        loc.mass[i][j] += wj * b.values[i] * b.values[j];
                        loc.stiff[i][j] +=
                            wj * (b.grads[i][0] * b.grads[j][0] + b.grads[i][1] * b.grads[j][1]);
                    }
                }
                for (pj, &q) in l.iter().enumerate() {
                    for c in 0..2 {
                        for k in 0..nl {
                            loc.div[pj][c][k] += wj * q * b.grads[k][c];
                        }
                    }
                    for (pi, &qi) in l.iter().enumerate() {
                        loc.pmass[pj][pi] += wj * q * qi;
                    }
                }
            }
            loc
        })
        .collect();

    let pattern = scalar_pattern(space);
    let mut ms = pattern.clone();
    let mut as_ = pattern.clone();
    let ns = space.n_scalar();
    let np = space.n_pressure();
    let mut div_trip = Vec::with_capacity(nt * 3 * 2 * nl);
    let mut pm_trip = Vec::with_capacity(nt * 9);
    for (t, loc) in locals.iter().enumerate() {
        let dofs = space.cell_dofs(t);
        for (i, &gi) in dofs.iter().enumerate() {
            for (j, &gj) in dofs.iter().enumerate() {
                ms.add(gi, gj, loc.mass[i][j]);
                as_.add(gi, gj, loc.stiff[i][j]);
            }
        }
        let pd = space.cell_pressure_dofs(t);
        for (pj, &gp) in pd.iter().enumerate() {
            for c in 0..2 {
                for (k, &gk) in dofs.iter().enumerate() {
                    div_trip.push((gp, c * ns + gk, loc.div[pj][c][k]));
                }
            }
            for (pi, &gq) in pd.iter().enumerate() {
                pm_trip.push((gp, gq, loc.pmass[pj][pi]));
            }
        }
    }

    AssembledOperators {
        mass: ms.block_diag2(),
        stiffness: as_.block_diag2(),
        divergence: CsrMatrix::from_triplets(np, 2 * ns, &div_trip),
        pressure_mass: CsrMatrix::from_triplets(np, np, &pm_trip),
        scalar_pattern: pattern,
    }
}

/// Rule used for trilinear integrands.
pub fn trilinear_rule(space: &FeSpace) -> QuadratureRule {
    QuadratureRule::new(space.kind().trilinear_degree()).expect("supported degree")
}

/// `r_i = b(v, w, phi_i)` with `b(v,w,phi) = 1/2 (v.grad w, phi) - 1/2 (v.grad phi, w)`,
/// from fields sampled at the points of `rule` (see [`trilinear_rule`]).
pub fn trilinear_vector_from_fields(
    space: &FeSpace,
    rule: &QuadratureRule,
    v: &QuadratureField,
    w: &QuadratureField,
) -> Vec<f64> {
    let nt = space.mesh().n_triangles();
    let nq = rule.len();
    let nl = space.n_local();
    let locals: Vec<[[f64; 6]; 2]> = (0..nt)
        .into_par_iter()
        .map(|t| {
            let mut r = [[0.0; 6]; 2];
            let jac = 2.0 * space.area(t);
            for (q, (l, wt)) in rule.iter().enumerate() {
                let b = space.basis(t, *l);
                let k = t * nq + q;
                let (vv, wv, wg) = (v.values[k], w.values[k], w.grads[k]);
                let wj = 0.5 * wt * jac;
                for c in 0..2 {
                    // v . grad w_c
                    let conv = vv[0] * wg[c][0] + vv[1] * wg[c][1];
                    for i in 0..nl {
                        let vgrad_phi = vv[0] * b.grads[i][0] + vv[1] * b.grads[i][1];
                        r[c][i] += wj * (conv * b.values[i] - vgrad_phi * wv[c]);
                    }
                }
            }
            r
        })
        .collect();
    let ns = space.n_scalar();
    let mut out = vec![0.0; 2 * ns];
    for (t, r) in locals.iter().enumerate() {
        for (i, &g) in space.cell_dofs(t).iter().enumerate() {
            out[g] += r[0][i];
            out[ns + g] += r[1][i];
        }
    }
    out
}

/// `r_i = b(v, w, phi_i)` for two discrete velocities of `space`.
pub fn assemble_trilinear_vector(space: &FeSpace, v: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    check_len(space.n_velocity(), v.len())?;
    check_len(space.n_velocity(), w.len())?;
    let rule = trilinear_rule(space);
    let fv = QuadratureField::from_coefficients(space, &rule, v);
    let fw = if v == w {
        fv.clone()
    } else {
        QuadratureField::from_coefficients(space, &rule, w)
    };
    Ok(trilinear_vector_from_fields(space, &rule, &fv, &fw))
}

/// `N(w)[i][j] = b(w, phi_j, phi_i)`, on the shared velocity pattern.
pub fn assemble_oseen_matrix(space: &FeSpace, ops: &AssembledOperators, w: &[f64]) -> Result<CsrMatrix> {
    check_len(space.n_velocity(), w.len())?;
    let rule = trilinear_rule(space);
    let nt = space.mesh().n_triangles();
    let nl = space.n_local();
    let locals: Vec<[[f64; 6]; 6]> = (0..nt)
        .into_par_iter()
        .map(|t| {
            let mut c = [[0.0; 6]; 6];
            let jac = 2.0 * space.area(t);
            for (l, wt) in rule.iter() {
                let b = space.basis(t, *l);
                let (wv, _) = space.combine(w, t, &b);
                let wj = 0.5 * wt * jac;
                let mut adv = [0.0; 6];
                for (i, a) in adv.iter_mut().enumerate().take(nl) {
                    *a = wv[0] * b.grads[i][0] + wv[1] * b.grads[i][1];
                }
                for i in 0..nl {
                    for j in 0..nl {
                        c[i][j] += wj * (adv[j] * b.values[i] - adv[i] * b.values[j]);
                    }
                }
            }
            c
        })
        .collect();
    let mut scalar = ops.scalar_pattern.clone();
    for (t, c) in locals.iter().enumerate() {
        let dofs = space.cell_dofs(t);
        for (i, &gi) in dofs.iter().enumerate() {
            for (j, &gj) in dofs.iter().enumerate() {
                scalar.add(gi, gj, c[i][j]);
            }
        }
    }
    Ok(scalar.block_diag2())
}

/// `(f(., t), phi_i)` by quadrature of degree [`LOAD_DEGREE`].
pub fn assemble_load<F>(space: &FeSpace, f: F, t: f64) -> Vec<f64>
where
    F: Fn(Point, f64) -> [f64; 2] + Sync,
{
    let rule = QuadratureRule::new(LOAD_DEGREE).expect("supported degree");
    let nt = space.mesh().n_triangles();
    let nl = space.n_local();
    let mesh = space.mesh();
    let locals: Vec<[[f64; 6]; 2]> = (0..nt)
        .into_par_iter()
        .map(|k| {
            let mut r = [[0.0; 6]; 2];
            let jac = 2.0 * space.area(k);
            for (l, w) in rule.iter() {
                let b = space.basis(k, *l);
                let fx = f(mesh.point_from_barycentric(k, *l), t);
                for i in 0..nl {
                    r[0][i] += w * jac * fx[0] * b.values[i];
                    r[1][i] += w * jac * fx[1] * b.values[i];
                }
            }
            r
        })
        .collect();
    let ns = space.n_scalar();
    let mut out = vec![0.0; 2 * ns];
    for (k, r) in locals.iter().enumerate() {
        for (i, &g) in space.cell_dofs(k).iter().enumerate() {
            out[g] += r[0][i];
            out[ns + g] += r[1][i];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::ElementKind;
    use crate::mesh::Mesh;
    use crate::sparse::{dot, max_abs};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space(n: usize, kind: ElementKind) -> FeSpace {
        FeSpace::new(Mesh::unit_square(n).unwrap(), kind)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn p1_element_matrices() {
        // n=1 P1: triangle 0 is (0,0),(1,0),(1,1), area 1/2
        let s = space(1, ElementKind::P1P1);
        let ops = assemble_operators(&s);
        // vertex 0 is shared by both triangles, vertex 1 only by triangle 0
        let m = &ops.mass;
        let area: f64 = 0.5;
        assert!((m.get(1, 1) - area / 12.0 * 2.0).abs() < 1e-15);
        assert!((m.get(1, 0) - area / 12.0).abs() < 1e-15);
        assert!((m.get(0, 0) - 2.0 * area / 12.0 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn p1_stiffness_on_unit_right_triangle() {
        // Map the reference triangle: use the local matrix of triangle 1 of
        // the n=1 mesh, (0,0),(1,1),(0,1), which is congruent to
        // (0,0),(1,0),(0,1) with the right angle at vertex 2 -> check the
        // closed form for the right angle vertex.
        let s = space(1, ElementKind::P1P1);
        let t = 1;
        let g = s.grad_lambda(t);
        let a = s.area(t);
        let k: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| a * (g[i][0] * g[j][0] + g[i][1] * g[j][1])).collect())
            .collect();
        // right angle at local vertex 2 (0,1): 1/2 [[1,0,-1],[0,1,-1],[-1,-1,2]]
        let expect = [[0.5, 0.0, -0.5], [0.0, 0.5, -0.5], [-0.5, -0.5, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - expect[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_sums_to_area_and_symmetry() {
        for kind in [ElementKind::Mini, ElementKind::TaylorHood] {
            let s = space(4, kind);
            let ops = assemble_operators(&s);
            let ns = s.n_scalar();
            // x-component block with the constant function (nodal part only)
            let mut one = vec![0.0; 2 * ns];
            for v in 0..s.mesh().n_vertices() {
                one[v] = 1.0;
            }
            if kind == ElementKind::TaylorHood {
                for e in 0..s.edges().len() {
                    one[s.mesh().n_vertices() + e] = 1.0;
                }
            }
            assert!((ops.mass.quadratic_form(&one) - 1.0).abs() < 1e-13);
            assert!(ops.mass.is_symmetric(1e-12));
            assert!(ops.stiffness.is_symmetric(1e-12));
            assert!(ops.pressure_mass.is_symmetric(1e-12));
            // constants are in the kernel of the unrestricted stiffness
            assert!(max_abs(&ops.stiffness.mul_vec(&one)) < 1e-12);
        }
    }

    #[test]
    fn mass_positive_definite() {
        let s = space(3, ElementKind::Mini);
        let ops = assemble_operators(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x = random_vec(&mut rng, s.n_velocity());
            assert!(ops.mass.quadratic_form(&x) > 0.0);
        }
        let a = ops.stiffness.to_dense();
        let int = s.interior_dofs();
        let ai = DMatrix::from_fn(int.len(), int.len(), |i, j| a[(int[i], int[j])]);
        assert!(ai.cholesky().is_some());
    }

    #[test]
    fn divergence_matches_quadrature() {
        let s = space(3, ElementKind::Mini);
        let ops = assemble_operators(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut u = random_vec(&mut rng, s.n_velocity());
        s.apply_no_slip(&mut u);
        let bu = ops.divergence.mul_vec(&u);
        let rule = QuadratureRule::new(10).unwrap();
        let mut direct = vec![0.0; s.n_pressure()];
        for t in 0..s.mesh().n_triangles() {
            for (l, w) in rule.iter() {
                let (_, g) = s.eval_velocity(&u, t, *l);
                let div = g[0][0] + g[1][1];
                for (k, &p) in s.cell_pressure_dofs(t).iter().enumerate() {
                    direct[p] += w * 2.0 * s.area(t) * l[k] * div;
                }
            }
        }
        for (a, b) in bu.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn skew_form_vanishes_and_is_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in [ElementKind::Mini, ElementKind::TaylorHood] {
            let s = space(4, kind);
            for _ in 0..20 {
                let v = random_vec(&mut rng, s.n_velocity());
                let w = random_vec(&mut rng, s.n_velocity());
                let phi = random_vec(&mut rng, s.n_velocity());
                let r = assemble_trilinear_vector(&s, &v, &w).unwrap();
                let scale = max_abs(&r);
                assert!(dot(&r, &w).abs() <= 1e-12 * scale * s.n_velocity() as f64);
                let r2 = assemble_trilinear_vector(&s, &v, &phi).unwrap();
                assert!((dot(&r, &phi) + dot(&r2, &w)).abs() <= 1e-12 * scale * s.n_velocity() as f64);
            }
        }
        let s = space(2, ElementKind::Mini);
        let z = vec![0.0; s.n_velocity()];
        assert!(assemble_trilinear_vector(&s, &z, &z).unwrap().iter().all(|&x| x == 0.0));
        assert!(assemble_trilinear_vector(&s, &z[1..], &z).is_err());
    }

    #[test]
    fn oseen_matrix_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = space(4, ElementKind::Mini);
        let ops = assemble_operators(&s);
        let z = vec![0.0; s.n_velocity()];
        assert!(assemble_oseen_matrix(&s, &ops, &z).unwrap().values().iter().all(|&v| v == 0.0));
        for _ in 0..20 {
            let w = random_vec(&mut rng, s.n_velocity());
            let u = random_vec(&mut rng, s.n_velocity());
            let n = assemble_oseen_matrix(&s, &ops, &w).unwrap();
            assert!(n.same_pattern(&ops.mass));
            let scale = n.max_abs();
            assert!(n.quadratic_form(&u).abs() <= 1e-12 * scale * s.n_velocity() as f64);
            let nu = n.mul_vec(&u);
            let r = assemble_trilinear_vector(&s, &w, &u).unwrap();
            let diff = nu.iter().zip(&r).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(diff <= 1e-13 * scale.max(1.0) * 10.0, "diff {diff}");
        }
    }

    #[test]
    fn load_vectors() {
        let s = space(4, ElementKind::Mini);
        assert!(assemble_load(&s, |_, _| [0.0, 0.0], 0.0).iter().all(|&v| v == 0.0));
        let r = assemble_load(&s, |_, _| [1.0, 0.0], 0.0);
        let nv = s.mesh().n_vertices();
        assert!((r[..nv].iter().sum::<f64>() - 1.0).abs() < 1e-13);

        // f = (x, y) against a composite-refinement oracle: integrate on the
        // four red children of each triangle with a degree-10 rule
        let r = assemble_load(&s, |p, _| [p[0], p[1]], 0.0);
        let rule = QuadratureRule::new(10).unwrap();
        let mut oracle = vec![0.0; s.n_velocity()];
        let ns = s.n_scalar();
        let kids: [[[f64; 3]; 3]; 4] = [
            [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5]],
            [[0.5, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.5, 0.5]],
            [[0.5, 0.0, 0.5], [0.0, 0.5, 0.5], [0.0, 0.0, 1.0]],
            [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
        ];
        for t in 0..s.mesh().n_triangles() {
            for kid in &kids {
                for (l, w) in rule.iter() {
                    let lb: [f64; 3] =
                        std::array::from_fn(|i| l[0] * kid[0][i] + l[1] * kid[1][i] + l[2] * kid[2][i]);
                    let x = s.mesh().point_from_barycentric(t, lb);
                    let b = s.basis(t, lb);
                    for (i, &g) in s.cell_dofs(t).iter().enumerate() {
                        let wt = w * 2.0 * s.area(t) / 4.0 * b.values[i];
                        oracle[g] += wt * x[0];
                        oracle[ns + g] += wt * x[1];
                    }
                }
            }
        }
        for (a, b) in r.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
