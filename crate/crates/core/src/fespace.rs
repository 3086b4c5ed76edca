//! Mixed velocity/pressure finite element spaces on structured meshes.
//!
//! Velocity vectors are stored component-major: the first `n_scalar`
//! entries are x-components, the next `n_scalar` the y-components. Scalar
//! velocity dofs are numbered vertices first, then edges (Taylor-Hood) or
//! one bubble per triangle (mini). Pressure is continuous P1 with one dof
//! per vertex for every element kind.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

/// Velocity/pressure pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementKind {
    /// P1 plus cubic bubble / P1.
    Mini,
    /// P2 / P1.
    TaylorHood,
    /// Equal-order P1 / P1. Violates the inf-sup condition; only for
    /// diagnostics.
    P1P1,
}

impl ElementKind {
    pub fn local_velocity_dofs(self) -> usize {
        match self {
            ElementKind::Mini => 4,
            ElementKind::TaylorHood => 6,
            ElementKind::P1P1 => 3,
        }
    }

    /// Degree making mass, stiffness and divergence forms exact.
    pub fn bilinear_degree(self) -> usize {
        match self {
            ElementKind::Mini => 6,
            ElementKind::TaylorHood => 4,
            ElementKind::P1P1 => 2,
        }
    }

    /// Degree making the trilinear form `(v.grad w, phi)` exact.
    pub fn trilinear_degree(self) -> usize {
        match self {
            ElementKind::Mini => 8,
            ElementKind::TaylorHood => 5,
            ElementKind::P1P1 => 3,
        }
    }
}

impl std::str::FromStr for ElementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mini" => Ok(ElementKind::Mini),
            "taylor_hood" | "taylor-hood" | "p2p1" => Ok(ElementKind::TaylorHood),
            "p1p1" => Ok(ElementKind::P1P1),
            other => Err(Error::InvalidArgument(format!("unknown element kind '{other}'"))),
        }
    }
}

/// Geometric entity carrying a scalar velocity dof.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DofEntity {
    Vertex(usize),
    Edge(usize),
    Bubble(usize),
}

/// Values and physical gradients of the local scalar shape functions at one
/// point. Only the first `n` entries are meaningful.
#[derive(Clone, Copy, Debug, Default)]
pub struct LocalBasis {
    pub n: usize,
    pub values: [f64; 6],
    pub grads: [[f64; 2]; 6],
}

#[derive(Clone, Copy, Debug)]
struct TriangleGeometry {
    area: f64,
    grad_lambda: [[f64; 2]; 3],
}

#[derive(Clone, Debug)]
pub struct FeSpace {
    mesh: Mesh,
    kind: ElementKind,
    geometry: Vec<TriangleGeometry>,
    cell_dofs: Vec<[usize; 6]>,
    entities: Vec<DofEntity>,
    edges: Vec<[usize; 2]>,
    dirichlet: Vec<bool>,
    interior: Vec<usize>,
}

impl FeSpace {
    pub fn new(mesh: Mesh, kind: ElementKind) -> Self {
        let nv = mesh.n_vertices();
        let geometry = (0..mesh.n_triangles())
            .map(|t| {
                let [a, b, c] = mesh.triangle_points(t);
                let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
                // gradients of the barycentric coordinates
                let g1 = [(c[1] - a[1]) / det, -(c[0] - a[0]) / det];
                let g2 = [-(b[1] - a[1]) / det, (b[0] - a[0]) / det];
                let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
                TriangleGeometry {
                    area: 0.5 * det.abs(),
                    grad_lambda: [g0, g1, g2],
                }
            })
            .collect();

        let mut entities: Vec<DofEntity> = (0..nv).map(DofEntity::Vertex).collect();
        let mut dirichlet: Vec<bool> = (0..nv).map(|v| mesh.is_boundary_vertex(v)).collect();
        let mut edges = Vec::new();
        let cell_dofs: Vec<[usize; 6]> = match kind {
            ElementKind::P1P1 => mesh
                .triangles()
                .iter()
                .map(|&[a, b, c]| [a, b, c, 0, 0, 0])
                .collect(),
            ElementKind::Mini => {
                let nt = mesh.n_triangles();
                entities.extend((0..nt).map(DofEntity::Bubble));
                dirichlet.extend(std::iter::repeat_n(false, nt));
                mesh.triangles()
                    .iter()
                    .enumerate()
                    .map(|(t, &[a, b, c])| [a, b, c, nv + t, 0, 0])
                    .collect()
            }
            ElementKind::TaylorHood => {
                let mut keys: Vec<[usize; 2]> = mesh
                    .triangles()
                    .iter()
                    .flat_map(|&[a, b, c]| [[a, b], [b, c], [c, a]])
                    .map(|[p, q]| [p.min(q), p.max(q)])
                    .collect();
                keys.sort_unstable();
                keys.dedup();
                let index: HashMap<[usize; 2], usize> =
                    keys.iter().enumerate().map(|(i, &e)| (e, i)).collect();
                for (i, &[p, q]) in keys.iter().enumerate() {
                    entities.push(DofEntity::Edge(i));
                    let (a, b) = (mesh.vertices()[p], mesh.vertices()[q]);
                    let m = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
                    dirichlet.push(on_boundary(m));
                }
                edges = keys;
                mesh.triangles()
                    .iter()
                    .map(|&[a, b, c]| {
                        let e = |p: usize, q: usize| nv + index[&[p.min(q), p.max(q)]];
                        [a, b, c, e(a, b), e(b, c), e(c, a)]
                    })
                    .collect()
            }
        };

        let ns = entities.len();
        let interior = (0..2)
            .flat_map(|comp| {
                dirichlet
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| !**d)
                    .map(move |(i, _)| comp * ns + i)
            })
            .collect();

        Self {
            mesh,
            kind,
            geometry,
            cell_dofs,
            entities,
            edges,
            dirichlet,
            interior,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    /// Scalar velocity dofs per component.
    pub fn n_scalar(&self) -> usize {
        self.entities.len()
    }

    pub fn n_velocity(&self) -> usize {
        2 * self.entities.len()
    }

    pub fn n_pressure(&self) -> usize {
        self.mesh.n_vertices()
    }

    /// Velocity dof indices not constrained by the no-slip condition.
    pub fn interior_dofs(&self) -> &[usize] {
        &self.interior
    }

    pub fn is_dirichlet(&self, velocity_dof: usize) -> bool {
        self.dirichlet[velocity_dof % self.n_scalar()]
    }

    /// Entity and component (0 = x, 1 = y) of a velocity dof.
    pub fn dof_entity(&self, velocity_dof: usize) -> (DofEntity, usize) {
        let ns = self.n_scalar();
        (self.entities[velocity_dof % ns], velocity_dof / ns)
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn n_local(&self) -> usize {
        self.kind.local_velocity_dofs()
    }

    /// Global scalar velocity dofs of triangle `t`.
    pub fn cell_dofs(&self, t: usize) -> &[usize] {
        &self.cell_dofs[t][..self.n_local()]
    }

    /// Global pressure dofs of triangle `t`.
    pub fn cell_pressure_dofs(&self, t: usize) -> [usize; 3] {
        self.mesh.triangles()[t]
    }

    pub fn area(&self, t: usize) -> f64 {
        self.geometry[t].area
    }

    /// Physical gradients of the barycentric coordinates (= P1 pressure
    /// basis gradients) on triangle `t`.
    pub fn grad_lambda(&self, t: usize) -> [[f64; 2]; 3] {
        self.geometry[t].grad_lambda
    }

    /// Local velocity shape functions of triangle `t` at barycentric point `l`.
    pub fn eval_basis(&self, t: usize, l: [f64; 3]) -> Result<LocalBasis> {
        if t >= self.mesh.n_triangles() {
            return Err(Error::InvalidTriangle(t));
        }
        Ok(self.basis(t, l))
    }

    pub(crate) fn basis(&self, t: usize, l: [f64; 3]) -> LocalBasis {
        let g = self.geometry[t].grad_lambda;
        let mut b = LocalBasis {
            n: self.n_local(),
            ..Default::default()
        };
        match self.kind {
            ElementKind::P1P1 | ElementKind::Mini => {
                for i in 0..3 {
                    b.values[i] = l[i];
                    b.grads[i] = g[i];
                }
                if self.kind == ElementKind::Mini {
                    b.values[3] = 27.0 * l[0] * l[1] * l[2];
                    let (c0, c1, c2) = (l[1] * l[2], l[0] * l[2], l[0] * l[1]);
                    for d in 0..2 {
                        b.grads[3][d] = 27.0 * (c0 * g[0][d] + c1 * g[1][d] + c2 * g[2][d]);
                    }
                }
            }
            ElementKind::TaylorHood => {
                for i in 0..3 {
                    b.values[i] = l[i] * (2.0 * l[i] - 1.0);
                    for d in 0..2 {
                        b.grads[i][d] = (4.0 * l[i] - 1.0) * g[i][d];
                    }
                }
                for (k, (i, j)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
                    b.values[3 + k] = 4.0 * l[i] * l[j];
                    for d in 0..2 {
                        b.grads[3 + k][d] = 4.0 * (l[i] * g[j][d] + l[j] * g[i][d]);
                    }
                }
            }
        }
        b
    }

    /// Velocity value and gradient (`grad[c][d] = d u_c / d x_d`) of the
    /// discrete field `u` on triangle `t` at barycentric point `l`.
    pub fn eval_velocity(&self, u: &[f64], t: usize, l: [f64; 3]) -> ([f64; 2], [[f64; 2]; 2]) {
        let b = self.basis(t, l);
        self.combine(u, t, &b)
    }

    pub(crate) fn combine(&self, u: &[f64], t: usize, b: &LocalBasis) -> ([f64; 2], [[f64; 2]; 2]) {
        let ns = self.n_scalar();
        let mut val = [0.0; 2];
        let mut grad = [[0.0; 2]; 2];
        for (i, &g) in self.cell_dofs(t).iter().enumerate() {
            for c in 0..2 {
                let coef = u[c * ns + g];
                val[c] += coef * b.values[i];
                grad[c][0] += coef * b.grads[i][0];
                grad[c][1] += coef * b.grads[i][1];
            }
        }
        (val, grad)
    }

    pub fn eval_pressure(&self, p: &[f64], t: usize, l: [f64; 3]) -> f64 {
        let [a, b, c] = self.cell_pressure_dofs(t);
        l[0] * p[a] + l[1] * p[b] + l[2] * p[c]
    }

    /// Evaluates a discrete velocity at an arbitrary point of the domain.
    pub fn eval_velocity_at(&self, u: &[f64], x: Point) -> Result<[f64; 2]> {
        let (t, l) = self.mesh.locate(x, None)?;
        Ok(self.eval_velocity(u, t, l).0)
    }

    /// Nodal interpolant of a vector field. Bubble coefficients make the
    /// interpolant match the field at each centroid.
    pub fn interpolate(&self, field: impl Fn(Point) -> [f64; 2]) -> Vec<f64> {
        let ns = self.n_scalar();
        let verts = self.mesh.vertices();
        let mut u = vec![0.0; 2 * ns];
        let vals: Vec<[f64; 2]> = verts.iter().map(|&p| field(p)).collect();
        for (v, f) in vals.iter().enumerate() {
            u[v] = f[0];
            u[ns + v] = f[1];
        }
        match self.kind {
            ElementKind::P1P1 => {}
            ElementKind::Mini => {
                let nv = verts.len();
                for t in 0..self.mesh.n_triangles() {
                    let f = field(self.mesh.centroid(t));
                    let [a, b, c] = self.mesh.triangles()[t];
                    for comp in 0..2 {
                        let p1 = (vals[a][comp] + vals[b][comp] + vals[c][comp]) / 3.0;
                        u[comp * ns + nv + t] = f[comp] - p1;
                    }
                }
            }
            ElementKind::TaylorHood => {
                let nv = verts.len();
                for (e, &[p, q]) in self.edges.iter().enumerate() {
                    let m = [(verts[p][0] + verts[q][0]) / 2.0, (verts[p][1] + verts[q][1]) / 2.0];
                    let f = field(m);
                    u[nv + e] = f[0];
                    u[ns + nv + e] = f[1];
                }
            }
        }
        u
    }

    /// Nodal P1 interpolant of a scalar (pressure) field.
    pub fn interpolate_pressure(&self, field: impl Fn(Point) -> f64) -> Vec<f64> {
        self.mesh.vertices().iter().map(|&p| field(p)).collect()
    }

    /// Zeroes every Dirichlet coefficient.
    pub fn apply_no_slip(&self, u: &mut [f64]) {
        let ns = self.n_scalar();
        for (i, c) in u.iter_mut().enumerate() {
            if self.dirichlet[i % ns] {
                *c = 0.0;
            }
        }
    }

    /// Gathers the interior entries of a full velocity vector.
    pub fn restrict(&self, u: &[f64]) -> Vec<f64> {
        self.interior.iter().map(|&i| u[i]).collect()
    }

    /// Scatters interior values into a full velocity vector (boundary = 0).
    pub fn extend(&self, u_int: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.n_velocity()];
        for (&i, &v) in self.interior.iter().zip(u_int) {
            u[i] = v;
        }
        u
    }
}

fn on_boundary(p: Point) -> bool {
    p.iter().any(|&x| x.abs() < 1e-14 || (x - 1.0).abs() < 1e-14)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space(n: usize, kind: ElementKind) -> FeSpace {
        FeSpace::new(Mesh::unit_square(n).unwrap(), kind)
    }

    #[test]
    fn dof_counts() {
        let s = space(2, ElementKind::Mini);
        assert_eq!((s.n_velocity(), s.n_pressure()), (34, 9));
        let s = space(2, ElementKind::TaylorHood);
        assert_eq!((s.n_velocity(), s.n_pressure()), (50, 9));
        for n in [1, 3, 6] {
            let s = space(n, ElementKind::Mini);
            assert_eq!(s.n_velocity(), 2 * ((n + 1) * (n + 1) + 2 * n * n));
        }
    }

    #[test]
    fn single_cell_interior_is_bubbles() {
        let s = space(1, ElementKind::Mini);
        assert_eq!(s.interior_dofs().len(), 4);
        for &i in s.interior_dofs() {
            assert!(matches!(s.dof_entity(i).0, DofEntity::Bubble(_)));
        }
        // the diagonal edge of the single cell is interior for P2
        let s = space(1, ElementKind::TaylorHood);
        assert_eq!(s.interior_dofs().len(), 2);
    }

    #[test]
    fn boundary_dofs_excluded() {
        for kind in [ElementKind::Mini, ElementKind::TaylorHood] {
            let s = space(4, kind);
            let verts = s.mesh().vertices();
            for &i in s.interior_dofs() {
                match s.dof_entity(i).0 {
                    DofEntity::Vertex(v) => assert!(!on_boundary(verts[v])),
                    DofEntity::Edge(e) => {
                        let [p, q] = s.edges()[e];
                        let m = [(verts[p][0] + verts[q][0]) / 2.0, (verts[p][1] + verts[q][1]) / 2.0];
                        assert!(!on_boundary(m));
                    }
                    DofEntity::Bubble(_) => {}
                }
            }
        }
    }

    #[test]
    fn kronecker_and_bubble() {
        let s = space(3, ElementKind::Mini);
        let e = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for (i, l) in e.iter().enumerate() {
            let b = s.eval_basis(5, *l).unwrap();
            for j in 0..3 {
                assert_eq!(b.values[j], if i == j { 1.0 } else { 0.0 });
            }
            assert_eq!(b.values[3], 0.0);
        }
        let b = s.eval_basis(5, [1.0 / 3.0; 3]).unwrap();
        assert!((b.values[3] - 1.0).abs() < 1e-15);
        assert!(s.eval_basis(999, [1.0 / 3.0; 3]).is_err());
    }

    fn random_bary(rng: &mut ChaCha8Rng) -> [f64; 3] {
        let (mut a, mut b) = (rng.random::<f64>(), rng.random::<f64>());
        if a + b > 1.0 {
            a = 1.0 - a;
            b = 1.0 - b;
        }
        [1.0 - a - b, a, b]
    }

    #[test]
    fn partition_of_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in [ElementKind::Mini, ElementKind::TaylorHood] {
            let s = space(3, kind);
            let nodal = if kind == ElementKind::Mini { 3 } else { 6 };
            for t in 0..s.mesh().n_triangles() {
                for _ in 0..100 {
                    let b = s.basis(t, random_bary(&mut rng));
                    let sum: f64 = b.values[..nodal].iter().sum();
                    assert!((sum - 1.0).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for kind in [ElementKind::Mini, ElementKind::TaylorHood] {
            let s = space(2, kind);
            let m = s.mesh();
            for t in 0..m.n_triangles() {
                let l = random_bary(&mut rng);
                let l = l.map(|x| 0.1 + 0.7 * x);
                let l = l.map(|x| x / l.iter().sum::<f64>());
                let p = m.point_from_barycentric(t, l);
                let b = s.basis(t, l);
                for d in 0..2 {
                    let (mut qp, mut qm) = (p, p);
                    qp[d] += h;
                    qm[d] -= h;
                    let bp = s.basis(t, m.barycentric(t, qp));
                    let bm = s.basis(t, m.barycentric(t, qm));
                    for i in 0..b.n {
                        let fd = (bp.values[i] - bm.values[i]) / (2.0 * h);
                        assert!((fd - b.grads[i][d]).abs() < 1e-6, "{kind:?} t{t} i{i} d{d}");
                    }
                }
            }
        }
    }

    #[test]
    fn interpolation_of_constants_and_linears() {
        let s = space(4, ElementKind::Mini);
        let u = s.interpolate(|_| [2.5, -1.0]);
        let nv = s.mesh().n_vertices();
        let ns = s.n_scalar();
        assert!(u[..nv].iter().all(|&c| c == 2.5));
        assert!(u[ns..ns + nv].iter().all(|&c| c == -1.0));
        assert!(u[nv..ns].iter().all(|&c| c == 0.0));

        let u = s.interpolate(|p| [p[0] + p[1], 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for t in 0..s.mesh().n_triangles() {
            let l = random_bary(&mut rng);
            let x = s.mesh().point_from_barycentric(t, l);
            let (v, g) = s.eval_velocity(&u, t, l);
            assert!((v[0] - x[0] - x[1]).abs() < 1e-14);
            assert!((g[0][0] - 1.0).abs() < 1e-12 && (g[0][1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn numbering_is_deterministic() {
        let a = space(5, ElementKind::TaylorHood);
        let b = space(5, ElementKind::TaylorHood);
        assert_eq!(a.cell_dofs, b.cell_dofs);
        assert_eq!(a.interior, b.interior);
    }
}
