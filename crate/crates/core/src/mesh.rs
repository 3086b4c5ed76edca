//! Structured triangulations of the unit square.
//!
//! Vertex `(i, j)` sits at `(i/n, j/n)` and has index `i + j(n+1)`. Cell
//! `(i, j)` owns triangles `2k` and `2k+1` with `k = i + j n`; both are split
//! along the bottom-left to top-right diagonal:
//!
//! ```text
//!   v01 ---- v11
//!    |  2k+1 / |
//!    |     /   |
//!    |   /  2k |
//!   v00 ---- v10
//! ```
//!
//! Red refinement (midpoint subdivision) of this family reproduces the same
//! family at `2n`, so refined meshes keep the lexicographic numbering and
//! only need a parent map on top.

use crate::error::{Error, Result};

pub type Point = [f64; 2];

const EPS_BOUNDARY: f64 = 1e-14;
const EPS_INSIDE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    n: usize,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    level: usize,
    parent: Option<Vec<usize>>,
}

impl Mesh {
    /// Builds the `n x n` structured mesh of the unit square.
    pub fn unit_square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("mesh needs n >= 1".into()));
        }
        let h = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        let mut boundary = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 * h, j as f64 * h]);
                boundary.push(i == 0 || j == 0 || i == n || j == n);
            }
        }
        let vid = |i: usize, j: usize| i + j * (n + 1);
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v11, v01) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Ok(Self {
            n,
            vertices,
            triangles,
            boundary,
            level: 0,
            parent: None,
        })
    }

    /// Red refinement: every triangle is split into four through its edge
    /// midpoints. The parent of each fine triangle is recorded.
    pub fn refine_uniform(&self) -> Self {
        let mut fine = Mesh::unit_square(2 * self.n).expect("n >= 1");
        fine.level = self.level + 1;
        let parent = (0..fine.n_triangles())
            .map(|t| {
                let c = fine.centroid(t);
                self.locate_cell(c)
            })
            .collect();
        fine.parent = Some(parent);
        fine
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Mesh size `1/n` (leg length of every triangle).
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.boundary.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i)
    }

    /// Parent triangle in the mesh this one was refined from.
    pub fn parent(&self, t: usize) -> Option<usize> {
        self.parent.as_ref().map(|p| p[t])
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let [a, b, c] = self.triangle_points(t);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let dx = p[0] - a[0];
        let dy = p[1] - a[1];
        let l1 = (dx * (c[1] - a[1]) - (c[0] - a[0]) * dy) / det;
        let l2 = ((b[0] - a[0]) * dy - dx * (b[1] - a[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    pub fn point_from_barycentric(&self, t: usize, l: [f64; 3]) -> Point {
        let [a, b, c] = self.triangle_points(t);
        [
            l[0] * a[0] + l[1] * b[0] + l[2] * c[0],
            l[0] * a[1] + l[1] * b[1] + l[2] * c[1],
        ]
    }

    /// Triangle of the structured grid containing `p` (ties broken towards
    /// the lower-right triangle of the lower-left cell).
    fn locate_cell(&self, p: Point) -> usize {
        let n = self.n;
        let nf = n as f64;
        let i = ((p[0] * nf).floor().max(0.0) as usize).min(n - 1);
        let j = ((p[1] * nf).floor().max(0.0) as usize).min(n - 1);
        let lx = p[0] * nf - i as f64;
        let ly = p[1] * nf - j as f64;
        let k = i + j * n;
        if lx >= ly {
            2 * k
        } else {
            2 * k + 1
        }
    }

    /// Finds a triangle of `self` containing `p`, with barycentric coordinates.
    ///
    /// With a `hint` (a triangle known to contain `p`, e.g. the ancestor of
    /// the fine triangle the point came from) the lookup skips the search.
    pub fn locate(&self, p: Point, hint: Option<usize>) -> Result<(usize, [f64; 3])> {
        if !(-EPS_BOUNDARY..=1.0 + EPS_BOUNDARY).contains(&p[0])
            || !(-EPS_BOUNDARY..=1.0 + EPS_BOUNDARY).contains(&p[1])
            || p[0].is_nan()
            || p[1].is_nan()
        {
            return Err(Error::OutsideDomain(p[0], p[1]));
        }
        if let Some(t) = hint {
            if t >= self.n_triangles() {
                return Err(Error::InvalidTriangle(t));
            }
            let l = self.barycentric(t, p);
            if l.iter().all(|&x| x >= -EPS_INSIDE) {
                return Ok((t, clamp_barycentric(l)));
            }
            return Err(Error::NestingViolation(format!(
                "point ({}, {}) is not inside hinted triangle {t}",
                p[0], p[1]
            )));
        }
        let t = self.locate_cell(p);
        Ok((t, clamp_barycentric(self.barycentric(t, p))))
    }

    /// For every triangle of `fine`, the triangle of `self` containing it.
    ///
    /// Requires `fine.n() = 2^k * self.n()`, which is what repeated
    /// [`Mesh::refine_uniform`] produces.
    pub fn ancestors_of(&self, fine: &Mesh) -> Result<Vec<usize>> {
        if fine.n % self.n != 0 || !(fine.n / self.n).is_power_of_two() {
            return Err(Error::NestingViolation(format!(
                "fine n={} is not a power-of-two multiple of coarse n={}",
                fine.n, self.n
            )));
        }
        Ok((0..fine.n_triangles())
            .map(|t| self.locate_cell(fine.centroid(t)))
            .collect())
    }
}

fn clamp_barycentric(l: [f64; 3]) -> [f64; 3] {
    let c = l.map(|x| x.clamp(0.0, 1.0));
    let s: f64 = c.iter().sum();
    c.map(|x| x / s)
}
