//! Compressed sparse row matrices and the few dense-vector helpers the
//! solvers need.

use nalgebra::DMatrix;

use crate::error::{check_len, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries; column indices end up strictly increasing.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i},{j}) outside {nrows}x{ncols}");
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            for (j, v) in r {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Zero matrix with the given per-row column sets.
    pub fn from_pattern(nrows: usize, ncols: usize, rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    /// Position of entry `(i, j)` in the value array.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.find(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds to an entry that must already be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .find(i, j)
            .unwrap_or_else(|| panic!("entry ({i},{j}) not in sparsity pattern"));
        self.values[k] += v;
    }

    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    /// `sum_k c_k A_k` over matrices sharing one pattern.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> CsrMatrix {
        let mut out = terms[0].1.clone();
        out.values.iter_mut().for_each(|v| *v = 0.0);
        for &(c, m) in terms {
            assert!(out.same_pattern(m), "linear_combination needs a shared pattern");
            for (o, v) in out.values.iter_mut().zip(&m.values) {
                *o += c * v;
            }
        }
        out
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn try_mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.ncols, x.len())?;
        Ok(self.mul_vec(x))
    }

    /// `y = A^T x`
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k]] += self.values[k] * xi;
            }
        }
        y
    }

    /// `x^T A x`
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                t.push((j, i, v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    /// Submatrix on the given rows and columns, plus for each retained
    /// entry its position in `self`'s value array.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> (CsrMatrix, Vec<usize>) {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut origin = Vec::new();
        row_ptr.push(0);
        for &r in rows {
            // cols are increasing when `cols` is sorted; sort anyway
            let mut entries: Vec<(usize, usize)> = (self.row_ptr[r]..self.row_ptr[r + 1])
                .filter(|&k| col_map[self.col_idx[k]] != usize::MAX)
                .map(|k| (col_map[self.col_idx[k]], k))
                .collect();
            entries.sort_unstable();
            for (c, k) in entries {
                col_idx.push(c);
                values.push(self.values[k]);
                origin.push(k);
            }
            row_ptr.push(col_idx.len());
        }
        (
            CsrMatrix {
                nrows: rows.len(),
                ncols: cols.len(),
                row_ptr,
                col_idx,
                values,
            },
            origin,
        )
    }

    /// Refreshes values from the matrix a submatrix was extracted from.
    pub fn gather_values(&mut self, source: &CsrMatrix, origin: &[usize]) {
        for (v, &k) in self.values.iter_mut().zip(origin) {
            *v = source.values[k];
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Symmetric up to `tol` times the largest entry.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        (0..self.nrows).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol * scale))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }

    /// `diag(self, self)`: the same scalar operator acting on both velocity
    /// components.
    pub fn block_diag2(&self) -> CsrMatrix {
        let mut row_ptr = self.row_ptr.clone();
        let nnz = self.nnz();
        row_ptr.extend(self.row_ptr[1..].iter().map(|p| p + nnz));
        let mut col_idx = self.col_idx.clone();
        col_idx.extend(self.col_idx.iter().map(|c| c + self.ncols));
        let mut values = self.values.clone();
        values.extend_from_slice(&self.values);
        CsrMatrix {
            nrows: 2 * self.nrows,
            ncols: 2 * self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 3.0), (1, 1, -1.0)]);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 2), 4.0);
        assert_eq!(a.col_idx(), &[0, 2, 1]);
        assert_eq!(a.mul_vec(&[1.0, 1.0, 1.0]), vec![6.0, -1.0]);
        assert_eq!(a.mul_transpose_vec(&[1.0, 2.0]), vec![2.0, -2.0, 4.0]);
        assert!(a.try_mul_vec(&[1.0]).is_err());
    }

    #[test]
    fn submatrix_roundtrip() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 1.0), (0, 1, 2.0), (1, 1, 3.0), (2, 0, 4.0), (2, 2, 5.0)],
        );
        let (mut s, origin) = a.submatrix(&[0, 2], &[0, 2]);
        assert_eq!(s.to_dense(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 4.0, 5.0]));
        let mut b = a.clone();
        b.values_mut().iter_mut().for_each(|v| *v *= 2.0);
        s.gather_values(&b, &origin);
        assert_eq!(s.get(1, 1), 10.0);
    }

    #[test]
    fn block_diag() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 3.0)]);
        let d = a.block_diag2();
        assert_eq!(d.get(2, 3), 2.0);
        assert_eq!(d.get(3, 2), 3.0);
        assert_eq!(d.get(0, 2), 0.0);
        assert_eq!(d.nnz(), 6);
    }
}
