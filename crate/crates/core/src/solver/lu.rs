//! Sparse LU through faer.
//!
//! The CSR arrays of `A` are exactly the CSC arrays of `A^T`, so the
//! factorization is taken of `A^T` and solves go through the transposed
//! factors. No copy of the index structure is made.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::MatMut;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub(crate) struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

fn transposed_view(a: &CsrMatrix) -> SparseColMatRef<'_, usize, f64> {
    let sym = SymbolicSparseColMatRef::new_checked(a.ncols(), a.nrows(), a.row_ptr(), None, a.col_idx());
    SparseColMatRef::new(sym, a.values())
}

pub(crate) fn symbolic(a: &CsrMatrix) -> Result<SymbolicLu<usize>> {
    SymbolicLu::try_new(transposed_view(a).symbolic())
        .map_err(|e| Error::Singular(format!("symbolic LU failed: {e:?}")))
}

impl SparseLu {
    /// `symbolic` must come from a matrix with the same pattern as `a`.
    pub(crate) fn factor(a: &CsrMatrix, symbolic: SymbolicLu<usize>) -> Result<Self> {
        assert_eq!(a.nrows(), a.ncols());
        let lu = Lu::try_new_with_symbolic(symbolic, transposed_view(a))
            .map_err(|e| Error::Singular(format!("numeric LU failed: {e:?}")))?;
        Ok(Self { n: a.nrows(), lu })
    }

    pub(crate) fn solve_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        let n = self.n;
        self.lu.solve_transpose_in_place(MatMut::from_column_major_slice_mut(x, n, 1));
    }

    /// Solves for several right-hand sides stored column-major.
    pub(crate) fn solve_many_in_place(&self, x: &mut [f64], ncols: usize) {
        debug_assert_eq!(x.len(), self.n * ncols);
        let n = self.n;
        self.lu.solve_transpose_in_place(MatMut::from_column_major_slice_mut(x, n, ncols));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_system() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 4.0), (0, 2, 1.0), (1, 0, 2.0), (1, 1, 3.0), (2, 1, -1.0), (2, 2, 5.0)],
        );
        let xs = [1.0, -2.0, 0.5];
        let mut b = a.mul_vec(&xs);
        let lu = SparseLu::factor(&a, symbolic(&a).unwrap()).unwrap();
        lu.solve_in_place(&mut b);
        for (x, e) in b.iter().zip(xs) {
            assert!((x - e).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_pivot_with_pivoting() {
        // saddle-like matrix with a zero diagonal entry
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 0.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 0.0)]);
        let lu = SparseLu::factor(&a, symbolic(&a).unwrap()).unwrap();
        let mut b = vec![3.0, 7.0];
        lu.solve_in_place(&mut b);
        assert_eq!(b, vec![7.0, 3.0]);
    }
}
