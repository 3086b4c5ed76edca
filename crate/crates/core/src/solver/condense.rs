//! Static condensation of unknowns whose mutual block is diagonal.
//!
//! With `E` the eliminated and `K` the kept unknowns and `D = M[E,E]`
//! diagonal, the system `M x = r` reduces to
//! `(M[K,K] - M[K,E] D^{-1} M[E,K]) x_K = r_K - M[K,E] D^{-1} r_E`, after which
//! `x_E = D^{-1} (r_E - M[E,K] x_K)`. MINI bubbles qualify: a bubble is
//! supported on one triangle and the skew convection form vanishes on the
//! diagonal.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub(crate) struct Condensation {
    keep: Vec<usize>,
    elim: Vec<usize>,
    diag: Vec<f64>,
    /// `M[K,E]`
    ke: CsrMatrix,
    /// `M[E,K]`
    ek: CsrMatrix,
}

impl Condensation {
    /// Returns the condensation and the reduced matrix on the kept unknowns.
    pub(crate) fn new(m: &CsrMatrix, eliminate: &[bool]) -> Result<(Self, CsrMatrix)> {
        assert_eq!(eliminate.len(), m.nrows());
        let keep: Vec<usize> = (0..m.nrows()).filter(|&i| !eliminate[i]).collect();
        let elim: Vec<usize> = (0..m.nrows()).filter(|&i| eliminate[i]).collect();
        let (ee, _) = m.submatrix(&elim, &elim);
        let mut diag = vec![0.0; elim.len()];
        for (e, d) in diag.iter_mut().enumerate() {
            for (j, v) in ee.row(e) {
                if j == e {
                    *d = v;
                } else if v != 0.0 {
                    return Err(Error::InvalidArgument("condensed block is not diagonal".into()));
                }
            }
            if *d == 0.0 {
                return Err(Error::Singular(format!("zero pivot in condensed unknown {}", elim[e])));
            }
        }
        let (kk, _) = m.submatrix(&keep, &keep);
        let (ke, _) = m.submatrix(&keep, &elim);
        let (ek, _) = m.submatrix(&elim, &keep);
        let ke_t = ke.transpose();
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(kk.nnz() + 9 * ke.nnz());
        for i in 0..kk.nrows() {
            t.extend(kk.row(i).map(|(j, v)| (i, j, v)));
        }
        for (e, &d) in diag.iter().enumerate() {
            for (i, a) in ke_t.row(e) {
                for (j, c) in ek.row(e) {
                    t.push((i, j, -a * c / d));
                }
            }
        }
        let reduced = CsrMatrix::from_triplets(keep.len(), keep.len(), &t);
        Ok((
            Self {
                keep,
                elim,
                diag,
                ke,
                ek,
            },
            reduced,
        ))
    }

    /// `r_K - M[K,E] D^{-1} r_E`
    pub(crate) fn reduce_rhs(&self, r: &[f64]) -> Vec<f64> {
        let scaled: Vec<f64> = self.elim.iter().zip(&self.diag).map(|(&e, d)| r[e] / d).collect();
        let corr = self.ke.mul_vec(&scaled);
        self.keep.iter().zip(corr).map(|(&k, c)| r[k] - c).collect()
    }

    /// Full solution from the kept part.
    pub(crate) fn expand(&self, r: &[f64], x_keep: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; r.len()];
        for (&k, &v) in self.keep.iter().zip(x_keep) {
            x[k] = v;
        }
        let ekx = self.ek.mul_vec(x_keep);
        for (i, &e) in self.elim.iter().enumerate() {
            x[e] = (r[e] - ekx[i]) / self.diag[i];
        }
        x
    }
}
