//! Preconditioned Krylov iterations on abstract operators.

use crate::sparse::{axpy, dot, norm2};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovResult {
    pub iterations: usize,
    /// Final relative residual `|b - A x| / |b|`.
    pub residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients for symmetric positive (semi)definite
/// `apply`. `x` holds the initial guess on entry. The optional `project`
/// maps preconditioned residuals into a complement of the null space, which
/// lets the iteration run on consistent singular systems.
pub fn pcg(
    apply: &dyn Fn(&[f64], &mut [f64]),
    precond: &dyn Fn(&[f64], &mut [f64]),
    project: Option<&dyn Fn(&mut [f64])>,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> KrylovResult {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovResult {
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    if let Some(p) = project {
        p(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = norm2(&r) / bnorm;
    let mut it = 0;
    while res > tol && it < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        precond(&r, &mut z);
        if let Some(pr) = project {
            pr(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        res = norm2(&r) / bnorm;
        it += 1;
    }
    KrylovResult {
        iterations: it,
        residual: res,
        converged: res <= tol,
    }
}

/// Right-preconditioned BiCGStab for general nonsymmetric `apply`.
pub fn bicgstab(
    apply: &dyn Fn(&[f64], &mut [f64]),
    precond: &dyn Fn(&[f64], &mut [f64]),
    project: Option<&dyn Fn(&mut [f64])>,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> KrylovResult {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovResult {
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let proj = |v: &mut [f64]| {
        if let Some(p) = project {
            p(v);
        }
    };
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut res = norm2(&r) / bnorm;
    let mut it = 0;
    while res > tol && it < max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond(&p, &mut phat);
        proj(&mut phat);
        apply(&phat, &mut v);
        let r0v = dot(&r0, &v);
        if r0v == 0.0 {
            break;
        }
        alpha = rho / r0v;
        // r becomes s
        axpy(-alpha, &v, &mut r);
        axpy(alpha, &phat, x);
        it += 1;
        res = norm2(&r) / bnorm;
        if res <= tol {
            break;
        }
        precond(&r, &mut shat);
        proj(&mut shat);
        apply(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            break;
        }
        omega = dot(&t, &r) / tt;
        axpy(omega, &shat, x);
        axpy(-omega, &t, &mut r);
        res = norm2(&r) / bnorm;
        if omega == 0.0 {
            break;
        }
    }
    KrylovResult {
        iterations: it,
        residual: res,
        converged: res <= tol,
    }
}
