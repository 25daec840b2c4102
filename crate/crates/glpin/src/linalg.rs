//! Small iterative solvers shared by the field problems.

use crate::error::{GlError, Result};

/// Outcome of a Krylov solve.
#[derive(Clone, Copy, Debug)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// semidefinite operator. Entries with a zero diagonal are frozen.
pub fn pcg(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    diag: &[f64],
    rhs: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    what: &str,
) -> Result<SolveStats> {
    let n = rhs.len();
    let inv: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    for i in 0..n {
        r[i] = if inv[i] > 0.0 { rhs[i] - ap[i] } else { 0.0 };
    }
    let bnorm = dot(rhs, rhs).sqrt().max(f64::MIN_POSITIVE);
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / bnorm;
    if res <= tol {
        return Ok(SolveStats { iterations: 0, relative_residual: res });
    }
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        for i in 0..n {
            if inv[i] == 0.0 {
                ap[i] = 0.0;
            }
        }
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            if res <= tol.sqrt() * 1e-3 || rz.abs() < 1e-300 {
                return Ok(SolveStats { iterations: it, relative_residual: res });
            }
            return Err(GlError::Numerical(format!("{what}: operator not positive (p.Ap = {pap:.3e})")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = dot(&r, &r).sqrt() / bnorm;
        if !res.is_finite() {
            return Err(GlError::Numerical(format!("{what}: residual became non-finite")));
        }
        if res <= tol {
            return Ok(SolveStats { iterations: it, relative_residual: res });
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(GlError::NoConvergence { what: what.to_string(), iterations: max_iter, residual: res })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal() {
        let n = 50;
        let mut apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.5 * x[i] - l - r;
            }
        };
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        pcg(&mut apply, &vec![2.5; n], &rhs, &mut x, 1e-12, 500, "test").unwrap();
        let mut y = vec![0.0; n];
        apply(&x, &mut y);
        for i in 0..n {
            assert!((y[i] - rhs[i]).abs() < 1e-10);
        }
    }
}
