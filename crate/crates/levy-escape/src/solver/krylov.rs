//! Jacobi-preconditioned BiCGStab for the assembled nonsymmetric operator.
//!
//! Matrix-vector products are cheap (each row couples a full grid row and
//! column), so a Krylov iteration beats direct factorization fill at the
//! default grids. The residual tracked and reported is the true
//! (unpreconditioned) relative residual.

use crate::error::{Error, Result};
use crate::solver::operator::OperatorMatrix;

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves A x = b to relative residual `tol`, capped at `max_iter`
/// iterations, with diagonal preconditioning.
pub fn bicgstab(
    op: &OperatorMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = op.dim();
    assert_eq!(b.len(), n);
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                residual: 0.0,
            },
        ));
    }
    let inv_diag: Vec<f64> = op
        .diag()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
    let mut restarts = 0usize;

    for it in 1..=max_iter {
        let rho_next = dot(&r_hat, &r);
        if rho_next.abs() < f64::MIN_POSITIVE * 1e8 || omega == 0.0 {
            // breakdown: restart from the current iterate
            if restarts >= 4 {
                return Err(Error::LinearSolveFailure {
                    iterations: it,
                    residual: norm(&r) / b_norm,
                });
            }
            restarts += 1;
            op.apply(&x, &mut t);
            for i in 0..n {
                r[i] = b[i] - t[i];
            }
            r_hat.copy_from_slice(&r);
            p.iter_mut().for_each(|z| *z = 0.0);
            v.iter_mut().for_each(|z| *z = 0.0);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        let beta = (rho_next / rho) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        for i in 0..n {
            p_hat[i] = inv_diag[i] * p[i];
        }
        op.apply(&p_hat, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            omega = 0.0; // force a restart next round
            rho = rho_next;
            continue;
        }
        alpha = rho_next / denom;
        // s = r - alpha v (reuse r)
        for i in 0..n {
            r[i] -= alpha * v[i];
        }
        if norm(&r) / b_norm < tol {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            let res = true_residual(op, &x, b, &mut t) / b_norm;
            return Ok((
                x,
                SolveStats {
                    iterations: it,
                    residual: res,
                },
            ));
        }
        for i in 0..n {
            s_hat[i] = inv_diag[i] * r[i];
        }
        op.apply(&s_hat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            omega = 0.0;
            rho = rho_next;
            continue;
        }
        omega = dot(&t, &r) / tt;
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
        }
        for i in 0..n {
            r[i] -= omega * t[i];
        }
        if norm(&r) / b_norm < tol {
            let res = true_residual(op, &x, b, &mut t) / b_norm;
            return Ok((
                x,
                SolveStats {
                    iterations: it,
                    residual: res,
                },
            ));
        }
        rho = rho_next;
    }
    Err(Error::LinearSolveFailure {
        iterations: max_iter,
        residual: norm(&r) / b_norm,
    })
}

fn true_residual(op: &OperatorMatrix, x: &[f64], b: &[f64], scratch: &mut [f64]) -> f64 {
    op.apply(x, scratch);
    scratch
        .iter()
        .zip(b)
        .map(|(ax, bb)| (bb - ax) * (bb - ax))
        .sum::<f64>()
        .sqrt()
}
