//! Conjugate gradients and restarted GMRES with Jacobi preconditioning.

use super::{dot, norm2, relative_residual, CsrMatrix};
use crate::{Error, Result};

/// Conjugate gradients for a symmetric positive definite matrix
/// (caller-asserted). Converges to a verified relative residual <= tol.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], tol: f64, maxit: usize) -> Result<Vec<f64>> {
    let n = b.len();
    assert_eq!(a.rows, n);
    let bn = norm2(b);
    if bn == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let mut iterations = 0;
    for it in 0..maxit {
        iterations = it + 1;
        let ap = a.matvec(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverFailure {
                what: "cg: matrix not positive definite along search direction".into(),
                iterations: Some(iterations),
                residual: rs.sqrt() / bn,
            });
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        if rs_new.sqrt() <= tol * bn {
            break;
        }
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    let res = relative_residual(a, &x, b);
    if res > tol {
        return Err(Error::SolverFailure {
            what: "cg did not converge".into(),
            iterations: Some(iterations),
            residual: res,
        });
    }
    Ok(x)
}

/// Restarted GMRES with a left Jacobi preconditioner. The reported residual
/// and the convergence check use the true (unpreconditioned) residual.
pub fn gmres_solve(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    restart: usize,
    maxit: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    assert_eq!(a.rows, n);
    assert_eq!(a.rows, a.cols);
    let bn = norm2(b);
    if bn == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let m = restart.max(1);

    // Jacobi scaling; unit where the diagonal is absent or tiny.
    let mut dinv = vec![1.0; n];
    for (i, d) in dinv.iter_mut().enumerate() {
        let v = a.get(i, i);
        if v.abs() > 1e-300 {
            *d = 1.0 / v;
        }
    }
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&dinv).map(|(x, d)| x * d).collect() };

    let mut x = vec![0.0; n];
    let mut total_iters = 0usize;

    'outer: while total_iters < maxit {
        let ax = a.matvec(&x);
        let r0: Vec<f64> = (0..n).map(|i| b[i] - ax[i]).collect();
        let z0 = precond(&r0);
        let beta = norm2(&z0);
        if beta == 0.0 {
            break;
        }
        // Krylov basis and Hessenberg in the preconditioned space.
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(z0.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![0.0f64; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut g = vec![0.0f64; m + 1];
        g[0] = beta;

        let mut cols = 0;
        for j in 0..m {
            if total_iters >= maxit {
                break;
            }
            total_iters += 1;
            let mut w = precond(&a.matvec(&basis[j]));
            for (i, vi) in basis.iter().enumerate() {
                let hij = dot(&w, vi);
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(vi) {
                    *wk -= hij * vk;
                }
            }
            let hnorm = norm2(&w);
            h[j + 1][j] = hnorm;
            // Apply accumulated Givens rotations, then form a new one.
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let denom = (h[j][j] * h[j][j] + h[j + 1][j] * h[j + 1][j]).sqrt();
            if denom == 0.0 {
                cols = j + 1;
                break;
            }
            cs[j] = h[j][j] / denom;
            sn[j] = h[j + 1][j] / denom;
            h[j][j] = denom;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            cols = j + 1;
            if hnorm == 0.0 || g[j + 1].abs() <= 0.1 * tol * beta {
                break;
            }
            if j + 1 < m + 1 && hnorm != 0.0 {
                basis.push(w.iter().map(|v| v / hnorm).collect());
            }
        }
        if cols == 0 {
            break;
        }
        // Back-substitute the small triangular system and update x.
        let mut y = vec![0.0f64; cols];
        for i in (0..cols).rev() {
            let mut s = g[i];
            for k in i + 1..cols {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        for (k, yk) in y.iter().enumerate() {
            for i in 0..n {
                x[i] += yk * basis[k][i];
            }
        }
        if relative_residual(a, &x, b) <= tol {
            break 'outer;
        }
    }

    let res = relative_residual(a, &x, b);
    if res > tol {
        return Err(Error::SolverFailure {
            what: "gmres did not converge".into(),
            iterations: Some(total_iters),
            residual: res,
        });
    }
    Ok(x)
}
