//! Restarted GMRES for small dense systems given only as a matrix-vector product.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: DVector<f64>,
    /// Total Arnoldi steps across restarts.
    pub iterations: usize,
    /// Final residual 2-norm relative to `‖b‖`.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` from `x = 0` with restarted GMRES(m).
///
/// `apply` evaluates `A v`; it may fail, which aborts the solve. Iteration stops when the
/// relative residual drops below `tol` or after `max_iter` Arnoldi steps.
pub fn gmres<F>(mut apply: F, b: &DVector<f64>, tol: f64, restart: usize, max_iter: usize) -> Result<GmresOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = b.len();
    let mut x = DVector::zeros(n);
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(GmresOutcome { x, iterations: 0, relative_residual: 0.0, converged: true });
    }
    let m = restart.max(1).min(n.max(1));
    let mut iterations = 0;
    let mut r = b.clone();
    let mut rel = 1.0;

    while iterations < max_iter {
        let beta = r.norm();
        rel = beta / b_norm;
        if rel <= tol {
            return Ok(GmresOutcome { x, iterations, relative_residual: rel, converged: true });
        }
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m + 1);
        basis.push(&r / beta);
        let mut h = DMatrix::<f64>::zeros(m + 1, m);
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = DVector::<f64>::zeros(m + 1);
        g[0] = beta;
        let mut k_used = 0;

        for k in 0..m {
            if iterations >= max_iter {
                break;
            }
            iterations += 1;
            let mut w = apply(&basis[k])?;
            // modified Gram-Schmidt, applied twice for stability
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let coef = w.dot(v);
                    h[(i, k)] += coef;
                    w.axpy(-coef, v, 1.0);
                }
            }
            let h_next = w.norm();
            h[(k + 1, k)] = h_next;
            for i in 0..k {
                let t = cs[i] * h[(i, k)] + sn[i] * h[(i + 1, k)];
                h[(i + 1, k)] = -sn[i] * h[(i, k)] + cs[i] * h[(i + 1, k)];
                h[(i, k)] = t;
            }
            let denom = h[(k, k)].hypot(h[(k + 1, k)]);
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[(k, k)] / denom;
                sn[k] = h[(k + 1, k)] / denom;
            }
            h[(k, k)] = denom;
            h[(k + 1, k)] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            rel = g[k + 1].abs() / b_norm;
            if rel <= tol || h_next <= 1e-14 * b_norm {
                break;
            }
            basis.push(w / h_next);
        }

        // back substitution on the triangular part
        let mut y = DVector::<f64>::zeros(k_used);
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[(i, j)] * y[j];
            }
            y[i] = if h[(i, i)] != 0.0 { s / h[(i, i)] } else { 0.0 };
        }
        for (i, yi) in y.iter().enumerate() {
            x.axpy(*yi, &basis[i], 1.0);
        }
        let ax = apply(&x)?;
        r = b - ax;
        rel = r.norm() / b_norm;
        if rel <= tol {
            return Ok(GmresOutcome { x, iterations, relative_residual: rel, converged: true });
        }
        if k_used < m && iterations < max_iter {
            // lucky breakdown without reaching tolerance: the Krylov space is exhausted
            break;
        }
    }
    Ok(GmresOutcome { x, iterations, relative_residual: rel, converged: rel <= tol })
}
