//! Lawson–Hanson active-set NNLS: minimize `||A x - b||_2` subject to `x >= 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::LinearSystem;
use crate::error::{Error, Result};

/// Relative size below which a new column is treated as linearly dependent on the
/// passive set.
const DEPENDENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// False when the iteration limit stopped the solve before the KKT test passed.
    pub certified: bool,
    /// Residual norm after each outer iteration.
    pub residual_history: Vec<f64>,
}

/// Scale used to make the KKT tolerance dimensionless.
fn kkt_scale(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let col = a.column_iter().fold(0.0f64, |m, c| m.max(c.norm()));
    let mag = b.norm().max((a * x).norm());
    (col * mag).max(f64::MIN_POSITIVE)
}

/// Largest KKT violation of `x` for `min ||A x - b||, x >= 0`, relative to the
/// problem scale. With dual `w = A^T (b - A x)`: `|w_j|` where `x_j > 0`, `max(w_j, 0)`
/// where `x_j = 0`, and any negative `x_j` counts in full.
pub fn kkt_violation(a: &DMatrix<f64>, b: &DVector<f64>, x: &[f64]) -> f64 {
    let x = DVector::from_column_slice(x);
    let w = a.transpose() * (b - a * &x);
    let scale = kkt_scale(a, b, &x);
    x.iter()
        .zip(w.iter())
        .map(|(&xj, &wj)| {
            if xj < 0.0 {
                f64::INFINITY
            } else if xj > 0.0 {
                wj.abs() / scale
            } else {
                wj.max(0.0) / scale
            }
        })
        .fold(0.0, f64::max)
}

impl LinearSystem {
    /// KKT violation of `x` on the weighted system.
    pub fn kkt_violation(&self, x: &[f64]) -> f64 {
        let (a, b) = self.weighted();
        kkt_violation(&a, &b, x)
    }
}

/// Solves the weighted system `min ||W (A x - b)||, x >= 0`.
pub fn nnls(system: &LinearSystem, tol: f64, max_iter: usize) -> Result<NnlsSolution> {
    system.validate()?;
    let (a, b) = system.weighted();
    nnls_dense(&a, &b, tol, max_iter)
}

/// Least squares on the passive columns via Householder QR. Returns `None` when the
/// last column is numerically dependent on the others.
fn passive_solve(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> Option<DVector<f64>> {
    let k = passive.len();
    if k > a.nrows() {
        return None;
    }
    let sub = a.select_columns(passive);
    let last_norm = sub.column(k - 1).norm();
    let qr = sub.qr();
    let r = qr.r();
    if r[(k - 1, k - 1)].abs() <= DEPENDENCE_TOL * last_norm.max(f64::MIN_POSITIVE) {
        return None;
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb)
}

/// Unweighted NNLS on a dense matrix.
pub fn nnls_dense(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64, max_iter: usize) -> Result<NnlsSolution> {
    if a.nrows() != b.len() {
        return Err(Error::InvalidSystem(format!("{} rows but rhs of length {}", a.nrows(), b.len())));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidSystem("non-finite entry".into()));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive: Vec<usize> = Vec::new();
    let mut blocked = vec![false; n];
    let mut iterations = 0;
    let mut history = Vec::new();
    let mut certified = false;

    'outer: loop {
        let w = a.transpose() * (b - a * &x);
        let threshold = tol * kkt_scale(a, b, &x);
        let candidate = (0..n)
            .filter(|j| !passive.contains(j) && !blocked[*j] && w[*j] > threshold)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = candidate else {
            certified = true;
            break;
        };
        if iterations >= max_iter {
            break;
        }
        passive.push(t);

        loop {
            iterations += 1;
            let Some(z) = passive_solve(a, b, &passive) else {
                // t adds no independent direction; skip it until x moves
                passive.pop();
                blocked[t] = true;
                continue 'outer;
            };
            if z.iter().all(|v| *v > 0.0) {
                x.fill(0.0);
                for (k, &j) in passive.iter().enumerate() {
                    x[j] = z[k];
                }
                break;
            }
            // step toward z until the first passive variable hits zero
            let alpha = passive
                .iter()
                .enumerate()
                .filter(|(k, _)| z[*k] <= 0.0)
                .map(|(k, &j)| x[j] / (x[j] - z[k]))
                .fold(f64::INFINITY, f64::min);
            for (k, &j) in passive.iter().enumerate() {
                x[j] += alpha * (z[k] - x[j]);
            }
            let drop: Vec<usize> = passive
                .iter()
                .enumerate()
                .filter(|(k, &j)| x[j] <= 0.0 || (z[*k] <= 0.0 && x[j] / (x[j] - z[*k]) <= alpha * (1.0 + 1e-12)))
                .map(|(_, &j)| j)
                .collect();
            for &j in &drop {
                x[j] = 0.0;
            }
            passive.retain(|j| !drop.contains(j));
            if passive.is_empty() || iterations >= max_iter {
                if iterations >= max_iter {
                    history.push((a * &x - b).norm());
                    break 'outer;
                }
                break;
            }
        }
        if passive.contains(&t) {
            blocked.fill(false);
        } else {
            blocked[t] = true;
        }
        history.push((a * &x - b).norm());
    }

    let residual_norm = (a * &x - b).norm();
    let x: Vec<f64> = x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    // columns skipped as dependent never entered the dual test above
    certified = certified && kkt_violation(a, b, &x) <= tol;
    Ok(NnlsSolution { x, residual_norm, iterations, certified, residual_history: history })
}
