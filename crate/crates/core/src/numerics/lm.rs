//! Box-constrained Levenberg-Marquardt with forward-difference Jacobians.
//!
//! Sized for the two- and three-parameter fits in this crate; the normal
//! equations are solved densely.

#![allow(clippy::needless_range_loop)]

use crate::error::Result;

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative forward-difference step.
    pub fd_step: f64,
    /// Converged once the objective improved by less than this (relative) over `window` accepted steps.
    pub rel_improvement: f64,
    pub window: usize,
    /// Objective below which the fit counts as exact.
    pub objective_floor: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 200, fd_step: 1e-6, rel_improvement: 1e-8, window: 5, objective_floor: 1e-28 }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// Sum of squared residuals at `params`.
    pub objective: f64,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    /// Objective after each accepted step, starting with the initial point.
    pub history: Vec<f64>,
    pub converged: bool,
    /// Diagonal of JᵀJ at the final point (Gauss-Newton curvature / 2).
    pub curvature: Vec<f64>,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Minimizes ½‖r(x)‖² subject to `lower ≤ x ≤ upper`.
pub fn minimize<F>(mut residuals: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &LmOptions) -> Result<LmReport>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = x0.len();
    let clamp = |x: &mut [f64]| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut x = x0.to_vec();
    clamp(&mut x);
    let mut r = residuals(&x)?;
    let mut evaluations = 1;
    let mut s = sum_sq(&r);
    let mut history = vec![s];
    let mut lambda = 1e-3;
    let mut converged = s <= opts.objective_floor;
    let mut iterations = 0;
    let mut jtj = vec![vec![0.0; n]; n];

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        // forward differences, stepping inward at an upper bound
        let mut jac = vec![vec![0.0; r.len()]; n];
        for j in 0..n {
            let mut h = opts.fd_step * x[j].abs().max(1.0);
            if x[j] + h > upper[j] {
                h = -h;
            }
            let mut xp = x.clone();
            xp[j] += h;
            let rp = residuals(&xp)?;
            evaluations += 1;
            for (i, (a, b)) in rp.iter().zip(&r).enumerate() {
                jac[j][i] = (a - b) / h;
            }
        }
        let mut g = vec![0.0; n];
        for a in 0..n {
            g[a] = jac[a].iter().zip(&r).map(|(j, r)| j * r).sum();
            for b in 0..n {
                jtj[a][b] = jac[a].iter().zip(&jac[b]).map(|(p, q)| p * q).sum();
            }
        }

        let mut accepted = false;
        while !accepted {
            let mut m = jtj.clone();
            for a in 0..n {
                m[a][a] += lambda * jtj[a][a].max(1e-12);
            }
            let mut rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            // variables pinned at a bound by the gradient stay fixed
            for a in 0..n {
                if (x[a] <= lower[a] && g[a] > 0.0) || (x[a] >= upper[a] && g[a] < 0.0) {
                    for b in 0..n {
                        m[a][b] = 0.0;
                        m[b][a] = 0.0;
                    }
                    m[a][a] = 1.0;
                    rhs[a] = 0.0;
                }
            }
            let Some(delta) = solve_dense(m, rhs) else {
                lambda *= 10.0;
                if lambda > 1e16 {
                    break;
                }
                continue;
            };
            let mut xn: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
            clamp(&mut xn);
            let moved = xn.iter().zip(&x).any(|(a, b)| a != b);
            if !moved {
                break;
            }
            let rn = residuals(&xn)?;
            evaluations += 1;
            let sn = sum_sq(&rn);
            if sn < s {
                x = xn;
                r = rn;
                s = sn;
                history.push(s);
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
            } else {
                lambda *= 4.0;
                if lambda > 1e16 {
                    break;
                }
            }
        }
        if !accepted {
            // no descent direction left at working precision
            converged = true;
            break;
        }
        if s <= opts.objective_floor {
            converged = true;
        } else if history.len() > opts.window {
            let past = history[history.len() - 1 - opts.window];
            if (past - s) / past < opts.rel_improvement {
                converged = true;
            }
        }
    }

    Ok(LmReport {
        curvature: (0..n).map(|a| jtj[a][a]).collect(),
        params: x,
        objective: s,
        residuals: r,
        iterations,
        evaluations,
        history,
        converged,
    })
}
