//! Epsilon-insensitive support vector regression with an RBF kernel.
//!
//! The dual over `2n` variables is solved by sequential minimal optimisation
//! with second-order working-set selection, the same scheme used by LIBSVM
//! (without shrinking or caching: the full kernel matrix is held in memory).

use crate::data::{squared_distance, variance, Matrix};
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

/// RBF bandwidth choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    /// `1 / (d · Var(all entries of X))`, or 1 when that variance is zero.
    Scale,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: Gamma,
    pub tol: f64,
    /// Iteration cap per row; the solver stops after `max_iter_per_row · n` steps.
    pub max_iter_per_row: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 1.0,
            epsilon: 0.1,
            gamma: Gamma::Scale,
            tol: 1e-3,
            max_iter_per_row: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    pub gamma: f64,
    pub support_vectors: Matrix,
    /// `α_i − α*_i` for each support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl SvrModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut s = self.bias;
        for (sv, a) in self.support_vectors.rows_iter().zip(&self.dual_coef) {
            s += a * (-self.gamma * squared_distance(sv, x)).exp();
        }
        s
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.rows_iter().map(|r| self.predict_row(r)).collect()
    }
}

/// Resolves the numeric bandwidth for a training matrix.
pub fn resolve_gamma(x: &Matrix, gamma: Gamma) -> f64 {
    match gamma {
        Gamma::Value(g) => g,
        Gamma::Scale => {
            let v = variance(x.as_slice());
            if v > 0.0 {
                1.0 / (x.ncols() as f64 * v)
            } else {
                1.0
            }
        }
    }
}

/// Full `n × n` RBF kernel matrix, row-major.
pub fn rbf_kernel(x: &Matrix, gamma: f64) -> Vec<f64> {
    let n = x.nrows();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let v = (-gamma * squared_distance(x.row(i), x.row(j))).exp();
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// Fits an SVR, computing the kernel from `x`.
pub fn fit_svr(x: &Matrix, y: &[f64], params: &SvrParams) -> Result<SvrModel> {
    let gamma = resolve_gamma(x, params.gamma);
    let kernel = rbf_kernel(x, gamma);
    fit_svr_precomputed(x, y, &kernel, gamma, params)
}

/// Fits an SVR with a kernel matrix already computed for `x` at bandwidth `gamma`.
/// Lets callers reuse one kernel across several targets.
pub fn fit_svr_precomputed(x: &Matrix, y: &[f64], kernel: &[f64], gamma: f64, params: &SvrParams) -> Result<SvrModel> {
    let n = x.nrows();
    if n != y.len() {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: y.len(),
        });
    }
    if n < 2 {
        return Err(Error::InsufficientData("SVR needs at least two rows".into()));
    }
    if kernel.len() != n * n {
        return Err(Error::LengthMismatch {
            expected: n * n,
            actual: kernel.len(),
        });
    }
    if !(params.c > 0.0) || !(params.epsilon >= 0.0) || !(gamma > 0.0) {
        return Err(Error::Parameter("SVR needs C > 0, epsilon ≥ 0 and gamma > 0".into()));
    }
    let sol = solve_dual(y, kernel, params);
    let mut rows = Vec::new();
    let mut coef = Vec::new();
    for i in 0..n {
        let b = sol.alpha[i] - sol.alpha[i + n];
        if b != 0.0 {
            rows.push(i);
            coef.push(b);
        }
    }
    Ok(SvrModel {
        gamma,
        support_vectors: x.select_rows(&rows),
        dual_coef: coef,
        bias: -sol.rho,
        converged: sol.converged,
        iterations: sol.iterations,
    })
}

struct DualSolution {
    alpha: Vec<f64>,
    rho: f64,
    converged: bool,
    iterations: usize,
}

fn solve_dual(z: &[f64], kernel: &[f64], params: &SvrParams) -> DualSolution {
    let n = z.len();
    let l = 2 * n;
    let c = params.c;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    // Q_ts = y_t y_s K(t mod n, s mod n); the diagonal is K(t, t).
    let q = |t: usize, s: usize| sign(t) * sign(s) * kernel[(t % n) * n + (s % n)];
    let qd = |t: usize| kernel[(t % n) * n + (t % n)];

    let mut alpha = vec![0.0; l];
    let mut grad: Vec<f64> = (0..l)
        .map(|t| {
            if t < n {
                params.epsilon - z[t]
            } else {
                params.epsilon + z[t - n]
            }
        })
        .collect();
    let max_iter = params.max_iter_per_row.saturating_mul(n).max(1);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        let Some((i, j)) = select_working_set(&alpha, &grad, c, n, params.tol, &q, &qd) else {
            converged = true;
            break;
        };
        iterations += 1;
        let (yi, yj) = (sign(i), sign(j));
        let qij = q(i, j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if yi != yj {
            let quad = (qd(i) + qd(j) + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qd(i) + qd(j) - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(i, t) * di + q(j, t) * dj;
        }
    }

    DualSolution {
        rho: compute_rho(&alpha, &grad, c, n),
        alpha,
        converged,
        iterations,
    }
}

fn select_working_set(
    alpha: &[f64],
    grad: &[f64],
    c: f64,
    n: usize,
    tol: f64,
    q: &impl Fn(usize, usize) -> f64,
    qd: &impl Fn(usize) -> f64,
) -> Option<(usize, usize)> {
    let pos = |t: usize| t < n;
    let mut gmax = f64::NEG_INFINITY;
    let mut gmax_idx = None;
    for t in 0..alpha.len() {
        if pos(t) {
            if alpha[t] < c && -grad[t] >= gmax {
                gmax = -grad[t];
                gmax_idx = Some(t);
            }
        } else if alpha[t] > 0.0 && grad[t] >= gmax {
            gmax = grad[t];
            gmax_idx = Some(t);
        }
    }
    let mut gmax2 = f64::NEG_INFINITY;
    let mut best = None;
    let mut obj_min = f64::INFINITY;
    for t in 0..alpha.len() {
        let (grad_diff, candidate) = if pos(t) {
            if alpha[t] <= 0.0 {
                continue;
            }
            gmax2 = gmax2.max(grad[t]);
            (gmax + grad[t], true)
        } else {
            if alpha[t] >= c {
                continue;
            }
            gmax2 = gmax2.max(-grad[t]);
            (gmax - grad[t], true)
        };
        if !candidate || grad_diff <= 0.0 {
            continue;
        }
        let Some(i) = gmax_idx else { continue };
        let yi = if pos(i) { 1.0 } else { -1.0 };
        let qit = q(i, t);
        let quad = if pos(t) {
            qd(i) + qd(t) - 2.0 * yi * qit
        } else {
            qd(i) + qd(t) + 2.0 * yi * qit
        };
        let quad = if quad > 0.0 { quad } else { TAU };
        let obj = -(grad_diff * grad_diff) / quad;
        if obj <= obj_min {
            obj_min = obj;
            best = Some(t);
        }
    }
    if gmax + gmax2 < tol {
        return None;
    }
    match (gmax_idx, best) {
        (Some(i), Some(j)) => Some((i, j)),
        _ => None,
    }
}

fn compute_rho(alpha: &[f64], grad: &[f64], c: f64, n: usize) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..alpha.len() {
        let y = if t < n { 1.0 } else { -1.0 };
        let yg = y * grad[t];
        if alpha[t] >= c {
            if y < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_inside_tube_has_no_support_vectors() {
        let x = Matrix::from_columns(&[[0.0, 1.0, 2.0, 3.0]]).unwrap();
        let y = [2.0, 2.05, 1.95, 2.0];
        let m = fit_svr(&x, &y, &SvrParams::default()).unwrap();
        assert!(m.dual_coef.is_empty());
        assert!(m.converged);
        for p in m.predict(&x) {
            assert!((p - 2.0).abs() <= 0.1);
        }
    }

    #[test]
    fn gamma_scale_rule() {
        let x = Matrix::from_rows(&[[0.0, 2.0], [2.0, 0.0]]).unwrap();
        assert_eq!(resolve_gamma(&x, Gamma::Scale), 0.5);
        let flat = Matrix::from_rows(&[[1.0], [1.0]]).unwrap();
        assert_eq!(resolve_gamma(&flat, Gamma::Scale), 1.0);
    }

    #[test]
    fn box_constraint_holds() {
        let x = Matrix::from_columns(&[(0..20).map(|i| i as f64 / 4.0).collect::<Vec<_>>()]).unwrap();
        let y: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 5.0 } else { -5.0 }).collect();
        let m = fit_svr(&x, &y, &SvrParams::default()).unwrap();
        assert!(m.dual_coef.iter().all(|a| a.abs() <= 1.0 + 1e-12));
    }
}
