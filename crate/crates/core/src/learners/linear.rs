use serde::{Deserialize, Serialize};

use crate::data::{cholesky_solve, dot, mean, Matrix};
use crate::error::{Error, Result};

/// `predict(x) = intercept + <coefficients, x>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + dot(&self.coefficients, x)
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.rows_iter().map(|r| self.predict_row(r)).collect()
    }
}

/// Column-centred copy of the problem: centred columns, centred target and the means.
struct Centered {
    columns: Vec<Vec<f64>>,
    y: Vec<f64>,
    x_mean: Vec<f64>,
    y_mean: f64,
}

fn center(x: &Matrix, y: &[f64]) -> Result<Centered> {
    if x.nrows() == 0 {
        return Err(Error::InsufficientData("cannot fit on zero rows".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    let mut columns = Vec::with_capacity(x.ncols());
    let mut x_mean = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let c = x.column(j);
        let m = mean(&c);
        columns.push(c.iter().map(|v| v - m).collect());
        x_mean.push(m);
    }
    let y_mean = mean(y);
    Ok(Centered {
        columns,
        y: y.iter().map(|v| v - y_mean).collect(),
        x_mean,
        y_mean,
    })
}

impl Centered {
    fn gram(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.columns.len();
        let mut g = vec![0.0; d * d];
        for a in 0..d {
            for b in a..d {
                let v = dot(&self.columns[a], &self.columns[b]);
                g[a * d + b] = v;
                g[b * d + a] = v;
            }
        }
        let rhs = self.columns.iter().map(|c| dot(c, &self.y)).collect();
        (g, rhs)
    }

    fn model(&self, coefficients: Vec<f64>) -> LinearModel {
        let intercept = self.y_mean - dot(&self.x_mean, &coefficients);
        LinearModel {
            coefficients,
            intercept,
        }
    }
}

/// Solves `(G + λI) w = b`, escalating λ from `base` when the factorisation fails.
fn solve_with_jitter(g: &[f64], d: usize, b: &[f64], base: f64) -> Vec<f64> {
    if d == 0 {
        return Vec::new();
    }
    if base > 0.0 {
        let mut a = g.to_vec();
        (0..d).for_each(|i| a[i * d + i] += base);
        if let Some(w) = cholesky_solve(&a, d, b) {
            return w;
        }
    } else if let Some(w) = cholesky_solve(g, d, b) {
        return w;
    }
    let scale = (0..d).map(|i| g[i * d + i]).fold(1.0_f64, f64::max);
    let mut jitter = 1e-10 * scale;
    loop {
        let mut a = g.to_vec();
        (0..d).for_each(|i| a[i * d + i] += base + jitter);
        if let Some(w) = cholesky_solve(&a, d, b) {
            return w;
        }
        jitter *= 10.0;
    }
}

/// Ordinary least squares via the centred normal equations.
/// A singular Gram matrix falls back to a tiny ridge jitter.
pub fn fit_ols(x: &Matrix, y: &[f64]) -> Result<LinearModel> {
    let c = center(x, y)?;
    let (g, b) = c.gram();
    let w = solve_with_jitter(&g, x.ncols(), &b, 0.0);
    Ok(c.model(w))
}

/// Ridge regression, `(XᵀX + αI)⁻¹Xᵀy` on centred data (intercept unpenalised).
pub fn fit_ridge(x: &Matrix, y: &[f64], alpha: f64) -> Result<LinearModel> {
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("ridge alpha must be positive, got {alpha}")));
    }
    let c = center(x, y)?;
    let (g, b) = c.gram();
    let w = solve_with_jitter(&g, x.ncols(), &b, alpha);
    Ok(c.model(w))
}

/// Coordinate-descent stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CdOptions {
    fn default() -> Self {
        CdOptions {
            tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

/// Result of a coordinate-descent fit. When `converged` is false the model is
/// the last (and lowest-objective) iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct CdFit {
    pub model: LinearModel,
    pub converged: bool,
    pub sweeps: usize,
    /// Objective value after each full sweep.
    pub objective_trace: Vec<f64>,
}

/// Unevaluated sum `hi + lo` carrying about 106 bits of precision.
#[derive(Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn add(self, b: f64) -> Dd {
        let s = self.hi + b;
        let v = s - self.hi;
        let e = (self.hi - (s - v)) + (b - v);
        let lo = self.lo + e;
        let hi = s + lo;
        Dd { hi, lo: lo - (hi - s) }
    }

    fn add_dd(self, b: Dd) -> Dd {
        self.add(b.hi).add(b.lo)
    }

    fn mul_f64(a: f64, b: f64) -> Dd {
        let p = a * b;
        Dd {
            hi: p,
            lo: a.mul_add(b, -p),
        }
    }

    fn square(self) -> Dd {
        Dd::mul_f64(self.hi, self.hi).add(2.0 * self.hi * self.lo)
    }

    fn scale(self, k: f64) -> Dd {
        Dd::mul_f64(self.hi, k).add(self.lo * k)
    }
}

/// Objective at `w`, with residuals recomputed from the data in double-double
/// arithmetic. The result is (nearly always) the correctly rounded value, so
/// a monotone exact-arithmetic sequence stays monotone after rounding, which
/// the incrementally updated residual cannot guarantee.
fn accurate_objective(c: &Centered, w: &[f64], l1: f64, l2: f64) -> f64 {
    let n = c.y.len();
    let mut rss = Dd::ZERO;
    for i in 0..n {
        let mut r = Dd { hi: c.y[i], lo: 0.0 };
        for (col, wj) in c.columns.iter().zip(w) {
            r = r.add_dd(Dd::mul_f64(-col[i], *wj));
        }
        rss = rss.add_dd(r.square());
    }
    let mut pen_l1 = Dd::ZERO;
    let mut pen_l2 = Dd::ZERO;
    for v in w {
        pen_l1 = pen_l1.add(v.abs());
        pen_l2 = pen_l2.add_dd(Dd::mul_f64(*v, *v));
    }
    let total = rss
        .scale(1.0 / (2.0 * n as f64))
        .add_dd(pen_l1.scale(l1))
        .add_dd(pen_l2.scale(0.5 * l2));
    total.hi + total.lo
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Lasso: minimises `(1/2n)‖y − Xw − b‖² + α‖w‖₁`.
pub fn fit_lasso(x: &Matrix, y: &[f64], alpha: f64) -> Result<CdFit> {
    fit_elasticnet_with(x, y, alpha, 1.0, CdOptions::default())
}

/// Elastic net: `(1/2n)‖y − Xw − b‖² + α·ρ‖w‖₁ + ½α(1−ρ)‖w‖²` with `ρ = l1_ratio`.
pub fn fit_elasticnet(x: &Matrix, y: &[f64], alpha: f64, l1_ratio: f64) -> Result<CdFit> {
    fit_elasticnet_with(x, y, alpha, l1_ratio, CdOptions::default())
}

/// Cyclic coordinate descent with a maintained residual.
pub fn fit_elasticnet_with(x: &Matrix, y: &[f64], alpha: f64, l1_ratio: f64, opts: CdOptions) -> Result<CdFit> {
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    if !(0.0..=1.0).contains(&l1_ratio) {
        return Err(Error::Parameter(format!("l1_ratio must lie in [0, 1], got {l1_ratio}")));
    }
    let c = center(x, y)?;
    let n = y.len() as f64;
    let d = c.columns.len();
    let l1 = alpha * l1_ratio;
    let l2 = alpha * (1.0 - l1_ratio);
    let sq: Vec<f64> = c.columns.iter().map(|col| dot(col, col)).collect();
    let norms: Vec<f64> = sq.iter().map(|s| s / n).collect();
    let mut w = vec![0.0; d];
    let mut r = c.y.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_iter {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..d {
            let col = &c.columns[j];
            let old = w[j];
            let denom = norms[j] + l2;
            let new = if denom > 0.0 {
                let rho = (dot(col, &r) + old * sq[j]) / n;
                soft_threshold(rho, l1) / denom
            } else {
                0.0
            };
            if new != old {
                let delta = new - old;
                for (ri, xi) in r.iter_mut().zip(col) {
                    *ri -= delta * xi;
                }
                w[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        trace.push(accurate_objective(&c, &w, l1, l2));
        if max_change < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(CdFit {
        model: c.model(w),
        converged,
        sweeps,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_exact_line() {
        let x = Matrix::from_columns(&[[1.0, 2.0, 3.0]]).unwrap();
        let m = fit_ols(&x, &[2.0, 4.0, 6.0]).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-12);
        assert!(m.intercept.abs() < 1e-12);
    }

    #[test]
    fn ols_constant_target() {
        let x = Matrix::from_columns(&[[1.0, 5.0, 2.0, 8.0]]).unwrap();
        let m = fit_ols(&x, &[3.0; 4]).unwrap();
        assert!(m.coefficients[0].abs() < 1e-12);
        assert!((m.intercept - 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_feature_gets_zero_weight() {
        let x = Matrix::from_columns(&[[1.0, 1.0, 1.0], [1.0, 2.0, 3.0]]).unwrap();
        let m = fit_ols(&x, &[1.0, 2.0, 3.0]).unwrap();
        assert!(m.coefficients[0].abs() < 1e-6);
        assert!((m.coefficients[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ridge_rejects_nonpositive_alpha() {
        let x = Matrix::from_columns(&[[1.0, 2.0]]).unwrap();
        assert!(fit_ridge(&x, &[1.0, 2.0], 0.0).is_err());
        assert!(fit_lasso(&x, &[1.0, 2.0], -1.0).is_err());
    }

    #[test]
    fn lasso_flags_non_convergence() {
        let x = Matrix::from_columns(&[[1.0, 2.0, 3.0, 4.0], [1.0, 2.1, 2.9, 4.2]]).unwrap();
        let opts = CdOptions {
            tol: 1e-30,
            max_iter: 3,
        };
        let fit = fit_elasticnet_with(&x, &[1.0, 2.0, 3.0, 4.0], 1e-4, 1.0, opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.sweeps, 3);
        assert_eq!(fit.objective_trace.len(), 3);
    }
}
