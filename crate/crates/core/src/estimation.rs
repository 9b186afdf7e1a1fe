//! Restricted minimum density-power-divergence fit under the homoscedastic
//! null: iteratively reweighted least squares for the coefficients and a
//! safeguarded Newton solve for σ².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RegressionData;
use crate::numerics::{dot, Cholesky, Matrix};

/// Exponents below this are clamped before `exp`.
const MIN_EXPONENT: f64 = -700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Tolerance on both estimating equations.
    pub tol_eq: f64,
    pub max_outer_iterations: usize,
    /// Tolerance on the σ² equation.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol_eq: 1e-8,
            max_outer_iterations: 500,
            newton_tol: 1e-12,
            newton_max_iter: 50,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol_eq > 0.0 && self.newton_tol > 0.0)
            || self.max_outer_iterations == 0
            || self.newton_max_iter == 0
        {
            return Err(Error::InvalidInput("fit options must all be positive".into()));
        }
        Ok(())
    }
}

/// Restricted estimate `(0, σ̃², β̃)` for one tuning parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpdFit {
    pub beta_tuning: f64,
    pub coefficients: Vec<f64>,
    pub sigma2: f64,
    pub residuals: Vec<f64>,
    /// `εᵢ² / σ̃²`
    pub g: Vec<f64>,
    pub v: Vec<f64>,
    /// `exp(−(β/2) gᵢ)`
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `max_j |Σᵢ x_ij wᵢ εᵢ| / (s_j min(σ̃, 1))` at the returned estimate,
    /// where `s_j = max(1, RMS of column j)`.
    pub final_gradient_norm: f64,
}

impl DpdFit {
    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    /// `1ₙᵀ v`
    pub fn v_sum(&self) -> f64 {
        self.v.iter().sum()
    }

    /// Unscaled `‖Xᵀ diag(w) ε‖∞`.
    pub fn raw_gradient_norm(&self, x: &Matrix) -> f64 {
        let we: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.residuals)
            .map(|(w, e)| w * e)
            .collect();
        x.tr_mul_vec(&we).iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `exp(max(−(β/2) gᵢ, −700))`
pub fn dpd_weights(g: &[f64], beta: f64) -> Vec<f64> {
    g.iter()
        .map(|&gi| (-0.5 * beta * gi).max(MIN_EXPONENT).exp())
        .collect()
}

/// `β / (β+1)^{3/2}`
#[inline]
pub fn v_shift(beta: f64) -> f64 {
    beta / (beta + 1.0).powf(1.5)
}

/// `v = diag(exp(−(β/2)g))(g − 1ₙ) + β/(β+1)^{3/2} 1ₙ`
pub fn v_vector(g: &[f64], beta: f64) -> Vec<f64> {
    let c = v_shift(beta);
    g.iter()
        .zip(dpd_weights(g, beta))
        .map(|(&gi, w)| w * (gi - 1.0) + c)
        .collect()
}

/// `f(σ²) = (1/n) Σ exp(−(β/2)gᵢ)(gᵢ − 1) + β/(β+1)^{3/2}` with `gᵢ = rᵢ²/σ²`.
pub fn sigma2_equation(residuals: &[f64], beta: f64, sigma2: f64) -> f64 {
    let n = residuals.len() as f64;
    let s: f64 = residuals
        .iter()
        .map(|r| {
            let g = r * r / sigma2;
            (-0.5 * beta * g).max(MIN_EXPONENT).exp() * (g - 1.0)
        })
        .sum();
    s / n + v_shift(beta)
}

/// `∂f/∂σ² = (1/(nσ²)) Σ exp(−(β/2)gᵢ)[(β/2)gᵢ² − (1+β/2)gᵢ]`
pub fn sigma2_equation_derivative(residuals: &[f64], beta: f64, sigma2: f64) -> f64 {
    let n = residuals.len() as f64;
    let hb = 0.5 * beta;
    let s: f64 = residuals
        .iter()
        .map(|r| {
            let g = r * r / sigma2;
            (-hb * g).max(MIN_EXPONENT).exp() * (hb * g * g - (1.0 + hb) * g)
        })
        .sum();
    s / (n * sigma2)
}

/// Root of [`sigma2_equation`] by Newton's method from `sigma2_init`,
/// falling back to log-scale bisection whenever a step leaves the current
/// bracket or fails to shrink `|f|`.
pub fn solve_sigma2(
    residuals: &[f64],
    beta: f64,
    sigma2_init: f64,
    opts: &FitOptions,
) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::InvalidInput("no residuals".into()));
    }
    let mean_sq = residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64;
    if !(mean_sq > 0.0) || !mean_sq.is_finite() {
        return Err(Error::DegenerateFit);
    }
    if beta == 0.0 {
        return Ok(mean_sq);
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidInput("tuning parameter must be ≥ 0".into()));
    }
    let f = |s: f64| sigma2_equation(residuals, beta, s);
    let start = if sigma2_init > 0.0 && sigma2_init.is_finite() {
        sigma2_init
    } else {
        mean_sq
    };

    // f > 0 for small σ², f < 0 for large σ²
    let (floor, ceil) = (1e-300, 1e300);
    let mut lo = start;
    let mut f_lo = f(lo);
    while f_lo <= 0.0 {
        if f_lo == 0.0 {
            return Ok(lo);
        }
        lo *= 0.5;
        if lo < floor {
            return Err(Error::NoRoot);
        }
        f_lo = f(lo);
    }
    let mut hi = start;
    let mut f_hi = f(hi);
    while f_hi >= 0.0 {
        if f_hi == 0.0 {
            return Ok(hi);
        }
        hi *= 2.0;
        if hi > ceil {
            return Err(Error::NoRoot);
        }
        f_hi = f(hi);
    }

    let mut s = start;
    let mut fs = f(s);
    let mut newton_steps = 0;
    for _ in 0..(opts.newton_max_iter + 2_000) {
        if fs.abs() <= opts.newton_tol {
            return Ok(s);
        }
        if fs > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let mut next = f64::NAN;
        if newton_steps < opts.newton_max_iter {
            newton_steps += 1;
            let d = sigma2_equation_derivative(residuals, beta, s);
            if d != 0.0 && d.is_finite() {
                next = s - fs / d;
            }
        }
        if next > lo && next < hi {
            let f_next = f(next);
            if f_next.abs() < fs.abs() {
                s = next;
                fs = f_next;
                continue;
            }
            if f_next > 0.0 {
                lo = next;
            } else {
                hi = next;
            }
        }
        s = (lo * hi).sqrt();
        fs = f(s);
    }
    if fs.abs() <= opts.newton_tol {
        Ok(s)
    } else if (hi - lo) <= 4.0 * f64::EPSILON * hi {
        // bracket collapsed to adjacent floats; f jumps across zero there
        Ok(s)
    } else {
        Err(Error::NoRoot)
    }
}

/// Ordinary least squares: coefficients and residuals.
pub fn ols(x: &Matrix, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    weighted_ls(x, y, None)
}

fn weighted_ls(x: &Matrix, y: &[f64], w: Option<&[f64]>) -> Result<(Vec<f64>, Vec<f64>)> {
    let chol = Cholesky::factor(&x.gram(w))?;
    let rhs = match w {
        Some(w) => {
            let wy: Vec<f64> = y.iter().zip(w).map(|(a, b)| a * b).collect();
            x.tr_mul_vec(&wy)
        }
        None => x.tr_mul_vec(y),
    };
    let coef = chol.solve(&rhs);
    let fitted = x.mul_vec(&coef);
    let resid = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    Ok((coef, resid))
}

/// Largest gradient component scaled by `s_j · min(σ, 1)`. Components already
/// at the rounding floor of their own sum count as zero, so fits on data with
/// a very large response scale can still terminate.
fn standardized_gradient(x: &Matrix, col_norms: &[f64], w: &[f64], e: &[f64], sigma: f64) -> f64 {
    let scale = sigma.min(1.0);
    let mut worst = 0.0f64;
    for (j, nj) in col_norms.iter().enumerate() {
        let (mut s, mut abs) = (0.0, 0.0);
        for i in 0..x.rows() {
            let t = x[(i, j)] * w[i] * e[i];
            s += t;
            abs += t.abs();
        }
        if s.abs() <= 64.0 * f64::EPSILON * abs {
            continue;
        }
        worst = worst.max(s.abs() / (nj * scale));
    }
    worst
}

fn assemble(
    beta: f64,
    coefficients: Vec<f64>,
    sigma2: f64,
    residuals: Vec<f64>,
    iterations: usize,
    converged: bool,
    final_gradient_norm: f64,
) -> DpdFit {
    let g: Vec<f64> = residuals.iter().map(|e| e * e / sigma2).collect();
    let weights = dpd_weights(&g, beta);
    let v = v_vector(&g, beta);
    DpdFit {
        beta_tuning: beta,
        coefficients,
        sigma2,
        residuals,
        g,
        v,
        weights,
        iterations,
        converged,
        final_gradient_norm,
    }
}

/// `(coefficients, σ², residuals, gradient norm, extra sweeps)`
type Polished = (Vec<f64>, f64, Vec<f64>, f64, usize);

/// Extra sweeps past the stopping rule until the iterate stops moving at
/// rounding level, so that statistics built from a fit do not inherit the
/// stopping tolerance (small statistics are sensitive to it).
#[allow(clippy::too_many_arguments)]
fn polish(
    x: &Matrix,
    y: &[f64],
    col_norms: &[f64],
    beta: f64,
    opts: &FitOptions,
    mut coef: Vec<f64>,
    mut sigma2: f64,
    mut resid: Vec<f64>,
    mut grad: f64,
) -> Result<Polished> {
    const MAX_SWEEPS: usize = 200;
    const STEP_TOL: f64 = 1e-14;
    for sweep in 1..=MAX_SWEEPS {
        let g: Vec<f64> = resid.iter().map(|e| e * e / sigma2).collect();
        let w = dpd_weights(&g, beta);
        let (c, r) = weighted_ls(x, y, Some(&w))?;
        let s2 = solve_sigma2(&r, beta, sigma2, opts)?;
        let sd = s2.sqrt();
        let step = c
            .iter()
            .zip(&coef)
            .zip(col_norms)
            .map(|((a, b), nj)| (a - b).abs() * nj / sd)
            .fold(((s2 - sigma2) / sigma2).abs(), f64::max);
        let g_new: Vec<f64> = r.iter().map(|e| e * e / s2).collect();
        let v_sum: f64 = v_vector(&g_new, beta).iter().sum();
        let grad_new = standardized_gradient(x, col_norms, &dpd_weights(&g_new, beta), &r, sd);
        if !(v_sum.abs() <= opts.tol_eq && grad_new <= opts.tol_eq) {
            // rounding noise pushed the iterate out; keep the last good one
            return Ok((coef, sigma2, resid, grad, sweep - 1));
        }
        coef = c;
        sigma2 = s2;
        resid = r;
        grad = grad_new;
        if step <= STEP_TOL {
            return Ok((coef, sigma2, resid, grad, sweep));
        }
    }
    Ok((coef, sigma2, resid, grad, MAX_SWEEPS))
}

/// Restricted minimum DPD fit for tuning parameter `beta`, started from OLS.
pub fn fit_null_dpd(data: &RegressionData, beta: f64, opts: &FitOptions) -> Result<DpdFit> {
    fit_null_dpd_from(data, beta, opts, None)
}

/// As [`fit_null_dpd`], optionally warm-started from the coefficients and
/// σ² of an earlier fit on the same data.
pub fn fit_null_dpd_from(
    data: &RegressionData,
    beta: f64,
    opts: &FitOptions,
    start: Option<&DpdFit>,
) -> Result<DpdFit> {
    opts.validate()?;
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidInput(format!("tuning parameter {beta} must be ≥ 0")));
    }
    let x = data.x();
    let y = data.y();
    let n = data.n() as f64;
    // RMS column scale, floored at 1 so O(1) columns are held to the raw gradient
    let col_norms: Vec<f64> = (0..x.cols())
        .map(|j| (x.column(j).iter().map(|v| v * v).sum::<f64>() / n).sqrt().max(1.0))
        .collect();

    let (ols_coef, ols_resid) = ols(x, y)?;
    let y_norm = dot(y, y).sqrt();
    let e_norm = dot(&ols_resid, &ols_resid).sqrt();
    if e_norm <= 1e-13 * y_norm || e_norm == 0.0 {
        return Err(Error::DegenerateFit);
    }
    let ols_sigma2 = e_norm * e_norm / n;
    if ols_sigma2 < 1e-300 {
        return Err(Error::DegenerateFit);
    }

    if beta == 0.0 {
        let grad = standardized_gradient(x, &col_norms, &vec![1.0; data.n()], &ols_resid, ols_sigma2.sqrt());
        return Ok(assemble(0.0, ols_coef, ols_sigma2, ols_resid, 1, true, grad));
    }

    let (mut coef, mut resid, mut sigma2) = match start {
        Some(s) if s.coefficients.len() == x.cols() && s.sigma2 > 0.0 => {
            let fitted = x.mul_vec(&s.coefficients);
            let r = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
            (s.coefficients.clone(), r, s.sigma2)
        }
        _ => (ols_coef, ols_resid, ols_sigma2),
    };

    let mut grad = f64::INFINITY;
    let mut v_sum = f64::INFINITY;
    for it in 1..=opts.max_outer_iterations {
        sigma2 = solve_sigma2(&resid, beta, sigma2, opts)?;
        if sigma2 < 1e-300 {
            return Err(Error::DegenerateFit);
        }
        let g: Vec<f64> = resid.iter().map(|e| e * e / sigma2).collect();
        let w = dpd_weights(&g, beta);
        v_sum = v_vector(&g, beta).iter().sum::<f64>();
        grad = standardized_gradient(x, &col_norms, &w, &resid, sigma2.sqrt());
        if v_sum.abs() <= opts.tol_eq && grad <= opts.tol_eq {
            let (coef, sigma2, resid, grad, extra) =
                polish(x, y, &col_norms, beta, opts, coef, sigma2, resid, grad)?;
            return Ok(assemble(beta, coef, sigma2, resid, it + extra, true, grad));
        }
        let (c, r) = weighted_ls(x, y, Some(&w))?;
        coef = c;
        resid = r;
    }
    Err(Error::NoConvergence {
        iterations: opts.max_outer_iterations,
        gradient_norm: grad.max(v_sum.abs()),
    })
}
