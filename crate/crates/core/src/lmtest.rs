//! Breusch–Pagan β-score and Koenker β-score statistics and β-grid scans.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit_null_dpd_from, DpdFit, FitOptions};
use crate::model::{build_white_design, centered_with_intercept, RegressionData};
use crate::numerics::{chi_square_quantile, chi_square_sf, projection_quadratic_form, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    BreuschPaganBeta,
    KoenkerBeta,
}

impl TestKind {
    pub fn label(self) -> &'static str {
        match self {
            TestKind::BreuschPaganBeta => "bp",
            TestKind::KoenkerBeta => "koenker",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub kind: TestKind,
    pub beta_tuning: f64,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// `vᵀ P v` with `P` the projector onto the span of `[1ₙ | Z]`.
    pub ess: f64,
    /// `vᵀ v`
    pub tss: f64,
    /// `d(β)`, Breusch–Pagan only.
    pub denominator: Option<f64>,
}

/// `d(β) = 2(2β²+1)/(2β+1)^{5/2} − β²/(β+1)³`
pub fn bp_denominator(beta: f64) -> f64 {
    let b2 = beta * beta;
    2.0 * (2.0 * b2 + 1.0) / (2.0 * beta + 1.0).powf(2.5) - b2 / (beta + 1.0).powi(3)
}

fn projection(fit: &DpdFit, z: &Matrix) -> Result<(f64, f64)> {
    if !fit.converged {
        return Err(Error::NotConverged);
    }
    if z.rows() != fit.v.len() {
        return Err(Error::DimensionMismatch(format!(
            "Z has {} rows, fit has {} observations",
            z.rows(),
            fit.v.len()
        )));
    }
    let v_sum = fit.v_sum();
    let v_abs: f64 = fit.v.iter().map(|v| v.abs()).sum();
    if v_sum.abs() > 1e-6 * v_abs + 1e-8 {
        return Err(Error::NotOnNull(v_sum));
    }
    let s = projection_quadratic_form(&centered_with_intercept(z), &fit.v)?;
    Ok((s.ess, s.tss))
}

/// `R = vᵀZ̆(Z̆ᵀZ̆)⁻¹Z̆ᵀv / d(β)`, referred to `χ²_r`.
pub fn bp_beta_test(fit: &DpdFit, z: &Matrix) -> Result<TestResult> {
    let (ess, tss) = projection(fit, z)?;
    let beta = fit.beta_tuning;
    let d = bp_denominator(beta);
    let statistic = (ess / d).max(0.0);
    let df = z.cols();
    Ok(TestResult {
        kind: TestKind::BreuschPaganBeta,
        beta_tuning: beta,
        statistic,
        df,
        p_value: chi_square_sf(statistic, df),
        ess,
        tss,
        denominator: Some(d),
    })
}

/// `Q = n · ESS / TSS`, referred to `χ²_r`.
pub fn koenker_beta_test(fit: &DpdFit, z: &Matrix) -> Result<TestResult> {
    let (ess, tss) = projection(fit, z)?;
    let n = fit.v.len() as f64;
    if tss / n < 1e-300 {
        return Err(Error::ZeroVariance);
    }
    let statistic = (n * ess / tss).clamp(0.0, n);
    let df = z.cols();
    Ok(TestResult {
        kind: TestKind::KoenkerBeta,
        beta_tuning: fit.beta_tuning,
        statistic,
        df,
        p_value: chi_square_sf(statistic, df),
        ess,
        tss,
        denominator: None,
    })
}

/// Which heteroscedasticity regressors a scan uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeteroDesign {
    /// `Z` as stored in the data.
    #[default]
    AsGiven,
    /// Regressors plus their squares and cross-products.
    White,
}

pub const DEFAULT_ALPHA: f64 = 0.05;

/// `0, 0.05, …, 0.75`
pub fn default_grid() -> Vec<f64> {
    (0..16).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub beta: f64,
    pub bp: Option<TestResult>,
    pub koenker: Option<TestResult>,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

impl ScanPoint {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaScan {
    pub grid: Vec<f64>,
    pub points: Vec<ScanPoint>,
    pub alpha: f64,
    pub df: usize,
    /// `χ²_{r,α}`
    pub threshold: f64,
}

impl BetaScan {
    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.failed()).count()
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty β grid".into()));
    }
    if let Some(b) = grid.iter().find(|b| !(**b >= 0.0 && **b <= 2.0)) {
        return Err(Error::InvalidInput(format!("β = {b} outside [0, 2]")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("β grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Both statistics at every grid point. Each fit is warm-started from the
/// last successful one; a failing point is recorded and the scan goes on.
pub fn scan_beta(
    data: &RegressionData,
    grid: &[f64],
    alpha: f64,
    design: HeteroDesign,
    opts: &FitOptions,
) -> Result<BetaScan> {
    scan_beta_with(data, grid, alpha, design, opts, true)
}

/// As [`scan_beta`]; with `warm_start = false` every point is fitted from
/// OLS, exactly as a standalone fit. The DPD objective can have several
/// local minima, so the two modes may settle on different stationary points
/// at larger β.
pub fn scan_beta_with(
    data: &RegressionData,
    grid: &[f64],
    alpha: f64,
    design: HeteroDesign,
    opts: &FitOptions,
    warm_start: bool,
) -> Result<BetaScan> {
    validate_grid(grid)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha = {alpha} outside (0, 1)")));
    }
    let white;
    let data = match design {
        HeteroDesign::AsGiven => data,
        HeteroDesign::White => {
            white = data.with_z(build_white_design(data.x())?)?;
            &white
        }
    };
    let z = data.z();
    let df = z.cols();
    let mut previous: Option<DpdFit> = None;
    let mut points = Vec::with_capacity(grid.len());
    for &beta in grid {
        let outcome = fit_null_dpd_from(data, beta, opts, previous.as_ref()).and_then(|fit| {
            let bp = bp_beta_test(&fit, z)?;
            let koenker = koenker_beta_test(&fit, z)?;
            Ok((fit, bp, koenker))
        });
        points.push(match outcome {
            Ok((fit, bp, koenker)) => {
                let point = ScanPoint {
                    beta,
                    bp: Some(bp),
                    koenker: Some(koenker),
                    iterations: Some(fit.iterations),
                    error: None,
                };
                if warm_start {
                    previous = Some(fit);
                }
                point
            }
            Err(e) => ScanPoint {
                beta,
                bp: None,
                koenker: None,
                iterations: None,
                error: Some(e.to_string()),
            },
        });
    }
    Ok(BetaScan {
        grid: grid.to_vec(),
        points,
        alpha,
        df,
        threshold: chi_square_quantile(alpha, df),
    })
}
