//! Efficiency and robustness diagnostics under the homoscedastic null:
//! Pitman ARE, the sandwich blocks, second-order influence functions, GES,
//! local power and its sensitivity to contamination.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{v_shift, DpdFit};
use crate::model::RegressionData;
use crate::numerics::{
    chi_square_quantile, dot, noncentral_chi_square_sf, Cholesky, Matrix,
};

/// `(2β²+1)/(2(2β+1)^{5/2}) − β²/(4(β+1)³)`
pub fn a1_numerator(beta: f64) -> f64 {
    let b2 = beta * beta;
    (2.0 * b2 + 1.0) / (2.0 * (2.0 * beta + 1.0).powf(2.5)) - b2 / (4.0 * (beta + 1.0).powi(3))
}

/// Pitman ARE of the β-score Breusch–Pagan test against the classical one:
/// `8(β+1)⁵/(β²+2)² · a₁(β)`.
pub fn are(beta: f64) -> f64 {
    assert!(beta >= 0.0, "ARE needs β ≥ 0");
    8.0 * (beta + 1.0).powi(5) / (beta * beta + 2.0).powi(2) * a1_numerator(beta)
}

/// Null parameter value at which influence and power are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta0 {
    pub coefficients: Vec<f64>,
    pub sigma2: f64,
}

impl From<&DpdFit> for Theta0 {
    fn from(fit: &DpdFit) -> Self {
        Self {
            coefficients: fit.coefficients.clone(),
            sigma2: fit.sigma2,
        }
    }
}

/// Sensitivity and variability matrices under the null, parameters ordered
/// `(α, σ², regression coefficients)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSandwich {
    pub beta_tuning: f64,
    pub sigma2: f64,
    pub hprime0: f64,
    /// `[[σ⁴h′²ZᵀZ/n, σ²h′z̄], [σ²h′z̄ᵀ, 1]]`
    pub w: Matrix,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    /// `diag(a₁W, a₂XᵀX/n)`
    pub kbar: Matrix,
    /// `diag(b₁W, b₂XᵀX/n)`
    pub jbar: Matrix,
    /// Number of heteroscedasticity regressors.
    pub r: usize,
}

impl NullSandwich {
    /// `J⁻¹ K J⁻¹`
    pub fn v(&self) -> Result<Matrix> {
        let jinv = Cholesky::factor(&self.jbar)?.inverse();
        jinv.matmul(&self.kbar)?.matmul(&jinv)
    }

    /// `MᵀVM` with `M = h′(0)·[I_r; 0]`.
    pub fn mvm(&self) -> Result<Matrix> {
        let v = self.v()?;
        Ok(v.block(0, 0, self.r, self.r).scale(self.hprime0 * self.hprime0))
    }
}

pub fn null_sandwich(data: &RegressionData, fit: &DpdFit, hprime0: f64) -> Result<NullSandwich> {
    null_sandwich_at(data, &Theta0::from(fit), fit.beta_tuning, hprime0)
}

pub fn null_sandwich_at(
    data: &RegressionData,
    theta0: &Theta0,
    beta: f64,
    hprime0: f64,
) -> Result<NullSandwich> {
    let s2 = theta0.sigma2;
    if !(s2 > 0.0) {
        return Err(Error::InvalidInput("sigma2 must be positive".into()));
    }
    if !(beta >= 0.0) {
        return Err(Error::InvalidInput("tuning parameter must be ≥ 0".into()));
    }
    if hprime0 == 0.0 || !hprime0.is_finite() {
        return Err(Error::InvalidInput("h'(0) must be non-zero".into()));
    }
    let n = data.n() as f64;
    let z = data.z();
    let r = z.cols();
    let k = data.x().cols();

    let ztz = z.gram(None).scale(1.0 / n);
    let zbar: Vec<f64> = (0..r).map(|j| z.column(j).iter().sum::<f64>() / n).collect();
    let mut w = Matrix::zeros(r + 1, r + 1);
    w.set_block(0, 0, &ztz.scale(s2 * s2 * hprime0 * hprime0));
    for j in 0..r {
        w[(j, r)] = s2 * hprime0 * zbar[j];
        w[(r, j)] = s2 * hprime0 * zbar[j];
    }
    w[(r, r)] = 1.0;

    let two_pi = 2.0 * PI;
    let a1 = a1_numerator(beta) / (two_pi.powf(beta) * s2.powf(beta + 2.0));
    let a2 = 1.0 / (two_pi.powf(beta) * s2.powf(beta + 2.0) * (2.0 * beta + 1.0).powf(1.5));
    let b1 = ((beta * beta + 2.0) / (4.0 * (beta + 1.0).powf(2.5)))
        / (two_pi.powf(beta / 2.0) * s2.powf(beta / 2.0 + 2.0));
    let b2 = 1.0 / (two_pi.powf(beta / 2.0) * s2.powf(beta / 2.0 + 1.0) * (beta + 1.0).powf(1.5));

    let xtx = data.x().gram(None).scale(1.0 / n);
    let dim = r + 1 + k;
    let mut kbar = Matrix::zeros(dim, dim);
    kbar.set_block(0, 0, &w.scale(a1));
    kbar.set_block(r + 1, r + 1, &xtx.scale(a2));
    let mut jbar = Matrix::zeros(dim, dim);
    jbar.set_block(0, 0, &w.scale(b1));
    jbar.set_block(r + 1, r + 1, &xtx.scale(b2));

    Ok(NullSandwich {
        beta_tuning: beta,
        sigma2: s2,
        hprime0,
        w,
        a1,
        a2,
        b1,
        b2,
        kbar,
        jbar,
        r,
    })
}

/// Local power and, when a contamination is supplied, its perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub alpha: f64,
    pub df: usize,
    /// `χ²_{r,α}`
    pub threshold: f64,
    /// `ν = δᵀ[MᵀVM]⁻¹δ`
    pub ncp: f64,
    pub power: f64,
    pub epsilon: Option<f64>,
    pub contaminated_ncp: Option<f64>,
    pub contaminated_power: Option<f64>,
    /// `δᵀ IF(λ)`
    pub delta_if: Option<f64>,
    /// Derivative of power in the contamination fraction at zero.
    pub pif: Option<f64>,
}

fn power_at(threshold: f64, df: usize, ncp: f64, alpha: f64) -> f64 {
    if ncp == 0.0 {
        alpha
    } else {
        noncentral_chi_square_sf(threshold, df, ncp)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("alpha = {alpha} outside (0, 1)")))
    }
}

/// Noncentrality `δᵀ[MᵀVM]⁻¹δ` and the asymptotic power at level `alpha`.
pub fn pitman_power(delta: &[f64], sandwich: &NullSandwich, alpha: f64) -> Result<PowerReport> {
    check_alpha(alpha)?;
    let r = sandwich.r;
    if delta.len() != r {
        return Err(Error::DimensionMismatch(format!(
            "delta has {} entries, expected {r}",
            delta.len()
        )));
    }
    let chol = Cholesky::factor(&sandwich.mvm()?)?;
    let ncp = if delta.iter().all(|d| *d == 0.0) {
        0.0
    } else {
        chol.inverse_quadratic_form(delta).max(0.0)
    };
    let threshold = chi_square_quantile(alpha, r);
    Ok(PowerReport {
        alpha,
        df: r,
        threshold,
        ncp,
        power: power_at(threshold, r, ncp, alpha),
        epsilon: None,
        contaminated_ncp: None,
        contaminated_power: None,
        delta_if: None,
        pif: None,
    })
}

/// `e^{−βg}(g−1)²`, the `y`-dependent factor of the second-order IF.
fn if2_kernel(g: f64, beta: f64) -> f64 {
    (-beta * g).max(-700.0).exp() * (g - 1.0).powi(2)
}

/// Leverages `zᵢᵀ(ZᵀZ)⁻¹zᵢ` of the heteroscedasticity regressors.
pub fn z_leverages(z: &Matrix) -> Result<Vec<f64>> {
    let chol = Cholesky::factor(&z.gram(None))?;
    Ok((0..z.rows())
        .map(|i| chol.inverse_quadratic_form(z.row(i)))
        .collect())
}

fn check_theta0(data: &RegressionData, theta0: &Theta0) -> Result<()> {
    if theta0.coefficients.len() != data.x().cols() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} regression columns",
            theta0.coefficients.len(),
            data.x().cols()
        )));
    }
    if !(theta0.sigma2 > 0.0) {
        return Err(Error::InvalidInput("sigma2 must be positive".into()));
    }
    Ok(())
}

/// Second-order influence of observation `i` when its response is replaced
/// by `y_probe[i]`:
/// `e^{−βg}(g−1)² / (4a₁(β)) · zᵢᵀ(ZᵀZ)⁻¹zᵢ`, `g = (y − xᵢᵀβ₀)²/σ₀²`.
pub fn if2_per_observation(
    data: &RegressionData,
    theta0: &Theta0,
    beta: f64,
    y_probe: &[f64],
) -> Result<Vec<f64>> {
    check_theta0(data, theta0)?;
    if y_probe.len() != data.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} probe values for {} observations",
            y_probe.len(),
            data.n()
        )));
    }
    let lev = z_leverages(data.z())?;
    let fitted = data.x().mul_vec(&theta0.coefficients);
    let denom = 4.0 * a1_numerator(beta);
    Ok(y_probe
        .iter()
        .zip(&fitted)
        .zip(&lev)
        .map(|((y, f), h)| {
            let g = (y - f).powi(2) / theta0.sigma2;
            if2_kernel(g, beta) / denom * h
        })
        .collect())
}

/// `IF²` of a single observation along a grid of response values.
pub fn if2_curve(
    data: &RegressionData,
    theta0: &Theta0,
    beta: f64,
    obs: usize,
    y_grid: &[f64],
) -> Result<Vec<f64>> {
    check_theta0(data, theta0)?;
    if obs >= data.n() {
        return Err(Error::InvalidInput(format!(
            "observation {obs} out of range for {} rows",
            data.n()
        )));
    }
    let lev = z_leverages(data.z())?[obs];
    let fitted = dot(data.x().row(obs), &theta0.coefficients);
    let denom = 4.0 * a1_numerator(beta);
    Ok(y_grid
        .iter()
        .map(|y| if2_kernel((y - fitted).powi(2) / theta0.sigma2, beta) / denom * lev)
        .collect())
}

/// Gross-error sensitivity; `unbounded` marks the `β = 0` case, where
/// `value` holds `f64::MAX` as a sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ges {
    pub value: f64,
    pub unbounded: bool,
}

impl Ges {
    pub const UNBOUNDED: Ges = Ges {
        value: f64::MAX,
        unbounded: true,
    };

    fn finite(value: f64) -> Self {
        Self {
            value,
            unbounded: false,
        }
    }
}

/// Below this the tuning parameter counts as zero for the GES.
pub const GES_BETA_FLOOR: f64 = 1e-12;

/// Closed-form GES of the simple regression `x_i = z_i = i`, `i = 1..n`:
/// `6/(β²e^{β+2}a₁(β)) · n²/((2n+1)(n²−1))`.
pub fn ges_simple_linear(beta: f64, n: usize) -> Result<Ges> {
    if n < 2 {
        return Err(Error::InvalidInput("GES needs n ≥ 2".into()));
    }
    if !(beta >= 0.0) {
        return Err(Error::InvalidInput("tuning parameter must be ≥ 0".into()));
    }
    if beta < GES_BETA_FLOOR {
        return Ok(Ges::UNBOUNDED);
    }
    let nf = n as f64;
    let lead = 6.0 / (beta * beta * (beta + 2.0).exp() * a1_numerator(beta));
    Ok(Ges::finite(lead * nf * nf / ((2.0 * nf + 1.0) * (nf * nf - 1.0))))
}

/// Supremum over `g ≥ 0` of `e^{−βg}(g−1)²`, taken over a log-spaced grid of
/// standardized residuals together with `g = 0` and the stationary point
/// `g = (β+2)/β`.
pub fn if2_kernel_sup(beta: f64) -> Option<f64> {
    if beta < GES_BETA_FLOOR {
        return None;
    }
    let mut best = if2_kernel(0.0, beta).max(if2_kernel((beta + 2.0) / beta, beta));
    let steps = 4000;
    for k in 0..=steps {
        // |t| from 1e-6 to 1e6 standard deviations
        let t = 10f64.powf(-6.0 + 12.0 * k as f64 / steps as f64);
        best = best.max(if2_kernel(t * t, beta));
    }
    Some(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub beta_tuning: f64,
    pub per_observation_if2: Vec<f64>,
    /// `sup_y IF²ᵢ(y)`; `f64::MAX` when unbounded.
    pub ges_per_observation: Vec<f64>,
    pub ges: Ges,
}

pub fn influence_report(
    data: &RegressionData,
    theta0: &Theta0,
    beta: f64,
    y_probe: &[f64],
) -> Result<InfluenceReport> {
    let per_observation_if2 = if2_per_observation(data, theta0, beta, y_probe)?;
    let lev = z_leverages(data.z())?;
    let denom = 4.0 * a1_numerator(beta);
    let (ges_per_observation, ges) = match if2_kernel_sup(beta) {
        Some(sup) => {
            let per: Vec<f64> = lev.iter().map(|h| sup / denom * h).collect();
            let max = per.iter().cloned().fold(0.0, f64::max);
            (per, Ges::finite(max))
        }
        None => (vec![f64::MAX; data.n()], Ges::UNBOUNDED),
    };
    Ok(InfluenceReport {
        beta_tuning: beta,
        per_observation_if2,
        ges_per_observation,
        ges,
    })
}

/// Score contribution `uᵢ(y; θ₀)` of observation `i` at response `y`,
/// ordered `(α, σ², regression coefficients)`.
pub fn score_vector(
    data: &RegressionData,
    theta0: &Theta0,
    beta: f64,
    hprime0: f64,
    obs: usize,
    y: f64,
) -> Vec<f64> {
    let s2 = theta0.sigma2;
    let x = data.x().row(obs);
    let z = data.z().row(obs);
    let e = y - dot(x, &theta0.coefficients);
    let g = e * e / s2;
    let w = (-0.5 * beta * g).max(-700.0).exp();
    let scale = (2.0 * PI).powf(-beta / 2.0) * s2.powf(-beta / 2.0);
    let core = w * (g - 1.0) + v_shift(beta);
    let mut u = Vec::with_capacity(z.len() + 1 + x.len());
    u.extend(z.iter().map(|zj| scale * hprime0 / 2.0 * core * zj));
    u.push(scale * core / (2.0 * s2));
    u.extend(x.iter().map(|xj| scale * w * e / s2 * xj));
    u
}

/// `IF(λ) = Σᵢ [MᵀVM]⁻¹ Mᵀ J⁻¹ uᵢ(y_contam[i]; θ₀)`
pub fn if_lambda(
    data: &RegressionData,
    theta0: &Theta0,
    sandwich: &NullSandwich,
    y_contam: &[f64],
) -> Result<Vec<f64>> {
    check_theta0(data, theta0)?;
    if y_contam.len() != data.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} contamination points for {} observations",
            y_contam.len(),
            data.n()
        )));
    }
    let r = sandwich.r;
    let jchol = Cholesky::factor(&sandwich.jbar)?;
    let mchol = Cholesky::factor(&sandwich.mvm()?)?;
    let mut total = vec![0.0; sandwich.jbar.rows()];
    for (i, &y) in y_contam.iter().enumerate() {
        let u = score_vector(data, theta0, sandwich.beta_tuning, sandwich.hprime0, i, y);
        for (t, v) in total.iter_mut().zip(u) {
            *t += v;
        }
    }
    // linear in uᵢ, so sum first
    let jinv_u = jchol.solve(&total);
    let mt: Vec<f64> = jinv_u[..r].iter().map(|v| v * sandwich.hprime0).collect();
    Ok(mchol.solve(&mt))
}

/// Local power under an `ε`-contamination at `y_contam`, with the power
/// influence function.
pub fn contaminated_power(
    delta: &[f64],
    epsilon: f64,
    y_contam: &[f64],
    sandwich: &NullSandwich,
    data: &RegressionData,
    theta0: &Theta0,
    alpha: f64,
) -> Result<PowerReport> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidInput(format!("epsilon = {epsilon} outside [0, 1]")));
    }
    let base = pitman_power(delta, sandwich, alpha)?;
    let iflam = if_lambda(data, theta0, sandwich, y_contam)?;
    let delta_if = dot(delta, &iflam);
    let if2 = if2_per_observation(data, theta0, sandwich.beta_tuning, y_contam)?;
    let if2_mean = if2.iter().sum::<f64>() / if2.len() as f64;
    let cncp = (base.ncp + 2.0 * epsilon * delta_if + epsilon * epsilon * if2_mean).max(0.0);
    let r = base.df;
    let pif = if base.ncp == 0.0 {
        0.0
    } else {
        delta_if
            * (noncentral_chi_square_sf(base.threshold, r + 2, base.ncp)
                - noncentral_chi_square_sf(base.threshold, r, base.ncp))
    };
    Ok(PowerReport {
        epsilon: Some(epsilon),
        contaminated_ncp: Some(cncp),
        contaminated_power: Some(power_at(base.threshold, r, cncp, alpha)),
        delta_if: Some(delta_if),
        pif: Some(pif),
        ..base
    })
}
