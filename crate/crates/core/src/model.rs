//! Regression data, heteroscedasticity designs and scedastic functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{symmetric_eigenvalues, Cholesky, Matrix};

/// Response, regression design (leading intercept column) and
/// heteroscedasticity regressors (no intercept).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionData {
    y: Vec<f64>,
    x: Matrix,
    z: Matrix,
}

impl RegressionData {
    pub fn new(y: Vec<f64>, x: Matrix, z: Matrix) -> Result<Self> {
        let n = y.len();
        if x.rows() != n || z.rows() != n {
            return Err(Error::DimensionMismatch(format!(
                "y has {n} entries, X has {} rows, Z has {} rows",
                x.rows(),
                z.rows()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response"));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("regression design"));
        }
        if !z.is_finite() {
            return Err(Error::NonFinite("heteroscedasticity design"));
        }
        if (0..n).any(|i| x[(i, 0)] != 1.0) {
            return Err(Error::MissingIntercept);
        }
        let p = x.cols() - 1;
        let r = z.cols();
        if (r + 1) + (p + 1) >= n {
            return Err(Error::TooFewObservations { n, p, r });
        }
        for j in 0..r {
            if is_constant(&z.column(j)) {
                return Err(Error::ConstantColumn { column: j });
            }
        }
        if Cholesky::factor(&x.gram(None)).is_err() {
            return Err(Error::RankDeficient("regression design X".into()));
        }
        let data = Self { y, x, z };
        if Cholesky::factor(&data.z_breve().gram(None)).is_err() {
            return Err(Error::RankDeficient(
                "heteroscedasticity design [1 | Z]".into(),
            ));
        }
        Ok(data)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of non-intercept regressors.
    #[inline]
    pub fn p(&self) -> usize {
        self.x.cols() - 1
    }

    /// Number of heteroscedasticity regressors (test degrees of freedom).
    #[inline]
    pub fn r(&self) -> usize {
        self.z.cols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    /// `[1ₙ | Z]` with the `Z` columns centered. Same column span as the
    /// uncentered version, much better conditioned cross-product.
    pub fn z_breve(&self) -> Matrix {
        centered_with_intercept(&self.z)
    }

    /// Same design with a different response.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(y, self.x.clone(), self.z.clone())
    }

    /// Same response and regression design with different heteroscedasticity
    /// regressors.
    pub fn with_z(&self, z: Matrix) -> Result<Self> {
        Self::new(self.y.clone(), self.x.clone(), z)
    }

    /// Keeps every row except the listed 0-based indices.
    pub fn drop_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&i| i >= self.n()) {
            return Err(Error::InvalidInput(format!(
                "row {bad} out of range for {} observations",
                self.n()
            )));
        }
        let keep: Vec<usize> = (0..self.n()).filter(|i| !rows.contains(i)).collect();
        Self::new(
            keep.iter().map(|&i| self.y[i]).collect(),
            self.x.select_rows(&keep),
            self.z.select_rows(&keep),
        )
    }
}

/// `[1ₙ | Z − 1ₙz̄ᵀ]`
pub fn centered_with_intercept(z: &Matrix) -> Matrix {
    let n = z.rows();
    let mut zb = z.with_intercept();
    for j in 1..zb.cols() {
        let m = zb.column(j).iter().sum::<f64>() / n as f64;
        for i in 0..n {
            zb[(i, j)] -= m;
        }
    }
    zb
}

fn is_constant(col: &[f64]) -> bool {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    var.sqrt() < 1e-12 * (1.0 + mean.abs())
}

/// Regressors plus the half-vectorization of `xxᵀ` over the non-intercept
/// columns of `X`: `x₁..x_p, x₁², x₁x₂, …, x₁x_p, x₂², …, x_p²`.
pub fn build_white_design(x: &Matrix) -> Result<Matrix> {
    let p = x.cols().saturating_sub(1);
    if p == 0 {
        return Err(Error::InvalidInput(
            "White design needs at least one regressor besides the intercept".into(),
        ));
    }
    let n = x.rows();
    let r = p + p * (p + 1) / 2;
    let mut z = Matrix::zeros(n, r);
    for i in 0..n {
        let row = &x.row(i)[1..];
        let mut k = 0;
        for &v in row {
            z[(i, k)] = v;
            k += 1;
        }
        for a in 0..p {
            for b in a..p {
                z[(i, k)] = row[a] * row[b];
                k += 1;
            }
        }
    }
    for j in 0..r {
        if is_constant(&z.column(j)) {
            return Err(Error::RankDeficient(format!(
                "White column {j} is constant"
            )));
        }
    }
    let zb = centered_with_intercept(&z);
    if Cholesky::factor(&zb.gram(None)).is_err() {
        return Err(Error::RankDeficient(
            "White design columns are collinear (binary regressor?)".into(),
        ));
    }
    Ok(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScedasticKind {
    /// `h(t) = 1 + t`
    Additive,
    /// `h(t) = exp(t)`
    Multiplicative,
}

impl ScedasticKind {
    pub fn h(self, t: f64) -> f64 {
        match self {
            ScedasticKind::Additive => 1.0 + t,
            ScedasticKind::Multiplicative => t.exp(),
        }
    }

    /// `h′(0)`; both forms have slope one at the origin.
    pub fn h_prime0(self) -> f64 {
        1.0
    }
}

impl std::str::FromStr for ScedasticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "additive" => Ok(Self::Additive),
            "multiplicative" => Ok(Self::Multiplicative),
            other => Err(Error::InvalidInput(format!("unknown scedastic kind `{other}`"))),
        }
    }
}

/// Variance model `σᵢ² = σ² h(zᵢᵀα)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scedastic {
    pub kind: ScedasticKind,
    pub alpha: Vec<f64>,
    pub sigma2: f64,
}

impl Scedastic {
    pub fn homoscedastic(kind: ScedasticKind, r: usize, sigma2: f64) -> Self {
        Self {
            kind,
            alpha: vec![0.0; r],
            sigma2,
        }
    }

    pub fn variance(&self, z: &[f64]) -> Result<f64> {
        scedastic_variance(self, z)
    }

    /// Variances for every row of `z`.
    pub fn variances(&self, z: &Matrix) -> Result<Vec<f64>> {
        (0..z.rows())
            .map(|i| {
                self.variance(z.row(i)).map_err(|e| match e {
                    Error::NonPositiveVariance { .. } => Error::NonPositiveVariance { row: i },
                    other => other,
                })
            })
            .collect()
    }
}

/// Evaluates `σ² h(zᵀα)`.
pub fn scedastic_variance(model: &Scedastic, z: &[f64]) -> Result<f64> {
    if z.len() != model.alpha.len() {
        return Err(Error::DimensionMismatch(format!(
            "z has {} entries, alpha has {}",
            z.len(),
            model.alpha.len()
        )));
    }
    if !(model.sigma2 > 0.0) {
        return Err(Error::InvalidInput("sigma2 must be positive".into()));
    }
    let t: f64 = z.iter().zip(&model.alpha).map(|(a, b)| a * b).sum();
    let h = model.kind.h(t);
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::NonPositiveVariance { row: 0 });
    }
    Ok(model.sigma2 * h)
}

/// Finite-sample versions of the design regularity conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignDiagnostics {
    /// `λ_min(XᵀX/n)`
    pub lambda_min_x: f64,
    /// `λ_min(Z̆ᵀZ̆/n)`
    pub lambda_min_zb: f64,
    /// `max‖xᵢ‖ / √(n λ_min(XᵀX/n))`
    pub leverage_ratio_x: f64,
    /// `max‖z̆ᵢ‖ / √(n λ_min(Z̆ᵀZ̆/n))`
    pub leverage_ratio_zb: f64,
}

/// Smallest eigenvalue of `AᵀA/n` and the ratio `max‖aᵢ‖ / √(n λ_min)`.
pub fn design_ratio(a: &Matrix) -> (f64, f64) {
    let n = a.rows() as f64;
    let gram = a.gram(None).scale(1.0 / n);
    let lambda = symmetric_eigenvalues(&gram)
        .map(|ev| ev[0].max(0.0))
        .unwrap_or(0.0);
    let max_norm = (0..a.rows())
        .map(|i| a.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let ratio = if lambda > 0.0 {
        max_norm / (n * lambda).sqrt()
    } else {
        f64::INFINITY
    };
    (lambda, ratio)
}

pub fn check_design_conditions(data: &RegressionData) -> DesignDiagnostics {
    let (lambda_min_x, leverage_ratio_x) = design_ratio(data.x());
    let (lambda_min_zb, leverage_ratio_zb) = design_ratio(&data.z().with_intercept());
    DesignDiagnostics {
        lambda_min_x,
        lambda_min_zb,
        leverage_ratio_x,
        leverage_ratio_zb,
    }
}
