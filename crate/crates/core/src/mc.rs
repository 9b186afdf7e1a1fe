//! Monte Carlo size and power of the β-score tests.
//!
//! The design is drawn once per scenario. Replication `k` draws its errors
//! from a ChaCha8 stream keyed by `(seed, k)`, so reports do not depend on
//! how replications are scheduled across threads.

use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit_null_dpd_from, DpdFit, FitOptions};
use crate::lmtest::{bp_beta_test, koenker_beta_test, validate_grid, HeteroDesign};
use crate::model::{build_white_design, RegressionData, Scedastic, ScedasticKind};
use crate::numerics::{chi_square_quantile, Matrix};

/// Stream reserved for the design draw.
const DESIGN_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RegressorDist {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
}

impl RegressorDist {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            RegressorDist::Uniform { low, high } => rng.gen_range(low..high),
            RegressorDist::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    /// Regressors besides the intercept.
    pub p: usize,
    pub regressors: RegressorDist,
    pub hetero: HeteroDesign,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Contamination {
    /// Error replaced by `σᵢ · LogNormal(mu, sigma)`.
    LogNormal { mu: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub n: usize,
    pub design: DesignSpec,
    pub scedastic: Scedastic,
    /// Regression coefficients generating `y`; ones when `None`.
    pub coefficients: Option<Vec<f64>>,
    pub contamination_fraction: f64,
    pub contamination: Contamination,
    pub replications: usize,
    /// Significance level.
    pub alpha: f64,
    pub beta_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            n: 250,
            design: DesignSpec {
                p: 1,
                regressors: RegressorDist::Uniform { low: 0.0, high: 1.0 },
                hetero: HeteroDesign::AsGiven,
            },
            scedastic: Scedastic::homoscedastic(ScedasticKind::Multiplicative, 1, 1.0),
            coefficients: None,
            contamination_fraction: 0.0,
            contamination: Contamination::LogNormal { mu: 0.0, sigma: 1.0 },
            replications: 1000,
            alpha: 0.05,
            beta_grid: vec![0.0, 0.3],
            seed: 1,
        }
    }
}

impl SimScenario {
    /// Number of heteroscedasticity regressors the design produces.
    pub fn r(&self) -> usize {
        let p = self.design.p;
        match self.design.hetero {
            HeteroDesign::AsGiven => p,
            HeteroDesign::White => p + p * (p + 1) / 2,
        }
    }

    /// Rows that receive a contaminated error in each replication.
    pub fn contaminated_rows(&self) -> usize {
        (self.contamination_fraction * self.n as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.replications == 0 {
            return bad("replications must be ≥ 1".into());
        }
        if self.design.p == 0 {
            return bad("design needs p ≥ 1".into());
        }
        if !(0.0..1.0).contains(&self.contamination_fraction) {
            return bad(format!(
                "contamination fraction {} outside [0, 1)",
                self.contamination_fraction
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} outside (0, 1)", self.alpha));
        }
        if self.scedastic.alpha.len() != self.r() {
            return bad(format!(
                "scedastic alpha has {} entries, design has r = {}",
                self.scedastic.alpha.len(),
                self.r()
            ));
        }
        if !(self.scedastic.sigma2 > 0.0) {
            return bad("sigma2 must be positive".into());
        }
        if let Some(c) = &self.coefficients {
            if c.len() != self.design.p + 1 {
                return bad(format!(
                    "{} coefficients for p = {}",
                    c.len(),
                    self.design.p
                ));
            }
        }
        match self.design.regressors {
            RegressorDist::Uniform { low, high } if !(low < high) => {
                return bad("uniform regressors need low < high".into())
            }
            RegressorDist::Normal { sd, .. } if !(sd > 0.0) => {
                return bad("normal regressors need sd > 0".into())
            }
            _ => {}
        }
        let Contamination::LogNormal { sigma, .. } = self.contamination;
        if !(sigma > 0.0) {
            return bad("lognormal contamination needs sigma > 0".into());
        }
        validate_grid(&self.beta_grid)
    }

    /// Fixed design `(X, Z)` for this scenario.
    pub fn design_matrices(&self) -> Result<(Matrix, Matrix)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(DESIGN_STREAM);
        let (n, p) = (self.n, self.design.p);
        let mut x = Matrix::zeros(n, p + 1);
        for i in 0..n {
            x[(i, 0)] = 1.0;
            for j in 1..=p {
                x[(i, j)] = self.design.regressors.sample(&mut rng);
            }
        }
        let z = match self.design.hetero {
            HeteroDesign::AsGiven => x.block(0, 1, n, p),
            HeteroDesign::White => build_white_design(&x)?,
        };
        Ok((x, z))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaRates {
    pub beta: f64,
    pub bp_rate: f64,
    pub bp_se: f64,
    pub koenker_rate: f64,
    pub koenker_se: f64,
    /// Replications whose fit or test failed at this β.
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scenario: SimScenario,
    pub df: usize,
    pub threshold: f64,
    pub rates: Vec<BetaRates>,
}

impl SimReport {
    pub fn at(&self, beta: f64) -> Option<&BetaRates> {
        self.rates.iter().find(|r| r.beta == beta)
    }
}

/// Rejection flags `(bp, koenker)` per grid point; `None` marks a failure.
type RepOutcome = Vec<Option<(bool, bool)>>;

fn replicate(
    s: &SimScenario,
    base: &RegressionData,
    mean: &[f64],
    sd: &[f64],
    threshold: f64,
    opts: &FitOptions,
    k: usize,
) -> RepOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    rng.set_stream(k as u64);
    let mut y: Vec<f64> = mean
        .iter()
        .zip(sd)
        .map(|(m, sdi)| {
            let e: f64 = StandardNormal.sample(&mut rng);
            m + sdi * e
        })
        .collect();
    let m = s.contaminated_rows();
    if m > 0 {
        let Contamination::LogNormal { mu, sigma } = s.contamination;
        let ln = LogNormal::new(mu, sigma).expect("validated lognormal parameters");
        for i in sample(&mut rng, s.n, m).into_iter() {
            y[i] = mean[i] + sd[i] * ln.sample(&mut rng);
        }
    }
    let data = match base.with_response(y) {
        Ok(d) => d,
        Err(_) => return vec![None; s.beta_grid.len()],
    };
    let z = data.z();
    let mut previous: Option<DpdFit> = None;
    s.beta_grid
        .iter()
        .map(|&beta| {
            let fit = fit_null_dpd_from(&data, beta, opts, previous.as_ref()).ok()?;
            let bp = bp_beta_test(&fit, z).ok()?;
            let kq = koenker_beta_test(&fit, z).ok()?;
            previous = Some(fit);
            Some((bp.statistic > threshold, kq.statistic > threshold))
        })
        .collect()
}

/// Empirical rejection rates over `s.replications` independent samples.
pub fn run_scenario(s: &SimScenario) -> Result<SimReport> {
    run_scenario_with(s, &FitOptions::default())
}

pub fn run_scenario_with(s: &SimScenario, opts: &FitOptions) -> Result<SimReport> {
    s.validate()?;
    let (x, z) = s.design_matrices()?;
    let coef = s.coefficients.clone().unwrap_or_else(|| vec![1.0; x.cols()]);
    let mean = x.mul_vec(&coef);
    let sd: Vec<f64> = s.scedastic.variances(&z)?.into_iter().map(f64::sqrt).collect();
    // placeholder response; every replication swaps in its own
    let base = RegressionData::new(mean.clone(), x, z)?;
    let df = base.r();
    let threshold = chi_square_quantile(s.alpha, df);

    let outcomes: Vec<RepOutcome> = (0..s.replications)
        .into_par_iter()
        .map(|k| replicate(s, &base, &mean, &sd, threshold, opts, k))
        .collect();

    let total = s.replications;
    let mut rates = Vec::with_capacity(s.beta_grid.len());
    for (j, &beta) in s.beta_grid.iter().enumerate() {
        let (mut ok, mut bp, mut kq) = (0usize, 0usize, 0usize);
        for o in &outcomes {
            if let Some((b, k)) = o[j] {
                ok += 1;
                bp += b as usize;
                kq += k as usize;
            }
        }
        let failed = total - ok;
        if 2 * failed > total {
            return Err(Error::TooManyFailures { failed, total });
        }
        let rate = |c: usize| c as f64 / ok as f64;
        let se = |p: f64| (p * (1.0 - p) / ok as f64).sqrt();
        let (bp_rate, koenker_rate) = (rate(bp), rate(kq));
        rates.push(BetaRates {
            beta,
            bp_rate,
            bp_se: se(bp_rate),
            koenker_rate,
            koenker_se: se(koenker_rate),
            failed,
        });
    }
    Ok(SimReport {
        scenario: s.clone(),
        df,
        threshold,
        rates,
    })
}

fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect()
}

fn parse_tagged(v: &str) -> std::result::Result<(String, Vec<f64>), String> {
    let mut parts = v.split(':');
    let tag = parts.next().unwrap_or("").trim().to_ascii_lowercase();
    let args = parts
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((tag, args))
}

/// Flat `key = value` text, one pair per line, `#` starts a comment.
///
/// Keys: `n`, `p`, `regressors` (`uniform:LOW:HIGH` or `normal:MEAN:SD`),
/// `z` (`same` or `white`), `scedastic` (`additive` or `multiplicative`),
/// `scedastic_alpha` (comma list, zeros when absent), `sigma2`,
/// `coefficients`, `contamination_fraction`, `contamination`
/// (`lognormal:MU:SIGMA`), `replications`, `alpha`, `beta_grid`, `seed`.
impl FromStr for SimScenario {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut s = SimScenario::default();
        let mut scedastic_alpha: Option<Vec<f64>> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| Error::Scenario { line, message };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|e| err(format!("{key}: {e}")));
            let int = |v: &str| v.parse::<usize>().map_err(|e| err(format!("{key}: {e}")));
            match key {
                "n" => s.n = int(value)?,
                "p" => s.design.p = int(value)?,
                "regressors" => {
                    let (tag, a) = parse_tagged(value).map_err(&err)?;
                    s.design.regressors = match (tag.as_str(), a.as_slice()) {
                        ("uniform", [lo, hi]) => RegressorDist::Uniform { low: *lo, high: *hi },
                        ("normal", [m, sd]) => RegressorDist::Normal { mean: *m, sd: *sd },
                        _ => return Err(err(format!("bad regressors `{value}`"))),
                    };
                }
                "z" => {
                    s.design.hetero = match value.to_ascii_lowercase().as_str() {
                        "same" | "x" => HeteroDesign::AsGiven,
                        "white" => HeteroDesign::White,
                        _ => return Err(err(format!("bad z `{value}`"))),
                    }
                }
                "scedastic" => s.scedastic.kind = value.parse().map_err(|e: Error| err(e.to_string()))?,
                "scedastic_alpha" => scedastic_alpha = Some(parse_list(value).map_err(&err)?),
                "sigma2" => s.scedastic.sigma2 = num(value)?,
                "coefficients" => s.coefficients = Some(parse_list(value).map_err(&err)?),
                "contamination_fraction" => s.contamination_fraction = num(value)?,
                "contamination" => {
                    let (tag, a) = parse_tagged(value).map_err(&err)?;
                    s.contamination = match (tag.as_str(), a.as_slice()) {
                        ("lognormal", [mu, sigma]) => Contamination::LogNormal {
                            mu: *mu,
                            sigma: *sigma,
                        },
                        _ => return Err(err(format!("bad contamination `{value}`"))),
                    };
                }
                "replications" => s.replications = int(value)?,
                "alpha" => s.alpha = num(value)?,
                "beta_grid" => s.beta_grid = parse_list(value).map_err(&err)?,
                "seed" => s.seed = value.parse().map_err(|e| err(format!("seed: {e}")))?,
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        s.scedastic.alpha = scedastic_alpha.unwrap_or_else(|| vec![0.0; s.r()]);
        s.validate()?;
        Ok(s)
    }
}

/// Convenience for a multiplicative or additive alternative `α = scale·1`.
pub fn alternative(kind: ScedasticKind, r: usize, scale: f64, sigma2: f64) -> Scedastic {
    Scedastic {
        kind,
        alpha: vec![scale; r],
        sigma2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimScenario {
        SimScenario {
            n: 60,
            replications: 40,
            ..SimScenario::default()
        }
    }

    #[test]
    fn parses_scenario_text() {
        let text = "\
# null, two regressors
n = 120
p = 2
regressors = normal:0:1
scedastic = additive
replications = 10
beta_grid = 0, 0.3
seed = 99   # trailing comment
contamination_fraction = 0.1
contamination = lognormal:0:1
";
        let s: SimScenario = text.parse().unwrap();
        assert_eq!(s.n, 120);
        assert_eq!(s.scedastic.alpha, vec![0.0, 0.0]);
        assert_eq!(s.seed, 99);
        assert_eq!(s.contaminated_rows(), 12);
        assert_eq!(s.beta_grid, vec![0.0, 0.3]);
    }

    #[test]
    fn scenario_errors_carry_line() {
        let e = "n = 10\nbogus = 1\n".parse::<SimScenario>().unwrap_err();
        assert!(matches!(e, Error::Scenario { line: 2, .. }));
        let e = "n = 10\nseed\n".parse::<SimScenario>().unwrap_err();
        assert!(matches!(e, Error::Scenario { line: 2, .. }));
        assert!("replications = 0".parse::<SimScenario>().is_err());
        assert!("beta_grid = 0.3, 0.3".parse::<SimScenario>().is_err());
    }

    #[test]
    fn same_seed_same_report() {
        let s = small();
        assert_eq!(run_scenario(&s).unwrap(), run_scenario(&s).unwrap());
    }

    #[test]
    fn thread_count_does_not_matter() {
        let s = small();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_scenario(&s).unwrap());
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_scenario(&s).unwrap());
        assert_eq!(one, four);
    }

    #[test]
    fn rates_and_errors_are_consistent() {
        let r = run_scenario(&small()).unwrap();
        for b in &r.rates {
            assert!((0.0..=1.0).contains(&b.bp_rate));
            let expect = (b.bp_rate * (1.0 - b.bp_rate) / 40.0).sqrt();
            assert!((b.bp_se - expect).abs() < 1e-15);
        }
    }
}
