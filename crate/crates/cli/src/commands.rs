//! One function per subcommand. Each returns the process exit code.

use std::io::Write;

use betalm_core::robustness::if2_curve;
use betalm_core::{
    are, bp_beta_test, contaminated_power, fit_null_dpd, influence_report, koenker_beta_test,
    null_sandwich, pitman_power, run_scenario, scan_beta_with, FitOptions, HeteroDesign,
    PowerReport, SimReport, SimScenario, TestKind, Theta0,
};
use serde::{Deserialize, Serialize};

use crate::args::{
    parse_grid, AreArgs, Cli, Command, DataArgs, InfluenceArgs, PowerArgs, ScanArgs, SimulateArgs,
    TestArgs,
};
use crate::data::{ModelSpec, Table};
use crate::error::{CliError, Result};
use crate::output::{align, emit, num, pval, write_csv, Render};

pub const EXIT_OK: u8 = 0;
pub const EXIT_PARTIAL_SCAN: u8 = 4;

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<u8> {
    match cli.command {
        Command::Test(a) => cmd_test(&a, out),
        Command::Scan(a) => cmd_scan(&a, out),
        Command::Are(a) => cmd_are(&a, out),
        Command::Influence(a) => cmd_influence(&a, out),
        Command::Power(a) => cmd_power(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out),
    }
}

fn load(data: &DataArgs) -> Result<(ModelSpec, betalm_core::RegressionData)> {
    let spec = data.spec();
    let table = Table::read(&data.input)?;
    let reg = spec.load(&table)?;
    Ok((spec, reg))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("--alpha {alpha} outside (0, 1)")))
    }
}

#[derive(Debug, Serialize)]
struct DataConfig<'a> {
    input: String,
    #[serde(flatten)]
    model: &'a ModelSpec,
}

impl<'a> DataConfig<'a> {
    fn new(args: &DataArgs, model: &'a ModelSpec) -> Self {
        Self {
            input: args.input.display().to_string(),
            model,
        }
    }
}

// ------------------------------------------------------------------ test

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub kind: TestKind,
    pub beta: f64,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub reject: bool,
    pub ess: f64,
    pub tss: f64,
    pub denominator: Option<f64>,
    pub sigma2: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Serialize)]
#[serde(transparent)]
struct TestRows(Vec<TestRow>);

impl Render for TestRows {
    fn csv_header(&self) -> &'static [&'static str] {
        &["kind", "beta", "statistic", "df", "p_value", "reject", "ess", "tss", "sigma2", "iterations"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.0
            .iter()
            .map(|r| {
                vec![
                    r.kind.label().into(),
                    num(r.beta),
                    num(r.statistic),
                    r.df.to_string(),
                    num(r.p_value),
                    r.reject.to_string(),
                    num(r.ess),
                    num(r.tss),
                    num(r.sigma2),
                    r.iterations.to_string(),
                ]
            })
            .collect()
    }

    fn table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .0
            .iter()
            .map(|r| {
                vec![
                    r.kind.label().into(),
                    format!("{}", r.beta),
                    format!("{:.6}", r.statistic),
                    r.df.to_string(),
                    pval(r.p_value),
                    if r.reject { "*".into() } else { String::new() },
                ]
            })
            .collect();
        align(&["test", "beta", "statistic", "df", "p-value", "reject"], &rows)
    }
}

#[derive(Debug, Serialize)]
struct TestConfig<'a> {
    #[serde(flatten)]
    data: DataConfig<'a>,
    beta: &'a [f64],
    alpha: f64,
}

fn cmd_test(a: &TestArgs, out: &mut dyn Write) -> Result<u8> {
    check_alpha(a.alpha)?;
    if a.beta.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
        return Err(CliError::Config("--beta values must be ≥ 0".into()));
    }
    let (spec, data) = load(&a.data)?;
    let mut rows = Vec::with_capacity(2 * a.beta.len());
    for &beta in &a.beta {
        let fit = fit_null_dpd(&data, beta, &FitOptions::default())?;
        for t in [bp_beta_test(&fit, data.z())?, koenker_beta_test(&fit, data.z())?] {
            rows.push(TestRow {
                kind: t.kind,
                beta,
                statistic: t.statistic,
                df: t.df,
                p_value: t.p_value,
                reject: t.p_value < a.alpha,
                ess: t.ess,
                tss: t.tss,
                denominator: t.denominator,
                sigma2: fit.sigma2,
                iterations: fit.iterations,
                converged: fit.converged,
            });
        }
    }
    rows.sort_by(|x, y| (x.kind.label(), x.beta).partial_cmp(&(y.kind.label(), y.beta)).unwrap());
    let config = TestConfig {
        data: DataConfig::new(&a.data, &spec),
        beta: &a.beta,
        alpha: a.alpha,
    };
    emit(a.format, "test", &config, &TestRows(rows), out)?;
    Ok(EXIT_OK)
}

// ------------------------------------------------------------------ scan

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub beta: f64,
    pub bp_stat: Option<f64>,
    pub bp_p_value: Option<f64>,
    pub koenker_stat: Option<f64>,
    pub koenker_p_value: Option<f64>,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ScanOutput {
    pub alpha: f64,
    pub df: usize,
    pub threshold: f64,
    pub failures: usize,
    pub points: Vec<ScanRow>,
}

/// `beta,bp_stat,koenker_stat,threshold` with `error` cells for failed points.
pub struct PlotData<'a>(pub &'a ScanOutput);

impl Render for PlotData<'_> {
    fn csv_header(&self) -> &'static [&'static str] {
        &["beta", "bp_stat", "koenker_stat", "threshold"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let cell = |v: Option<f64>| v.map_or_else(|| "error".to_owned(), num);
        self.0
            .points
            .iter()
            .map(|p| vec![num(p.beta), cell(p.bp_stat), cell(p.koenker_stat), num(self.0.threshold)])
            .collect()
    }

    fn table(&self) -> String {
        align(self.csv_header(), &self.csv_rows())
    }
}

impl Render for ScanOutput {
    fn csv_header(&self) -> &'static [&'static str] {
        &["beta", "bp_stat", "bp_p_value", "koenker_stat", "koenker_p_value", "threshold", "error"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let cell = |v: Option<f64>| v.map_or_else(String::new, num);
        self.points
            .iter()
            .map(|p| {
                vec![
                    num(p.beta),
                    cell(p.bp_stat),
                    cell(p.bp_p_value),
                    cell(p.koenker_stat),
                    cell(p.koenker_p_value),
                    num(self.threshold),
                    p.error.clone().unwrap_or_default(),
                ]
            })
            .collect()
    }

    fn table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .points
            .iter()
            .map(|p| match &p.error {
                Some(e) => vec![format!("{}", p.beta), "-".into(), "-".into(), "-".into(), "-".into(), e.clone()],
                None => vec![
                    format!("{}", p.beta),
                    format!("{:.6}", p.bp_stat.unwrap_or(f64::NAN)),
                    pval(p.bp_p_value.unwrap_or(f64::NAN)),
                    format!("{:.6}", p.koenker_stat.unwrap_or(f64::NAN)),
                    pval(p.koenker_p_value.unwrap_or(f64::NAN)),
                    String::new(),
                ],
            })
            .collect();
        let mut s = align(&["beta", "BP", "BP p-value", "Koenker", "Koenker p-value", "error"], &rows);
        s.push_str(&format!(
            "threshold χ²({}, {}) = {:.6}\n",
            self.df, self.alpha, self.threshold
        ));
        s
    }
}

#[derive(Debug, Serialize)]
struct ScanConfig<'a> {
    #[serde(flatten)]
    data: DataConfig<'a>,
    beta_grid: &'a [f64],
    alpha: f64,
    cold_start: bool,
}

fn cmd_scan(a: &ScanArgs, out: &mut dyn Write) -> Result<u8> {
    check_alpha(a.alpha)?;
    let grid = parse_grid(&a.beta_grid)?;
    let (spec, data) = load(&a.data)?;
    // the White design is already folded into `data`
    let scan = scan_beta_with(&data, &grid, a.alpha, HeteroDesign::AsGiven, &FitOptions::default(), !a.cold_start)?;
    let points: Vec<ScanRow> = scan
        .points
        .iter()
        .map(|p| ScanRow {
            beta: p.beta,
            bp_stat: p.bp.as_ref().map(|t| t.statistic),
            bp_p_value: p.bp.as_ref().map(|t| t.p_value),
            koenker_stat: p.koenker.as_ref().map(|t| t.statistic),
            koenker_p_value: p.koenker.as_ref().map(|t| t.p_value),
            iterations: p.iterations,
            error: p.error.clone(),
        })
        .collect();
    let report = ScanOutput {
        alpha: scan.alpha,
        df: scan.df,
        threshold: scan.threshold,
        failures: scan.failures(),
        points,
    };
    if let Some(path) = &a.plot_out {
        let mut file = std::fs::File::create(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        write_csv(&PlotData(&report), &mut file)?;
    }
    let config = ScanConfig {
        data: DataConfig::new(&a.data, &spec),
        beta_grid: &grid,
        alpha: a.alpha,
        cold_start: a.cold_start,
    };
    emit(a.format, "scan", &config, &report, out)?;
    Ok(if report.failures > 0 { EXIT_PARTIAL_SCAN } else { EXIT_OK })
}

// ------------------------------------------------------------------ are

#[derive(Debug, Serialize)]
pub struct ArePoint {
    pub beta: f64,
    pub are: f64,
}

#[derive(Debug, Serialize)]
#[serde(transparent)]
struct AreCurve(Vec<ArePoint>);

impl Render for AreCurve {
    fn csv_header(&self) -> &'static [&'static str] {
        &["beta", "are"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.0.iter().map(|p| vec![num(p.beta), num(p.are)]).collect()
    }

    fn table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .0
            .iter()
            .map(|p| vec![format!("{}", p.beta), format!("{:.6}", p.are)])
            .collect();
        align(&["beta", "ARE"], &rows)
    }
}

fn cmd_are(a: &AreArgs, out: &mut dyn Write) -> Result<u8> {
    let grid = parse_grid(&a.beta_grid)?;
    if grid[0] < 0.0 {
        return Err(CliError::Config("ARE needs β ≥ 0".into()));
    }
    let curve = AreCurve(grid.iter().map(|&beta| ArePoint { beta, are: are(beta) }).collect());
    #[derive(Serialize)]
    struct Config<'a> {
        beta_grid: &'a [f64],
    }
    emit(a.format, "are", &Config { beta_grid: &grid }, &curve, out)?;
    Ok(EXIT_OK)
}

// ------------------------------------------------------------------ influence

#[derive(Debug, Serialize)]
pub struct Curve {
    /// 1-based.
    pub obs: usize,
    pub y: Vec<f64>,
    pub if2: Vec<f64>,
    /// `sup_y IF²`; `null` when unbounded.
    pub sup: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct InfluenceOutput {
    pub beta: f64,
    pub sigma2: f64,
    pub coefficients: Vec<f64>,
    /// `null` when unbounded (β = 0).
    pub ges: Option<f64>,
    pub ges_unbounded: bool,
    pub curves: Vec<Curve>,
}

impl Render for InfluenceOutput {
    fn csv_header(&self) -> &'static [&'static str] {
        &["obs", "y", "if2"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.curves
            .iter()
            .flat_map(|c| {
                c.y.iter()
                    .zip(&c.if2)
                    .map(move |(y, v)| vec![c.obs.to_string(), num(*y), num(*v)])
            })
            .collect()
    }

    fn table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .curves
            .iter()
            .map(|c| {
                let (k, peak) = c
                    .if2
                    .iter()
                    .enumerate()
                    .fold((0, f64::MIN), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
                vec![
                    c.obs.to_string(),
                    format!("{:.6}", c.y[k]),
                    format!("{peak:.6e}"),
                    c.sup.map_or_else(|| "unbounded".into(), |s| format!("{s:.6e}")),
                ]
            })
            .collect();
        let mut s = align(&["obs", "argmax y", "max IF² on grid", "sup IF²"], &rows);
        match self.ges {
            Some(g) => s.push_str(&format!("GES = {g:.6e}\n")),
            None => s.push_str("GES unbounded\n"),
        }
        s
    }
}

#[derive(Debug, Serialize)]
struct InfluenceConfig<'a> {
    #[serde(flatten)]
    data: DataConfig<'a>,
    beta: f64,
    obs: &'a [usize],
    y_grid: Option<&'a str>,
}

fn cmd_influence(a: &InfluenceArgs, out: &mut dyn Write) -> Result<u8> {
    if !(a.beta >= 0.0 && a.beta.is_finite()) {
        return Err(CliError::Config("--beta must be ≥ 0".into()));
    }
    let (spec, data) = load(&a.data)?;
    let theta0 = match a.sigma2 {
        Some(sigma2) => {
            if !(sigma2 > 0.0) {
                return Err(CliError::Config("--sigma2 must be positive".into()));
            }
            Theta0 {
                coefficients: a.coef.clone(),
                sigma2,
            }
        }
        None => Theta0::from(&fit_null_dpd(&data, a.beta, &FitOptions::default())?),
    };
    let n = data.n();
    let obs: Vec<usize> = if a.obs.is_empty() { (1..=n).collect() } else { a.obs.clone() };
    if let Some(bad) = obs.iter().find(|i| **i == 0 || **i > n) {
        return Err(CliError::Config(format!("--obs {bad} outside 1..={n}")));
    }
    let fixed_grid = a.y_grid.as_deref().map(parse_grid).transpose()?;
    let report = influence_report(&data, &theta0, a.beta, data.y())?;
    let fitted = data.x().mul_vec(&theta0.coefficients);
    let sd = theta0.sigma2.sqrt();
    let mut curves = Vec::with_capacity(obs.len());
    for &i in &obs {
        let y = fixed_grid
            .clone()
            .unwrap_or_else(|| (-200..=200).map(|k| fitted[i - 1] + sd * k as f64 * 0.04).collect());
        let if2 = if2_curve(&data, &theta0, a.beta, i - 1, &y)?;
        let sup = report.ges_per_observation[i - 1];
        curves.push(Curve {
            obs: i,
            y,
            if2,
            sup: (!report.ges.unbounded).then_some(sup),
        });
    }
    let result = InfluenceOutput {
        beta: a.beta,
        sigma2: theta0.sigma2,
        coefficients: theta0.coefficients.clone(),
        ges: (!report.ges.unbounded).then_some(report.ges.value),
        ges_unbounded: report.ges.unbounded,
        curves,
    };
    let config = InfluenceConfig {
        data: DataConfig::new(&a.data, &spec),
        beta: a.beta,
        obs: &obs,
        y_grid: a.y_grid.as_deref(),
    };
    emit(a.format, "influence", &config, &result, out)?;
    Ok(EXIT_OK)
}

// ------------------------------------------------------------------ power

#[derive(Debug, Serialize)]
pub struct PowerOutput {
    pub beta: f64,
    pub delta: Vec<f64>,
    #[serde(flatten)]
    pub report: PowerReport,
}

impl Render for PowerOutput {
    fn csv_header(&self) -> &'static [&'static str] {
        &[
            "beta",
            "alpha",
            "df",
            "threshold",
            "ncp",
            "power",
            "epsilon",
            "contaminated_ncp",
            "contaminated_power",
            "pif",
        ]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let r = &self.report;
        let opt = |v: Option<f64>| v.map_or_else(String::new, num);
        vec![vec![
            num(self.beta),
            num(r.alpha),
            r.df.to_string(),
            num(r.threshold),
            num(r.ncp),
            num(r.power),
            opt(r.epsilon),
            opt(r.contaminated_ncp),
            opt(r.contaminated_power),
            opt(r.pif),
        ]]
    }

    fn table(&self) -> String {
        let r = &self.report;
        let mut rows = vec![
            vec!["beta".to_owned(), format!("{}", self.beta)],
            vec!["threshold".into(), format!("{:.6}", r.threshold)],
            vec!["ncp".into(), format!("{:.6}", r.ncp)],
            vec!["power".into(), format!("{:.6}", r.power)],
        ];
        if let (Some(e), Some(cn), Some(cp), Some(pif)) =
            (r.epsilon, r.contaminated_ncp, r.contaminated_power, r.pif)
        {
            rows.push(vec!["epsilon".into(), format!("{e}")]);
            rows.push(vec!["contaminated ncp".into(), format!("{cn:.6}")]);
            rows.push(vec!["contaminated power".into(), format!("{cp:.6}")]);
            rows.push(vec!["PIF".into(), format!("{pif:.6e}")]);
        }
        align(&["quantity", "value"], &rows)
    }
}

#[derive(Debug, Serialize)]
struct PowerConfig<'a> {
    #[serde(flatten)]
    data: DataConfig<'a>,
    beta: f64,
    delta: &'a [f64],
    alpha: f64,
    epsilon: Option<f64>,
    contam_offset: f64,
}

fn cmd_power(a: &PowerArgs, out: &mut dyn Write) -> Result<u8> {
    check_alpha(a.alpha)?;
    let (spec, data) = load(&a.data)?;
    let fit = fit_null_dpd(&data, a.beta, &FitOptions::default())?;
    let sandwich = null_sandwich(&data, &fit, 1.0)?;
    let report = match a.epsilon {
        None => pitman_power(&a.delta, &sandwich, a.alpha)?,
        Some(eps) => {
            let sd = fit.sigma2.sqrt();
            let y_contam: Vec<f64> = data
                .x()
                .mul_vec(&fit.coefficients)
                .iter()
                .map(|f| f + a.contam_offset * sd)
                .collect();
            let theta0 = Theta0::from(&fit);
            contaminated_power(&a.delta, eps, &y_contam, &sandwich, &data, &theta0, a.alpha)?
        }
    };
    let config = PowerConfig {
        data: DataConfig::new(&a.data, &spec),
        beta: a.beta,
        delta: &a.delta,
        alpha: a.alpha,
        epsilon: a.epsilon,
        contam_offset: a.contam_offset,
    };
    let result = PowerOutput {
        beta: a.beta,
        delta: a.delta.clone(),
        report,
    };
    emit(a.format, "power", &config, &result, out)?;
    Ok(EXIT_OK)
}

// ------------------------------------------------------------------ simulate

#[derive(Debug, Serialize)]
#[serde(transparent)]
struct SimOutput(SimReport);

impl Render for SimOutput {
    fn csv_header(&self) -> &'static [&'static str] {
        &["beta", "bp_rate", "bp_se", "koenker_rate", "koenker_se", "failed"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.0
            .rates
            .iter()
            .map(|r| {
                vec![
                    num(r.beta),
                    num(r.bp_rate),
                    num(r.bp_se),
                    num(r.koenker_rate),
                    num(r.koenker_se),
                    r.failed.to_string(),
                ]
            })
            .collect()
    }

    fn table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .0
            .rates
            .iter()
            .map(|r| {
                vec![
                    format!("{}", r.beta),
                    format!("{:.4} ± {:.4}", r.bp_rate, r.bp_se),
                    format!("{:.4} ± {:.4}", r.koenker_rate, r.koenker_se),
                    r.failed.to_string(),
                ]
            })
            .collect();
        let s = &self.0.scenario;
        let mut t = format!(
            "n = {}, replications = {}, r = {}, threshold = {:.6}\n",
            s.n, s.replications, self.0.df, self.0.threshold
        );
        t.push_str(&align(&["beta", "BP rejection", "Koenker rejection", "failed"], &rows));
        t
    }
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<u8> {
    let text = std::fs::read_to_string(&a.scenario).map_err(|source| CliError::Io {
        path: a.scenario.clone(),
        source,
    })?;
    let mut scenario: SimScenario = text.parse()?;
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    if let Some(reps) = a.replications {
        scenario.replications = reps;
    }
    scenario.validate()?;
    let report = run_scenario(&scenario)?;
    #[derive(Serialize)]
    struct Config<'a> {
        scenario: String,
        seed: Option<u64>,
        replications: Option<usize>,
        #[serde(skip)]
        _p: std::marker::PhantomData<&'a ()>,
    }
    let config = Config {
        scenario: a.scenario.display().to_string(),
        seed: a.seed,
        replications: a.replications,
        _p: std::marker::PhantomData,
    };
    emit(a.format, "simulate", &config, &SimOutput(report), out)?;
    Ok(EXIT_OK)
}
