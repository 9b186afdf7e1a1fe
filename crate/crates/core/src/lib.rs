//! Robust β-score Lagrange-multiplier tests for heteroscedasticity in the
//! Gaussian linear model.
//!
//! The null fit is the restricted minimum density-power-divergence estimate
//! ([`fit_null_dpd`]); [`bp_beta_test`] and [`koenker_beta_test`] turn its
//! transformed residual vector into χ² statistics. `β = 0` gives the
//! classical Breusch–Pagan and Koenker tests.

pub mod error;
pub mod estimation;
pub mod lmtest;
pub mod mc;
pub mod model;
pub mod numerics;
pub mod robustness;

pub use error::{Error, Result};
pub use estimation::{
    fit_null_dpd, fit_null_dpd_from, ols, sigma2_equation, sigma2_equation_derivative,
    solve_sigma2, v_vector, DpdFit, FitOptions,
};
pub use lmtest::{
    bp_beta_test, bp_denominator, default_grid, koenker_beta_test, scan_beta, scan_beta_with, BetaScan,
    HeteroDesign, ScanPoint, TestKind, TestResult, DEFAULT_ALPHA,
};
pub use model::{
    build_white_design, check_design_conditions, scedastic_variance, DesignDiagnostics,
    RegressionData, Scedastic, ScedasticKind,
};
pub use mc::{run_scenario, SimReport, SimScenario};
pub use numerics::Matrix;
pub use robustness::{
    are, contaminated_power, ges_simple_linear, if2_per_observation, influence_report,
    null_sandwich, pitman_power, Ges, InfluenceReport, NullSandwich, PowerReport, Theta0,
};
