//! Linear algebra and special functions.

pub mod linalg;
pub mod special;

pub use linalg::{
    cholesky_solve, dot, projection_quadratic_form, symmetric_eigenvalues, Cholesky, Matrix,
    ProjectionSums,
};
pub use special::{
    chi_square_cdf, chi_square_quantile, chi_square_sf, gamma_p, gamma_q, ln_gamma,
    noncentral_chi_square_sf, noncentral_chi_square_sf_partial, noncentral_chi_square_sf_tol,
};
