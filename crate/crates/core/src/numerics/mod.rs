//! Numerical kernels shared by the estimators and detectors.

pub mod chi2;
pub mod fft;
pub mod linalg;
pub mod matrix;
pub mod rng;
pub mod stats;

pub use chi2::{chi2_cdf, chi2_pdf, chi2_quantile, chi2_sf};
pub use fft::{fft, ifft};
pub use linalg::{cholesky, cholesky_toeplitz_rho, solve_linear, svd, SvdResult};
pub use matrix::ComplexMatrix;
