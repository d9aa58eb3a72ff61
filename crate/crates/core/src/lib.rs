//! Multi-antenna cyclostationary spectrum sensing.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: small dense complex linear algebra, χ² distribution
//!   functions, FFT and the seed contract used by every random draw.
//! - [`sigmodel`]: BPSK signal generation and its cyclic-frequency catalog.
//! - [`channel`]: quasi-static Rayleigh fading, spatially correlated noise
//!   and received-frame composition.
//! - [`cyclostat`]: lagged covariance, cyclic covariance and MSDF estimators.
//! - [`detectors`]: the eigenvalue-based EV-CSS detector and the SUM-MSDF,
//!   EGC-MSDF and BMRC-MSDF baselines.
//! - [`harness`]: Monte Carlo experiments, CSV output and the CLI.

pub mod channel;
pub mod cyclostat;
pub mod detectors;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod sigmodel;

pub use error::{Error, Result};
pub use num_complex::Complex64;
