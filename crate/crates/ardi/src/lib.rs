//! Diffusion-index macroeconomic forecasting with kernel-PCA factors.
//!
//! The crate covers the full pipeline: FRED-MD-style panel ingestion and
//! stationarity transforms, Gram-matrix assembly and centering, factor
//! extraction (PCA, SPC, kernel factors), direct h-step ARDI regressions
//! with BIC selection, a rolling pseudo-out-of-sample evaluation harness
//! with Diebold-Mariano comparisons, and Monte Carlo consistency checks
//! for the factor estimators.

pub mod config;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod factors;
pub mod forecast;
pub mod kernels;
pub mod linalg;
pub mod montecarlo;
pub mod run;

pub use error::{Error, Result};
