//! Two-sample testing of symmetric positive definite matrix distributions.
//!
//! A distribution on the SPD cone is characterized up to orthogonal
//! equivalence by its orthogonally invariant Hankel transform, the
//! expectation of a two-matrix-argument Bessel function over the sample.
//! This crate implements the machinery end to end:
//!
//! - [`specfun`]: partitions, zonal polynomials, matrix-argument `0F1`
//!   series and Bessel functions;
//! - [`kernel`]: empirical transforms, the closed-form pair kernel and the
//!   integrated-squared-difference statistic;
//! - [`sampling`]: Wishart / inverse-Wishart / covariance-of-vectors
//!   generators and Haar-orthogonal draws;
//! - [`resampling`]: pooled-bootstrap p-values and warp-speed bootstrap
//!   power estimation;
//! - [`powerstudy`]: scenario harness emitting power tables;
//! - [`marketdata`]: close-price ingestion, log-returns, per-block
//!   covariance matrices and the change test between block groups.

pub mod error;
pub mod kernel;
pub mod marketdata;
pub mod powerstudy;
pub mod resampling;
pub mod sampling;
pub mod specfun;
pub mod spectral;

pub use error::{Error, Result};
pub use specfun::{Partition, SeriesControl, SeriesValue};
pub use spectral::SpectralMatrix;
