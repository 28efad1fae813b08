//! Time-varying correlation networks for non-stationary multivariate time
//! series with mean jumps.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`panel`]: load a panel, take lag-`h` differences so that smooth trends
//!    and level shifts cancel.
//! 2. [`estimator`]: local-linear estimates of the covariance and correlation
//!    functions, innovation estimates and the long-run variance.
//! 3. [`bootstrap`]: block sums, Gaussian-multiplier sup statistics and
//!    time-varying P-values.
//! 4. [`inference`]: Benjamini-Hochberg / Benjamini-Yekutieli step-up at every
//!    time point, network snapshots and FDP/FNP evaluation.
//! 5. [`tuning`]: GCV bandwidths and minimum-volatility selection of the
//!    remaining smoothing parameters.
//!
//! [`pipeline`] wires the stages together and [`simlab`] holds the simulation
//! designs and experiment drivers.
//!
//! Indexing: time points are stored 0-based. Internal grid index `g`
//! corresponds to time `t = (g + 1) / n`.

pub mod bootstrap;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod kernel;
pub mod pairs;
pub mod panel;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod simlab;
pub mod tuning;

pub use error::{Error, Result};
