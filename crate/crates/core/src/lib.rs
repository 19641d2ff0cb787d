//! Ranked-set sampling designs and Shewhart-type control charts for the
//! process mean.
//!
//! The crate covers five sampling designs (SRS, RSS, MRSS, ERSS and NRSS),
//! exact order-statistic moments of the normal distribution, control limits
//! from known or phase-1 estimated parameters, and a deterministic Monte
//! Carlo engine for average run length (ARL) studies.
//!
//! ```
//! use rankset_core::designs::nrss_positions;
//!
//! assert_eq!(nrss_positions(4).unwrap(), vec![3, 6, 11, 14]);
//! ```

pub mod charts;
pub mod data;
pub mod designs;
mod error;
pub mod moments;
pub mod normal;
pub mod output;
pub mod quadrature;
pub mod rng;
pub mod simulation;
pub mod workflow;

pub use charts::{ChartLimits, Phase1Estimate, Provenance, RunLength};
pub use designs::{DesignKind, ProcessModel, RankedSample, Ranking};
pub use error::{Error, Result};
pub use moments::{EstimatorVariance, MomentSource, MomentTable};
pub use simulation::{ArlEstimate, CalibrationResult, Scenario};
pub use data::Dataset;
pub use workflow::{ChartReport, WorkflowConfig};
