//! Monte Carlo engine: ARL estimation, amplitude calibration, scenario grids,
//! efficiency summaries and the phase-1 variance-estimator bias study.

mod arl;
mod bias;
mod calibrate;
mod grid;

pub use arl::{
    estimate_arl, estimate_arl_by_runs, geometric_run_lengths, srs_arl_analytic, ArlEstimate,
    RunLengthSummary, Scenario,
};
pub use bias::{bias_study, BiasRow};
pub use calibrate::{calibrate_amplitude, calibrate_with_sigma, CalibrationResult, AmplitudePool};
pub use grid::{
    efficiency_summary, run_grid, AmplitudeRule, EfficiencyRow, GridCell, GridOutput, GridRow,
    GridSpec,
};

/// In-control mean of the standardized process.
pub const MU0: f64 = 0.0;
/// In-control standard deviation of the standardized process.
pub const SIGMA0: f64 = 1.0;
/// ARL₀ of an SRS chart with 3-sigma limits, rounded as used for calibration.
pub const TARGET_ARL0: f64 = 370.5;
/// Replications per cell used for the published tables.
pub const DEFAULT_REPLICATIONS: u64 = 1_000_000;
