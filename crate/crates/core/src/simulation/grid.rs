use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::charts::{limits_known, ChartLimits, Provenance};
use crate::designs::{DesignKind, Ranking};
use crate::error::{Error, Result};
use crate::moments::{analytic_moment_table, estimator_variance, mc_moment_table, MomentCache};
use crate::rng::{derive_seed, par_map};

use super::arl::{estimate_arl, ArlEstimate, Scenario};
use super::calibrate::{calibrate_with_sigma, CalibrationResult};
use super::{DEFAULT_REPLICATIONS, TARGET_ARL0};

// Third seed coordinate for per-group streams; cells use the delta index.
const CALIBRATION_TAG: u64 = u64::MAX;
const MOMENTS_TAG: u64 = u64::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum AmplitudeRule {
    /// Calibrate per (design, k, rho) so that ARL₀ hits the target.
    Calibrated { target_arl0: f64, replications: u64 },
    Fixed { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub designs: Vec<DesignKind>,
    pub ks: Vec<usize>,
    pub deltas: Vec<f64>,
    /// `None` for perfect ranking; otherwise concomitant ranking at each
    /// correlation.
    pub rhos: Option<Vec<f64>>,
    pub amplitude: AmplitudeRule,
    pub replications: u64,
    /// Replications of the Monte Carlo moment tables (concomitant ranking).
    pub moment_replications: u64,
    pub base_seed: u64,
}

impl GridSpec {
    /// Perfect ranking with amplitudes calibrated to ARL₀ = 370.5.
    pub fn perfect(designs: Vec<DesignKind>, ks: Vec<usize>, deltas: Vec<f64>, replications: u64, base_seed: u64) -> Self {
        Self {
            designs,
            ks,
            deltas,
            rhos: None,
            amplitude: AmplitudeRule::Calibrated {
                target_arl0: TARGET_ARL0,
                replications,
            },
            replications,
            moment_replications: DEFAULT_REPLICATIONS,
            base_seed,
        }
    }

    /// Concomitant ranking with fixed 3-sigma limits.
    pub fn imperfect(
        designs: Vec<DesignKind>,
        ks: Vec<usize>,
        deltas: Vec<f64>,
        rhos: Vec<f64>,
        replications: u64,
        base_seed: u64,
    ) -> Self {
        Self {
            designs,
            ks,
            deltas,
            rhos: Some(rhos),
            amplitude: AmplitudeRule::Fixed { amplitude: 3.0 },
            replications,
            moment_replications: DEFAULT_REPLICATIONS,
            base_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.designs.is_empty() || self.ks.is_empty() || self.deltas.is_empty() {
            return Err(Error::invalid("grid axes must be non-empty"));
        }
        if let Some(r) = &self.rhos {
            if r.is_empty() {
                return Err(Error::invalid("rho grid must be non-empty"));
            }
        }
        Ok(())
    }

    fn ranking(&self) -> Ranking {
        if self.rhos.is_some() {
            Ranking::Imperfect
        } else {
            Ranking::Perfect
        }
    }

    fn rho_axis(&self) -> Vec<f64> {
        self.rhos.clone().unwrap_or_else(|| vec![1.0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum CellOutcome {
    Estimate(ArlEstimate),
    Censored { replications: u64, lower_bound: f64 },
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub design: DesignKind,
    pub k: usize,
    pub delta: f64,
    pub delta_index: usize,
    pub rho: f64,
    pub rho_index: usize,
    pub amplitude: f64,
    pub replications: u64,
    pub seed: u64,
    pub outcome: CellOutcome,
}

impl GridCell {
    pub fn estimate(&self) -> Option<&ArlEstimate> {
        match &self.outcome {
            CellOutcome::Estimate(e) => Some(e),
            _ => None,
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self.outcome, CellOutcome::Failed { .. })
    }

    pub fn row(&self) -> GridRow {
        let (exceedances, arl, se_arl) = match &self.outcome {
            CellOutcome::Estimate(e) => (e.exceedances, e.arl, e.se_arl),
            CellOutcome::Censored { lower_bound, .. } => (0, *lower_bound, f64::NAN),
            CellOutcome::Failed { .. } => (0, f64::NAN, f64::NAN),
        };
        GridRow {
            design: self.design,
            k: self.k,
            delta: self.delta,
            rho: self.rho,
            amplitude: self.amplitude,
            replications: self.replications,
            exceedances,
            arl,
            se_arl,
            seed: self.seed,
        }
    }
}

/// One line of the grid CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub design: DesignKind,
    pub k: usize,
    pub delta: f64,
    pub rho: f64,
    pub amplitude: f64,
    pub replications: u64,
    /// Zero marks a censored (or failed) cell; `arl` then holds `N/3`.
    pub exceedances: u64,
    pub arl: f64,
    pub se_arl: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutput {
    pub spec: GridSpec,
    pub limits: Vec<ChartLimits>,
    pub calibrations: Vec<CalibrationResult>,
    pub cells: Vec<GridCell>,
}

impl GridOutput {
    pub fn rows(&self) -> Vec<GridRow> {
        self.cells.iter().map(GridCell::row).collect()
    }

    pub fn failed(&self) -> impl Iterator<Item = &GridCell> {
        self.cells.iter().filter(|c| c.is_failed())
    }

    pub fn cell(&self, design: DesignKind, k: usize, delta: f64, rho: f64) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.design == design && c.k == k && c.delta == delta && c.rho == rho)
    }
}

struct Group {
    design: DesignKind,
    k: usize,
    rho: f64,
    rho_index: usize,
    setup: std::result::Result<(ChartLimits, Option<CalibrationResult>), String>,
}

fn group_limits(
    spec: &GridSpec,
    design: DesignKind,
    k: usize,
    rho: f64,
    rho_index: usize,
    cache: Option<&MomentCache>,
) -> Result<(ChartLimits, Option<CalibrationResult>)> {
    let ranking = spec.ranking();
    let group_seed = |tag| derive_seed(spec.base_seed, &[design.code(), k as u64, tag, rho_index as u64]);
    let (var, provenance) = match ranking {
        Ranking::Perfect => (
            estimator_variance(&analytic_moment_table(design, k)?).value,
            Provenance::Analytic,
        ),
        Ranking::Imperfect if design == DesignKind::Srs => (1.0 / k as f64, Provenance::Analytic),
        Ranking::Imperfect => {
            let seed = group_seed(MOMENTS_TAG);
            let table = match cache {
                Some(c) => c.load_or_compute(design, k, rho, spec.moment_replications, seed)?,
                None => mc_moment_table(design, k, rho, spec.moment_replications, seed)?,
            };
            (estimator_variance(&table).value, Provenance::SimulatedMoments)
        }
    };
    let (amplitude, calibration) = match spec.amplitude {
        AmplitudeRule::Fixed { amplitude } => (amplitude, None),
        AmplitudeRule::Calibrated {
            target_arl0,
            replications,
        } => {
            let c = calibrate_with_sigma(
                design,
                k,
                ranking,
                rho,
                var.sqrt(),
                target_arl0,
                replications,
                group_seed(CALIBRATION_TAG),
            )?;
            (c.amplitude, Some(c))
        }
    };
    let limits = limits_known(super::MU0, var, amplitude)?
        .for_design(design, k, rho)
        .with_provenance(provenance);
    Ok((limits, calibration))
}

/// Runs every (design, k, rho, delta) cell of the grid.
///
/// Cell seeds are `derive_seed(base_seed, [design, k, delta_index,
/// rho_index])`. A failing cell is recorded and does not abort the grid.
pub fn run_grid(spec: &GridSpec, cache: Option<&MomentCache>) -> Result<GridOutput> {
    spec.validate()?;
    let ranking = spec.ranking();
    let rhos = spec.rho_axis();
    let keys: Vec<(DesignKind, usize, usize, f64)> = spec
        .designs
        .iter()
        .flat_map(|&d| {
            let rhos = rhos.clone();
            spec.ks
                .iter()
                .flat_map(move |&k| rhos.clone().into_iter().enumerate().map(move |(ri, r)| (d, k, ri, r)))
        })
        .collect();
    let groups: Vec<Group> = par_map(&keys, |&(design, k, rho_index, rho)| Group {
        design,
        k,
        rho,
        rho_index,
        setup: group_limits(spec, design, k, rho, rho_index, cache).map_err(|e| e.to_string()),
    });

    let work: Vec<(usize, usize)> = (0..groups.len())
        .flat_map(|g| (0..spec.deltas.len()).map(move |d| (g, d)))
        .collect();
    let cells = par_map(&work, |&(g, di)| {
        let group = &groups[g];
        let delta = spec.deltas[di];
        let seed = derive_seed(
            spec.base_seed,
            &[group.design.code(), group.k as u64, di as u64, group.rho_index as u64],
        );
        let (amplitude, outcome) = match &group.setup {
            Err(message) => (f64::NAN, CellOutcome::Failed { message: message.clone() }),
            Ok((limits, _)) => {
                let scenario = Scenario {
                    design: group.design,
                    k: group.k,
                    delta,
                    rho: group.rho,
                    ranking,
                    amplitude: limits.amplitude,
                    replications: spec.replications,
                    seed,
                };
                let outcome = match estimate_arl(&scenario, limits) {
                    Ok(e) => CellOutcome::Estimate(e),
                    Err(Error::Censored {
                        replications,
                        lower_bound,
                    }) => CellOutcome::Censored {
                        replications,
                        lower_bound,
                    },
                    Err(e) => CellOutcome::Failed { message: e.to_string() },
                };
                (limits.amplitude, outcome)
            }
        };
        GridCell {
            design: group.design,
            k: group.k,
            delta,
            delta_index: di,
            rho: group.rho,
            rho_index: group.rho_index,
            amplitude,
            replications: spec.replications,
            seed,
            outcome,
        }
    });
    for c in cells.iter().filter(|c| c.is_failed()) {
        log::warn!("cell {} k={} delta={} rho={} failed: {:?}", c.design, c.k, c.delta, c.rho, c.outcome);
    }

    let mut limits = Vec::new();
    let mut calibrations = Vec::new();
    for g in groups {
        if let Ok((l, c)) = g.setup {
            limits.push(l);
            calibrations.extend(c);
        }
    }
    Ok(GridOutput {
        spec: spec.clone(),
        limits,
        calibrations,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub design: DesignKind,
    pub k: usize,
    pub rho: f64,
    /// Geometric mean over δ ≠ 0 of `ARL_SRS / ARL_design`.
    pub ratio: f64,
    pub cells: usize,
}

/// Geometric-mean SRS/design ARL ratios per (design, k, rho).
///
/// SRS baselines are matched on (k, delta) and, when present, on rho; SRS
/// ignores the ranking so any SRS row at the same (k, delta) serves otherwise.
pub fn efficiency_summary(rows: &[GridRow]) -> Result<Vec<EfficiencyRow>> {
    let baseline = |k: usize, delta: f64, rho: f64| {
        rows.iter()
            .filter(|r| r.design == DesignKind::Srs && r.k == k && r.delta == delta && r.exceedances > 0)
            .min_by(|a, b| (a.rho - rho).abs().total_cmp(&(b.rho - rho).abs()))
    };
    // Keyed by (design, k, rho bits) to keep a stable order.
    let mut groups: BTreeMap<(DesignKind, usize, u64), Vec<&GridRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.delta != 0.0) {
        groups.entry((r.design, r.k, r.rho.to_bits())).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((design, k, rho_bits), cells) in groups {
        let rho = f64::from_bits(rho_bits);
        let mut log_sum = 0.0;
        for c in &cells {
            if c.exceedances == 0 {
                return Err(Error::MissingCells(format!(
                    "{design} k={k} delta={} rho={rho} has no estimate",
                    c.delta
                )));
            }
            let base = baseline(k, c.delta, rho).ok_or_else(|| {
                Error::MissingCells(format!("no SRS baseline for k={k} delta={}", c.delta))
            })?;
            log_sum += (base.arl / c.arl).ln();
        }
        out.push(EfficiencyRow {
            design,
            k,
            rho,
            ratio: (log_sum / cells.len() as f64).exp(),
            cells: cells.len(),
        });
    }
    if out.is_empty() {
        return Err(Error::MissingCells("no cells with delta != 0".into()));
    }
    Ok(out)
}
