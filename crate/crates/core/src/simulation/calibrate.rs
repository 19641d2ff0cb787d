use serde::{Deserialize, Serialize};

use crate::designs::{DesignKind, ProcessModel, Ranking, Sampler};
use crate::error::{Error, Result};
use crate::moments::{analytic_moment_table, estimator_variance, mc_moment_table};
use crate::rng::{block_stream, derive_seed, map_blocks, BLOCK_SIZE};

use super::{MU0, SIGMA0};

const INITIAL_BRACKET: (f64, f64) = (2.5, 3.5);
const MAX_ITERATIONS: u32 = 40;
const BRACKET_WIDTH: f64 = 1e-7;
/// Declared relative tolerance on the achieved ARL₀.
pub const ARL0_TOLERANCE: f64 = 0.01;
const MIN_EXPECTED_EXCEEDANCES: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub design: DesignKind,
    pub k: usize,
    pub rho: f64,
    pub amplitude: f64,
    /// ARL₀ of the pool at `amplitude`.
    pub achieved_arl0: f64,
    pub target: f64,
    pub iterations: u32,
    pub bracket: (f64, f64),
    pub replications: u64,
    pub exceedances: u64,
    /// Standard deviation used to standardize the sample means.
    pub sigma_mean: f64,
    pub seed: u64,
}

/// Sorted in-control `|mean - mu0| / sigma_mean` values; each candidate
/// amplitude is a threshold lookup.
#[derive(Debug, Clone)]
pub struct AmplitudePool {
    sorted: Vec<f64>,
}

impl AmplitudePool {
    pub fn simulate(
        design: DesignKind,
        k: usize,
        ranking: Ranking,
        rho: f64,
        sigma_mean: f64,
        replications: u64,
        seed: u64,
    ) -> Result<Self> {
        let model = ProcessModel::new(MU0, SIGMA0, rho)?;
        let template = Sampler::new(design, k, model, ranking)?;
        let parts = map_blocks(replications, BLOCK_SIZE, |b, len| {
            let mut sampler = template.clone();
            let mut rng = block_stream(seed, b);
            let mut buf = vec![0.0; k];
            (0..len)
                .map(|_| ((sampler.draw_mean(&mut rng, &mut buf) - MU0) / sigma_mean).abs())
                .collect::<Vec<f64>>()
        });
        let mut sorted: Vec<f64> = parts.into_iter().flatten().collect();
        sorted.sort_unstable_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> u64 {
        self.sorted.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Number of pool points strictly beyond `amplitude`.
    pub fn exceedances(&self, amplitude: f64) -> u64 {
        (self.sorted.len() - self.sorted.partition_point(|&v| v <= amplitude)) as u64
    }

    pub fn arl(&self, amplitude: f64) -> f64 {
        match self.exceedances(amplitude) {
            0 => f64::INFINITY,
            c => self.len() as f64 / c as f64,
        }
    }

    /// Bisection on the amplitude so that the pool ARL₀ crosses `target`.
    pub fn solve(&self, target: f64) -> Result<(f64, u32, (f64, f64))> {
        let (mut lo, mut hi) = INITIAL_BRACKET;
        let mut widen = 0;
        while self.arl(lo) >= target {
            lo *= 0.5;
            widen += 1;
            if widen > 60 {
                return Err(Error::BracketFailure(format!("no lower bracket for target {target}")));
            }
        }
        while self.arl(hi) < target {
            hi *= 2.0;
            widen += 1;
            if widen > 120 {
                return Err(Error::BracketFailure(format!("no upper bracket for target {target}")));
            }
        }
        let mut iterations = 0;
        while iterations < MAX_ITERATIONS && hi - lo > BRACKET_WIDTH {
            let mid = 0.5 * (lo + hi);
            if self.arl(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            iterations += 1;
        }
        Ok((0.5 * (lo + hi), iterations, (lo, hi)))
    }
}

/// Calibrates the amplitude against a pool of in-control means standardized by
/// a given `sigma_mean`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_with_sigma(
    design: DesignKind,
    k: usize,
    ranking: Ranking,
    rho: f64,
    sigma_mean: f64,
    target_arl0: f64,
    replications: u64,
    seed: u64,
) -> Result<CalibrationResult> {
    if !(target_arl0 > 1.0) {
        return Err(Error::invalid(format!("target ARL0 must exceed 1, got {target_arl0}")));
    }
    if (replications as f64) / target_arl0 < MIN_EXPECTED_EXCEEDANCES {
        return Err(Error::BudgetTooSmall(format!(
            "{replications} replications give {:.1} expected exceedances at ARL0 {target_arl0}; need {MIN_EXPECTED_EXCEEDANCES}",
            replications as f64 / target_arl0
        )));
    }
    let pool = AmplitudePool::simulate(design, k, ranking, rho, sigma_mean, replications, seed)?;
    let (amplitude, iterations, bracket) = pool.solve(target_arl0)?;
    let achieved_arl0 = pool.arl(amplitude);
    if ((achieved_arl0 - target_arl0) / target_arl0).abs() > ARL0_TOLERANCE {
        return Err(Error::BracketFailure(format!(
            "achieved ARL0 {achieved_arl0} outside ±{ARL0_TOLERANCE} of {target_arl0}"
        )));
    }
    Ok(CalibrationResult {
        design,
        k,
        rho: if ranking == Ranking::Perfect { 1.0 } else { rho },
        amplitude,
        achieved_arl0,
        target: target_arl0,
        iterations,
        bracket,
        replications,
        exceedances: pool.exceedances(amplitude),
        sigma_mean,
        seed,
    })
}

/// Amplitude whose in-control ARL equals `target_arl0`.
///
/// The sample means are standardized by the exact standard deviation of the
/// design mean under perfect ranking, or by a Monte Carlo moment table under
/// concomitant ranking.
pub fn calibrate_amplitude(
    design: DesignKind,
    k: usize,
    ranking: Ranking,
    rho: f64,
    target_arl0: f64,
    replications: u64,
    seed: u64,
) -> Result<CalibrationResult> {
    let var = match ranking {
        Ranking::Perfect => estimator_variance(&analytic_moment_table(design, k)?).value,
        Ranking::Imperfect if design == DesignKind::Srs => 1.0 / k as f64,
        Ranking::Imperfect => {
            let reps = replications.clamp(crate::moments::MIN_MC_REPLICATIONS, super::DEFAULT_REPLICATIONS);
            estimator_variance(&mc_moment_table(design, k, rho, reps, derive_seed(seed, &[u64::MAX]))?).value
        }
    };
    let rho = if ranking == Ranking::Perfect { 1.0 } else { rho };
    calibrate_with_sigma(design, k, ranking, rho, var.sqrt(), target_arl0, replications, seed)
}
