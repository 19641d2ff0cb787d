use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::charts::{run_length_with_horizon, ChartLimits};
use crate::designs::{DesignKind, ProcessModel, Ranking, Sampler};
use crate::error::{Error, Result};
use crate::normal;
use crate::rng::{block_stream, map_blocks, stream, BLOCK_SIZE};

use super::{MU0, SIGMA0};

/// Minimum replications per simulated cell.
pub const MIN_REPLICATIONS: u64 = 1_000;

/// One simulation cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub design: DesignKind,
    pub k: usize,
    /// Mean shift in units of `sigma0 / sqrt(k)`.
    pub delta: f64,
    pub rho: f64,
    pub ranking: Ranking,
    pub amplitude: f64,
    pub replications: u64,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) {
            return Err(Error::invalid(format!("delta must be >= 0, got {}", self.delta)));
        }
        if self.replications < MIN_REPLICATIONS {
            return Err(Error::invalid(format!(
                "at least {MIN_REPLICATIONS} replications required, got {}",
                self.replications
            )));
        }
        if self.k < 2 {
            return Err(Error::invalid(format!("k must be >= 2, got {}", self.k)));
        }
        self.model().map(|_| ())
    }

    /// Correlation as reported: perfect ranking counts as `rho = 1`.
    pub fn reported_rho(&self) -> f64 {
        match self.ranking {
            Ranking::Perfect => 1.0,
            Ranking::Imperfect => self.rho,
        }
    }

    /// Process model after the shift.
    pub fn model(&self) -> Result<ProcessModel> {
        ProcessModel::shifted(MU0, SIGMA0, self.delta, self.k, self.reported_rho())
    }

    fn sampler(&self) -> Result<Sampler> {
        Sampler::new(self.design, self.k, self.model()?, self.ranking)
    }

    fn check_limits(&self, limits: &ChartLimits) -> Result<()> {
        if let Some(d) = limits.design {
            if d != self.design {
                return Err(Error::LimitsMismatch(format!(
                    "limits for {d}, scenario is {}",
                    self.design
                )));
            }
        }
        if let Some(k) = limits.k {
            if k != self.k {
                return Err(Error::LimitsMismatch(format!("limits for k={k}, scenario k={}", self.k)));
            }
        }
        if let Some(rho) = limits.rho {
            if (rho - self.reported_rho()).abs() > 1e-12 {
                return Err(Error::LimitsMismatch(format!(
                    "limits for rho={rho}, scenario rho={}",
                    self.reported_rho()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArlEstimate {
    /// `replications / exceedances`.
    pub arl: f64,
    pub exceedances: u64,
    pub replications: u64,
    /// Delta-method standard error `arl² sqrt(p (1 - p) / N)`.
    pub se_arl: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub scenario: Scenario,
}

impl ArlEstimate {
    pub fn from_counts(scenario: Scenario, exceedances: u64, replications: u64) -> Result<Self> {
        if exceedances == 0 {
            return Err(Error::Censored {
                replications,
                lower_bound: replications as f64 / 3.0,
            });
        }
        let n = replications as f64;
        let p = exceedances as f64 / n;
        let arl = 1.0 / p;
        let se_arl = arl * arl * (p * (1.0 - p) / n).sqrt();
        Ok(Self {
            arl,
            exceedances,
            replications,
            se_arl,
            ci_low: (arl - 1.96 * se_arl).max(1.0),
            ci_high: arl + 1.96 * se_arl,
            scenario,
        })
    }

    pub fn exceedance_probability(&self) -> f64 {
        self.exceedances as f64 / self.replications as f64
    }
}

/// ARL as the reciprocal of the simulated per-sample exceedance proportion.
pub fn estimate_arl(scenario: &Scenario, limits: &ChartLimits) -> Result<ArlEstimate> {
    scenario.validate()?;
    scenario.check_limits(limits)?;
    let template = scenario.sampler()?;
    let k = scenario.k;
    let counts = map_blocks(scenario.replications, BLOCK_SIZE, |b, len| {
        let mut sampler = template.clone();
        let mut rng = block_stream(scenario.seed, b);
        let mut buf = vec![0.0; k];
        let mut hits = 0u64;
        for _ in 0..len {
            if limits.is_outside(sampler.draw_mean(&mut rng, &mut buf)) {
                hits += 1;
            }
        }
        hits
    });
    ArlEstimate::from_counts(*scenario, counts.iter().sum(), scenario.replications)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunLengthSummary {
    pub mean: f64,
    pub se: f64,
    pub runs: u64,
    pub censored: u64,
}

/// ARL as the average of explicitly simulated run lengths.
///
/// Each run follows a fresh stream of sample means until the first point
/// outside the limits (or `horizon` points, which censors the run).
pub fn estimate_arl_by_runs(
    scenario: &Scenario,
    limits: &ChartLimits,
    runs: u64,
    horizon: u64,
) -> Result<(RunLengthSummary, Vec<u64>)> {
    scenario.validate()?;
    scenario.check_limits(limits)?;
    if runs < 2 {
        return Err(Error::invalid("at least two runs required"));
    }
    let template = scenario.sampler()?;
    let k = scenario.k;
    let blocks = map_blocks(runs, 256, |b, len| {
        let mut sampler = template.clone();
        let mut rng = block_stream(scenario.seed, b);
        let mut buf = vec![0.0; k];
        (0..len)
            .map(|_| {
                let points = std::iter::repeat_with(|| sampler.draw_mean(&mut rng, &mut buf));
                run_length_with_horizon(limits, points, horizon)
            })
            .collect::<Vec<_>>()
    });
    let all: Vec<_> = blocks.into_iter().flatten().collect();
    let n = all.len() as f64;
    let lengths: Vec<u64> = all.iter().map(|r| r.length).collect();
    let mean = lengths.iter().map(|&l| l as f64).sum::<f64>() / n;
    let var = lengths
        .iter()
        .map(|&l| (l as f64 - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    Ok((
        RunLengthSummary {
            mean,
            se: (var / n).sqrt(),
            runs,
            censored: all.iter().filter(|r| r.censored).count() as u64,
        },
        lengths,
    ))
}

/// Run lengths drawn directly from the geometric law implied by a per-point
/// exceedance probability `p` (valid for fixed limits and iid points).
pub fn geometric_run_lengths(p: f64, count: usize, seed: u64) -> Result<Vec<u64>> {
    let dist = Geometric::new(p).map_err(|e| Error::invalid(format!("geometric p={p}: {e}")))?;
    let mut rng = stream(seed);
    Ok((0..count)
        .map(|_| dist.sample(&mut rng).saturating_add(1))
        .collect())
}

/// Exact ARL of the SRS chart: `1 / (Φ(δ − A) + Φ(−δ − A))`.
pub fn srs_arl_analytic(delta: f64, amplitude: f64) -> f64 {
    1.0 / (normal::cdf(delta - amplitude) + normal::cdf(-delta - amplitude))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::{limits_known, DEFAULT_HORIZON};

    fn srs_scenario(delta: f64, replications: u64, seed: u64) -> Scenario {
        Scenario {
            design: DesignKind::Srs,
            k: 4,
            delta,
            rho: 1.0,
            ranking: Ranking::Perfect,
            amplitude: 3.0,
            replications,
            seed,
        }
    }

    #[test]
    fn analytic_srs_values() {
        assert!((srs_arl_analytic(0.0, 3.0) - 370.398).abs() < 1e-3);
        assert!((srs_arl_analytic(1.2, 3.0) - 27.82).abs() < 5e-3);
        assert!((srs_arl_analytic(0.8, 3.0) - 71.55).abs() < 5e-3);
        assert!((srs_arl_analytic(50.0, 3.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn srs_monte_carlo_matches_analytic() {
        let limits = limits_known(0.0, 0.25, 3.0).unwrap().for_design(DesignKind::Srs, 4, 1.0);
        for (i, delta) in [0.0, 0.8, 2.0].into_iter().enumerate() {
            let est = estimate_arl(&srs_scenario(delta, 400_000, i as u64), &limits).unwrap();
            let exact = srs_arl_analytic(delta, 3.0);
            assert!(
                (est.arl - exact).abs() < 4.0 * est.se_arl,
                "delta {delta}: {} vs {exact} (se {})",
                est.arl,
                est.se_arl
            );
        }
    }

    #[test]
    fn zero_exceedances_are_censored() {
        let limits = limits_known(0.0, 0.25, 20.0).unwrap();
        match estimate_arl(&srs_scenario(0.0, 3_000, 1), &limits) {
            Err(Error::Censored { lower_bound, .. }) => assert_eq!(lower_bound, 1000.0),
            other => panic!("expected censored, got {other:?}"),
        }
    }

    #[test]
    fn scenario_validation() {
        let limits = limits_known(0.0, 0.25, 3.0).unwrap();
        assert!(estimate_arl(&srs_scenario(-0.1, 10_000, 1), &limits).is_err());
        assert!(estimate_arl(&srs_scenario(0.0, 999, 1), &limits).is_err());
        let wrong = limits.clone().for_design(DesignKind::Nrss, 4, 1.0);
        assert!(matches!(
            estimate_arl(&srs_scenario(0.0, 10_000, 1), &wrong),
            Err(Error::LimitsMismatch(_))
        ));
    }

    #[test]
    fn estimate_is_deterministic() {
        let limits = limits_known(0.0, 0.25, 2.0).unwrap();
        let s = srs_scenario(0.4, 50_000, 9);
        let a = crate::rng::with_threads(1, || estimate_arl(&s, &limits).unwrap());
        let b = crate::rng::with_threads(4, || estimate_arl(&s, &limits).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn from_counts_band() {
        let e = ArlEstimate::from_counts(srs_scenario(0.0, 1000, 0), 10, 1000).unwrap();
        assert_eq!(e.arl, 100.0);
        let expected_se = 100.0 * 100.0 * (0.01f64 * 0.99 / 1000.0).sqrt();
        assert!((e.se_arl - expected_se).abs() < 1e-9);
        assert!(e.ci_low < e.arl && e.arl < e.ci_high);
    }

    #[test]
    fn runs_and_reciprocal_agree() {
        let limits = limits_known(0.0, 0.25, 2.0).unwrap();
        let s = srs_scenario(0.5, 200_000, 31);
        let recip = estimate_arl(&s, &limits).unwrap();
        let (runs, lengths) = estimate_arl_by_runs(&Scenario { seed: 32, ..s }, &limits, 20_000, DEFAULT_HORIZON).unwrap();
        assert_eq!(lengths.len(), 20_000);
        assert_eq!(runs.censored, 0);
        let combined = (recip.se_arl.powi(2) + runs.se.powi(2)).sqrt();
        assert!((recip.arl - runs.mean).abs() < 4.0 * combined, "{} vs {}", recip.arl, runs.mean);
    }

    #[test]
    fn geometric_shortcut_mean() {
        let p = 0.05;
        let l = geometric_run_lengths(p, 100_000, 3).unwrap();
        assert!(l.iter().all(|&x| x >= 1));
        let mean = l.iter().sum::<u64>() as f64 / l.len() as f64;
        let se = ((1.0 - p) / (p * p) / l.len() as f64).sqrt();
        assert!((mean - 1.0 / p).abs() < 4.0 * se);
        assert!(geometric_run_lengths(0.0, 1, 0).is_err() || geometric_run_lengths(1.5, 1, 0).is_err());
    }
}
