//! Shewhart limits for the design mean and run lengths.

use serde::{Deserialize, Serialize};

use crate::designs::{DesignKind, RankedSample};
use crate::error::{Error, Result};

/// Default number of points an explicit stream is followed before censoring.
pub const DEFAULT_HORIZON: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    SimulatedMoments,
    Phase1Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartLimits {
    pub center: f64,
    pub lower: f64,
    pub upper: f64,
    pub amplitude: f64,
    /// Standard deviation of the design's sample mean.
    pub sigma_mean: f64,
    pub provenance: Provenance,
    pub design: Option<DesignKind>,
    pub k: Option<usize>,
    pub rho: Option<f64>,
}

impl ChartLimits {
    /// Tags the limits with the design they were built for.
    pub fn for_design(mut self, design: DesignKind, k: usize, rho: f64) -> Self {
        self.design = Some(design);
        self.k = Some(k);
        self.rho = Some(rho);
        self
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// A point exactly on a limit is in control.
    #[inline]
    pub fn is_outside(&self, mean: f64) -> bool {
        mean < self.lower || mean > self.upper
    }

    pub fn half_width(&self) -> f64 {
        self.amplitude * self.sigma_mean
    }
}

fn symmetric(center: f64, var_mean: f64, amplitude: f64, provenance: Provenance) -> ChartLimits {
    let sigma_mean = var_mean.sqrt();
    let half = amplitude * sigma_mean;
    ChartLimits {
        center,
        lower: center - half,
        upper: center + half,
        amplitude,
        sigma_mean,
        provenance,
        design: None,
        k: None,
        rho: None,
    }
}

/// Limits `mu0 ∓ A·sqrt(var_mean)` from known in-control parameters.
pub fn limits_known(mu0: f64, var_mean: f64, amplitude: f64) -> Result<ChartLimits> {
    if !(var_mean > 0.0) || !var_mean.is_finite() {
        return Err(Error::invalid(format!(
            "variance of the mean must be positive, got {var_mean}"
        )));
    }
    if !(amplitude > 0.0) || !amplitude.is_finite() {
        return Err(Error::invalid(format!("amplitude must be positive, got {amplitude}")));
    }
    Ok(symmetric(mu0, var_mean, amplitude, Provenance::Analytic))
}

/// Parameters estimated from `m` in-control phase-1 samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase1Estimate {
    pub design: DesignKind,
    pub k: usize,
    pub m: usize,
    /// Mean of the `m` sample means.
    pub grand_mean: f64,
    pub per_position_means: Vec<f64>,
    /// Divisor `m - 1`.
    pub per_position_vars: Vec<f64>,
    /// `k x k`, divisor `m - 1`; the diagonal equals `per_position_vars`.
    pub per_position_covs: Vec<Vec<f64>>,
    /// `(1/k²) Σ var + (2/k²) Σ_{i<i'} cov`.
    pub estimated_var_mean: f64,
}

impl Phase1Estimate {
    pub fn is_degenerate(&self) -> bool {
        !(self.estimated_var_mean > 0.0)
    }
}

pub fn phase1_estimate(samples: &[RankedSample]) -> Result<Phase1Estimate> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::invalid(format!("at least 2 phase-1 samples required, got {m}")));
    }
    let first = &samples[0];
    let k = first.k;
    for (p, s) in samples.iter().enumerate() {
        if s.design != first.design || s.k != k || s.values.len() != k || s.positions != first.positions {
            return Err(Error::HeterogeneousSamples(format!(
                "sample {p} is {} k={} but sample 0 is {} k={k}",
                s.design, s.k, first.design
            )));
        }
    }
    let mf = m as f64;
    let means: Vec<f64> = (0..k)
        .map(|i| samples.iter().map(|s| s.values[i]).sum::<f64>() / mf)
        .collect();
    let mut covs = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let c = samples
                .iter()
                .map(|s| (s.values[i] - means[i]) * (s.values[j] - means[j]))
                .sum::<f64>()
                / (mf - 1.0);
            covs[i][j] = c;
            covs[j][i] = c;
        }
    }
    let vars: Vec<f64> = (0..k).map(|i| covs[i][i]).collect();
    let k2 = (k * k) as f64;
    let mut upper = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            upper += covs[i][j];
        }
    }
    let estimated_var_mean = (vars.iter().sum::<f64>() / k2 + 2.0 * upper / k2).max(0.0);
    let grand_mean = samples.iter().map(RankedSample::mean).sum::<f64>() / mf;
    Ok(Phase1Estimate {
        design: first.design,
        k,
        m,
        grand_mean,
        per_position_means: means,
        per_position_vars: vars,
        per_position_covs: covs,
        estimated_var_mean,
    })
}

/// Limits `Ȳ̄ ∓ A·sqrt(V̂ar)` from a phase-1 estimate.
pub fn limits_estimated(est: &Phase1Estimate, amplitude: f64) -> Result<ChartLimits> {
    if est.is_degenerate() {
        return Err(Error::DegenerateLimits(est.estimated_var_mean));
    }
    if !(amplitude > 0.0) || !amplitude.is_finite() {
        return Err(Error::invalid(format!("amplitude must be positive, got {amplitude}")));
    }
    Ok(symmetric(
        est.grand_mean,
        est.estimated_var_mean,
        amplitude,
        Provenance::Phase1Estimated,
    ))
    .map(|l| ChartLimits {
        design: Some(est.design),
        k: Some(est.k),
        ..l
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLength {
    /// 1-based index of the first point outside the limits, or the number of
    /// points seen when censored.
    pub length: u64,
    pub censored: bool,
}

/// First exceedance in `means`, following at most [`DEFAULT_HORIZON`] points.
pub fn run_length<I: IntoIterator<Item = f64>>(limits: &ChartLimits, means: I) -> RunLength {
    run_length_with_horizon(limits, means, DEFAULT_HORIZON)
}

pub fn run_length_with_horizon<I: IntoIterator<Item = f64>>(
    limits: &ChartLimits,
    means: I,
    horizon: u64,
) -> RunLength {
    let mut seen = 0;
    for x in means.into_iter().take(horizon as usize) {
        seen += 1;
        if limits.is_outside(x) {
            return RunLength {
                length: seen,
                censored: false,
            };
        }
    }
    RunLength {
        length: seen,
        censored: true,
    }
}

/// Per-point out-of-control flags.
pub fn classify(limits: &ChartLimits, means: &[f64]) -> Vec<bool> {
    means.iter().map(|&x| limits.is_outside(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample(values: &[f64]) -> RankedSample {
        RankedSample {
            design: DesignKind::Nrss,
            k: values.len(),
            values: values.to_vec(),
            positions: crate::designs::nrss_positions(values.len()).unwrap(),
        }
    }

    #[test]
    fn known_limits() {
        let l = limits_known(0.0, 0.25, 3.0).unwrap();
        assert_eq!((l.lower, l.center, l.upper), (-1.5, 0.0, 1.5));
        assert_eq!(l.provenance, Provenance::Analytic);
        let tiny = limits_known(2.0, 1.0, 1e-12).unwrap();
        assert_abs_diff_eq!(tiny.lower, 2.0, epsilon = 1e-11);
        assert_abs_diff_eq!(tiny.upper, 2.0, epsilon = 1e-11);
        assert!(limits_known(0.0, 0.0, 3.0).is_err());
        assert!(limits_known(0.0, 1.0, 0.0).is_err());
        assert!(limits_known(0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn hand_computed_phase1() {
        let s = [sample(&[0.0; 3]), sample(&[1.0; 3]), sample(&[2.0; 3])];
        let e = phase1_estimate(&s).unwrap();
        assert_eq!(e.grand_mean, 1.0);
        assert_eq!(e.per_position_vars, vec![1.0; 3]);
        assert_eq!(e.per_position_covs, vec![vec![1.0; 3]; 3]);
        assert_abs_diff_eq!(e.estimated_var_mean, 1.0, epsilon = 1e-15);
        let l = limits_estimated(&e, 3.0).unwrap();
        assert_abs_diff_eq!(l.lower, -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l.upper, 4.0, epsilon = 1e-15);
        assert_eq!(l.center, 1.0);
        assert_eq!(l.provenance, Provenance::Phase1Estimated);
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let s = vec![sample(&[0.3, 1.0, 2.0]); 5];
        let e = phase1_estimate(&s).unwrap();
        assert_eq!(e.estimated_var_mean, 0.0);
        assert!(e.is_degenerate());
        assert!(matches!(limits_estimated(&e, 3.0), Err(Error::DegenerateLimits(_))));
    }

    #[test]
    fn estimated_limits_arithmetic() {
        let mut e = phase1_estimate(&[sample(&[0.0; 3]), sample(&[1.0; 3])]).unwrap();
        e.estimated_var_mean = 1.0 / 9.0;
        let l = limits_estimated(&e, 3.0).unwrap();
        assert_abs_diff_eq!(l.upper - l.center, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l.center - l.lower, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn phase1_errors() {
        assert!(phase1_estimate(&[sample(&[1.0, 2.0, 3.0])]).is_err());
        let mut other = sample(&[1.0, 2.0, 3.0]);
        other.design = DesignKind::Rss;
        assert!(matches!(
            phase1_estimate(&[sample(&[1.0, 2.0, 3.0]), other]),
            Err(Error::HeterogeneousSamples(_))
        ));
        assert!(phase1_estimate(&[sample(&[1.0, 2.0, 3.0]), sample(&[1.0, 2.0])]).is_err());
    }

    #[test]
    fn run_lengths() {
        let l = limits_known(0.0, 1.0, 1.0).unwrap();
        assert_eq!(
            run_length(&l, [0.5, -0.2, 1.3]),
            RunLength { length: 3, censored: false }
        );
        assert_eq!(run_length(&l, [-4.0, 0.0]).length, 1);
        assert_eq!(
            run_length(&l, [0.1, 0.2]),
            RunLength { length: 2, censored: true }
        );
        // On the limit is in control.
        assert!(run_length(&l, [1.0, -1.0]).censored);
        assert_eq!(run_length_with_horizon(&l, std::iter::repeat(0.0), 50).length, 50);
    }

    #[test]
    fn classify_flags() {
        let l = limits_known(0.0, 1.0, 1.0).unwrap();
        assert_eq!(classify(&l, &[0.0, 1.0, 1.0001, -2.0]), vec![false, false, true, true]);
    }

    #[test]
    fn limits_json_fields() {
        let l = limits_known(0.0, 0.25, 3.0)
            .unwrap()
            .for_design(DesignKind::Nrss, 4, 0.9);
        let v = serde_json::to_value(&l).unwrap();
        for f in ["center", "lower", "upper", "amplitude", "sigma_mean", "provenance", "design", "k", "rho"] {
            assert!(v.get(f).is_some(), "{f}");
        }
        assert_eq!(v["provenance"], "analytic");
        let back: ChartLimits = serde_json::from_value(v).unwrap();
        assert_eq!(back, l);
    }
}
