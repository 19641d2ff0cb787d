use serde::{Deserialize, Serialize};

use crate::charts::phase1_estimate;
use crate::designs::{DesignKind, ProcessModel, RankedSample, Ranking, Sampler};
use crate::error::{Error, Result};
use crate::moments::{analytic_moment_table, estimator_variance};
use crate::rng::{block_stream, derive_seed, map_blocks};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub k: usize,
    pub m: usize,
    pub replications: u64,
    /// Exact variance of the NRSS mean under perfect ranking.
    pub reference: f64,
    pub mean_estimate: f64,
    /// `mean_estimate / reference - 1`.
    pub relative_bias: f64,
    /// Monte Carlo standard error of the ratio.
    pub se: f64,
    pub seed: u64,
}

/// Relative bias of the phase-1 estimator of the NRSS mean variance, from
/// `replications` sets of `m` standard-normal NRSS samples per (k, m).
pub fn bias_study(ks: &[usize], ms: &[usize], replications: u64, seed: u64) -> Result<Vec<BiasRow>> {
    if replications < 2 {
        return Err(Error::invalid("at least two replications required"));
    }
    let mut rows = Vec::new();
    for &k in ks {
        let reference = estimator_variance(&analytic_moment_table(DesignKind::Nrss, k)?).value;
        let template = Sampler::new(DesignKind::Nrss, k, ProcessModel::standard(1.0)?, Ranking::Perfect)?;
        for &m in ms {
            if m < 2 {
                return Err(Error::invalid(format!("m must be >= 2, got {m}")));
            }
            let cell_seed = derive_seed(seed, &[k as u64, m as u64]);
            let sums = map_blocks(replications, 512, |b, len| {
                let mut sampler = template.clone();
                let mut rng = block_stream(cell_seed, b);
                let mut samples: Vec<RankedSample> = (0..m).map(|_| sampler.draw(&mut rng)).collect();
                let (mut s, mut s2) = (0.0, 0.0);
                for rep in 0..len {
                    if rep > 0 {
                        for sample in samples.iter_mut() {
                            sampler.draw_into(&mut rng, &mut sample.values);
                        }
                    }
                    let est = phase1_estimate(&samples).expect("homogeneous samples");
                    let ratio = est.estimated_var_mean / reference;
                    s += ratio;
                    s2 += ratio * ratio;
                }
                (s, s2)
            });
            let (s, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
            let n = replications as f64;
            let mean_ratio = s / n;
            let var = (s2 - n * mean_ratio * mean_ratio) / (n - 1.0);
            rows.push(BiasRow {
                k,
                m,
                replications,
                reference,
                mean_estimate: mean_ratio * reference,
                relative_bias: mean_ratio - 1.0,
                se: (var.max(0.0) / n).sqrt(),
                seed: cell_seed,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bias_is_small_and_deterministic() {
        let a = bias_study(&[3], &[5, 20], 5_000, 1).unwrap();
        for r in &a {
            assert!(r.relative_bias.abs() < 4.0 * r.se + 0.001, "{r:?}");
        }
        let b = crate::rng::with_threads(2, || bias_study(&[3], &[5, 20], 5_000, 1).unwrap());
        assert_eq!(a, b);
        assert!(bias_study(&[3], &[1], 100, 1).is_err());
    }
}
