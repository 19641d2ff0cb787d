//! Moments of the measured units of each design.
//!
//! Under perfect ranking the measured units are normal order statistics and
//! their moments are computed by quadrature of the order-statistic densities.
//! Under imperfect ranking they are estimated by Monte Carlo.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::designs::{selected_ranks, DesignKind, ProcessModel, Ranking, Sampler};
use crate::error::{Error, Result};
use crate::normal;
use crate::quadrature::{integrate, Tolerance};
use crate::rng::{block_stream, map_blocks, par_map};

/// Integration domain; the normal tail mass outside is below 1e-23.
const LOWER: f64 = -10.0;
const UPPER: f64 = 10.0;

/// Order statistics of up to a few dozen normals have sd above 0.1.
const PANEL_WIDTH: f64 = 0.5;

const MEAN_TOL: Tolerance = Tolerance {
    abs: 1e-13,
    rel: 0.0,
    max_intervals: 2000,
    max_width: PANEL_WIDTH,
};
const INNER_TOL: Tolerance = Tolerance {
    abs: 1e-16,
    rel: 1e-12,
    max_intervals: 400,
    max_width: PANEL_WIDTH,
};
const OUTER_TOL: Tolerance = Tolerance {
    abs: 1e-11,
    rel: 0.0,
    max_intervals: 400,
    max_width: PANEL_WIDTH,
};

/// Minimum replications accepted by [`mc_moment_table`].
pub const MIN_MC_REPLICATIONS: u64 = 10_000;

/// Number of batches used for batch-means standard errors.
pub const MC_BATCHES: u64 = 100;

fn ln_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

fn check_rank(r: usize, n: usize) -> Result<()> {
    if r == 0 || r > n {
        return Err(Error::RankOutOfRange { rank: r, n });
    }
    Ok(())
}

/// `E[X_(r)^power]` for `n` iid standard normals.
fn order_stat_raw_moment(r: usize, n: usize, power: i32) -> Result<f64> {
    check_rank(r, n)?;
    let c = (ln_factorial(n) - ln_factorial(r - 1) - ln_factorial(n - r)).exp();
    let (below, above) = ((r - 1) as i32, (n - r) as i32);
    let res = integrate(
        |x| {
            c * x.powi(power)
                * normal::pdf(x)
                * normal::cdf(x).powi(below)
                * normal::sf(x).powi(above)
        },
        LOWER,
        UPPER,
        MEAN_TOL,
    );
    if !res.converged {
        return Err(Error::Quadrature {
            error: res.abs_error,
        });
    }
    Ok(res.value)
}

/// Expected value of the `r`-th order statistic of `n` iid standard normals.
pub fn normal_order_stat_mean(r: usize, n: usize) -> Result<f64> {
    order_stat_raw_moment(r, n, 1)
}

/// Variance of the `r`-th order statistic of `n` iid standard normals.
pub fn normal_order_stat_var(r: usize, n: usize) -> Result<f64> {
    let m1 = order_stat_raw_moment(r, n, 1)?;
    let m2 = order_stat_raw_moment(r, n, 2)?;
    Ok(m2 - m1 * m1)
}

/// `E[X_(r) X_(s)]` for `r < s`, by double quadrature of the joint density
/// with the inner variable restricted to `(LOWER, y]`.
fn order_stat_product_moment(r: usize, s: usize, n: usize) -> Result<f64> {
    let c = (ln_factorial(n)
        - ln_factorial(r - 1)
        - ln_factorial(s - r - 1)
        - ln_factorial(n - s))
    .exp();
    let (below, between, above) = ((r - 1) as i32, (s - r - 1) as i32, (n - s) as i32);
    let mut inner_failure: Option<f64> = None;
    let outer = integrate(
        |y| {
            let fy = normal::cdf(y);
            let tail = y * normal::pdf(y) * normal::sf(y).powi(above);
            if tail == 0.0 {
                return 0.0;
            }
            let inner = integrate(
                |x| {
                    let fx = normal::cdf(x);
                    x * normal::pdf(x) * fx.powi(below) * (fy - fx).max(0.0).powi(between)
                },
                LOWER,
                y,
                INNER_TOL,
            );
            if !inner.converged {
                inner_failure = Some(inner.abs_error);
            }
            c * tail * inner.value
        },
        LOWER,
        UPPER,
        OUTER_TOL,
    );
    if let Some(error) = inner_failure {
        return Err(Error::Quadrature { error });
    }
    if !outer.converged {
        return Err(Error::Quadrature {
            error: outer.abs_error,
        });
    }
    Ok(outer.value)
}

/// Covariance of the `r`-th and `s`-th order statistics (`r < s`) of `n` iid
/// standard normals.
pub fn normal_order_stat_cov(r: usize, s: usize, n: usize) -> Result<f64> {
    check_rank(r, n)?;
    check_rank(s, n)?;
    if r >= s {
        return Err(Error::RankOrder { r, s });
    }
    let product = order_stat_product_moment(r, s, n)?;
    Ok(product - normal_order_stat_mean(r, n)? * normal_order_stat_mean(s, n)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentSource {
    AnalyticQuadrature,
    MonteCarlo,
}

/// Batch-means standard errors of a Monte Carlo [`MomentTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentErrors {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub covariances: Vec<Vec<f64>>,
    pub estimator_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub design: DesignKind,
    pub k: usize,
    /// Ranking correlation; 1 for perfect ranking.
    pub rho: f64,
    #[serde(rename = "replications")]
    pub mc_replications: Option<u64>,
    pub seed: Option<u64>,
    pub source: MomentSource,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Full symmetric matrix, row-major; the diagonal holds the variances.
    pub covariances: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard_errors: Option<MomentErrors>,
}

impl MomentTable {
    /// Symmetry, diagonal consistency and positive variances.
    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        if self.means.len() != k || self.variances.len() != k || self.covariances.len() != k {
            return Err(Error::invalid("moment table dimensions do not match k"));
        }
        for i in 0..k {
            if self.covariances[i].len() != k {
                return Err(Error::invalid("covariance matrix is not k x k"));
            }
            if !(self.variances[i] > 0.0) {
                return Err(Error::invalid(format!("variance {i} is not positive")));
            }
            for j in 0..k {
                if self.covariances[i][j] != self.covariances[j][i] {
                    return Err(Error::invalid("covariance matrix is not symmetric"));
                }
            }
        }
        Ok(())
    }

    /// Sum of the strictly upper-triangular covariances.
    pub fn off_diagonal_sum(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.k {
            for j in i + 1..self.k {
                s += self.covariances[i][j];
            }
        }
        s
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let t: MomentTable = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        t.validate()?;
        Ok(t)
    }
}

/// Exact moment table under perfect ranking.
pub fn analytic_moment_table(design: DesignKind, k: usize) -> Result<MomentTable> {
    let ranks = selected_ranks(design, k)?;
    let (means, variances, covariances) = match design {
        DesignKind::Srs => {
            let mut cov = vec![vec![0.0; k]; k];
            for (i, row) in cov.iter_mut().enumerate() {
                row[i] = 1.0;
            }
            (vec![0.0; k], vec![1.0; k], cov)
        }
        DesignKind::Rss | DesignKind::Mrss | DesignKind::Erss => {
            let stats = par_map(&ranks, |&r| {
                Ok::<_, Error>((normal_order_stat_mean(r, k)?, normal_order_stat_var(r, k)?))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let mut cov = vec![vec![0.0; k]; k];
            for (i, row) in cov.iter_mut().enumerate() {
                row[i] = stats[i].1;
            }
            (
                stats.iter().map(|s| s.0).collect(),
                stats.iter().map(|s| s.1).collect(),
                cov,
            )
        }
        DesignKind::Nrss => {
            let n = k * k;
            let stats = par_map(&ranks, |&r| {
                Ok::<_, Error>((normal_order_stat_mean(r, n)?, normal_order_stat_var(r, n)?))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let pairs: Vec<(usize, usize)> = (0..k)
                .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
                .collect();
            let products = par_map(&pairs, |&(i, j)| {
                order_stat_product_moment(ranks[i], ranks[j], n)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let mut cov = vec![vec![0.0; k]; k];
            for (i, row) in cov.iter_mut().enumerate() {
                row[i] = stats[i].1;
            }
            for (&(i, j), p) in pairs.iter().zip(products) {
                let c = p - stats[i].0 * stats[j].0;
                cov[i][j] = c;
                cov[j][i] = c;
            }
            (
                stats.iter().map(|s| s.0).collect(),
                stats.iter().map(|s| s.1).collect(),
                cov,
            )
        }
    };
    Ok(MomentTable {
        design,
        k,
        rho: 1.0,
        mc_replications: None,
        seed: None,
        source: MomentSource::AnalyticQuadrature,
        means,
        variances,
        covariances,
        standard_errors: None,
    })
}

/// Streaming mean and co-moment accumulator (Welford, merged with Chan's
/// pairwise update).
#[derive(Debug, Clone)]
struct CoMoments {
    n: f64,
    mean: Vec<f64>,
    comoment: Vec<f64>,
}

impl CoMoments {
    fn new(k: usize) -> Self {
        Self {
            n: 0.0,
            mean: vec![0.0; k],
            comoment: vec![0.0; k * k],
        }
    }

    fn push(&mut self, x: &[f64], delta: &mut [f64]) {
        let k = self.mean.len();
        self.n += 1.0;
        for i in 0..k {
            delta[i] = x[i] - self.mean[i];
            self.mean[i] += delta[i] / self.n;
        }
        for i in 0..k {
            let after = x[i] - self.mean[i];
            for j in 0..k {
                self.comoment[i * k + j] += delta[j] * after;
            }
        }
    }

    fn merge(&mut self, other: &CoMoments) {
        let k = self.mean.len();
        let n = self.n + other.n;
        let d: Vec<f64> = (0..k).map(|i| other.mean[i] - self.mean[i]).collect();
        let w = self.n * other.n / n;
        for i in 0..k {
            for j in 0..k {
                self.comoment[i * k + j] += other.comoment[i * k + j] + d[i] * d[j] * w;
            }
        }
        for i in 0..k {
            self.mean[i] += d[i] * other.n / n;
        }
        self.n = n;
    }

    /// Covariance with divisor `n - 1`.
    fn cov(&self, i: usize, j: usize) -> f64 {
        let k = self.mean.len();
        self.comoment[i * k + j] / (self.n - 1.0)
    }
}

fn batch_se(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let b = values.clone().count() as f64;
    let m = values.clone().sum::<f64>() / b;
    let var = values.map(|v| (v - m) * (v - m)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

/// Monte Carlo moment table under concomitant ranking with correlation `rho`.
///
/// Variances and covariances use divisor `replications - 1`. For designs with
/// independent sets the off-diagonal covariances are exactly zero.
pub fn mc_moment_table(
    design: DesignKind,
    k: usize,
    rho: f64,
    replications: u64,
    seed: u64,
) -> Result<MomentTable> {
    if replications < MIN_MC_REPLICATIONS {
        return Err(Error::invalid(format!(
            "at least {MIN_MC_REPLICATIONS} replications required, got {replications}"
        )));
    }
    let model = ProcessModel::standard(rho)?;
    let template = Sampler::new(design, k, model, Ranking::Imperfect)?;
    let batch = replications.div_ceil(MC_BATCHES);
    let batches = map_blocks(replications, batch, |b, len| {
        let mut sampler = template.clone();
        let mut rng = block_stream(seed, b);
        let mut acc = CoMoments::new(k);
        let mut buf = vec![0.0; k];
        let mut delta = vec![0.0; k];
        for _ in 0..len {
            sampler.draw_into(&mut rng, &mut buf);
            acc.push(&buf, &mut delta);
        }
        acc
    });

    let mut total = CoMoments::new(k);
    for b in &batches {
        total.merge(b);
    }
    let independent = design == DesignKind::Srs || design.independent_sets();
    let mut covariances = vec![vec![0.0; k]; k];
    let mut cov_se = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i == j || !independent {
                covariances[i][j] = total.cov(i, j);
                cov_se[i][j] = batch_se(batches.iter().map(|b| b.cov(i, j)));
            }
        }
    }
    // Symmetrize exactly.
    for i in 0..k {
        for j in i + 1..k {
            let c = 0.5 * (covariances[i][j] + covariances[j][i]);
            covariances[i][j] = c;
            covariances[j][i] = c;
        }
    }
    let variances: Vec<f64> = (0..k).map(|i| covariances[i][i]).collect();
    let ev_batches = batches.iter().map(|b| {
        let mut s = 0.0;
        for i in 0..k {
            for j in 0..k {
                if i == j || !independent {
                    s += b.cov(i, j);
                }
            }
        }
        s / (k * k) as f64
    });
    let errors = MomentErrors {
        means: (0..k)
            .map(|i| batch_se(batches.iter().map(|b| b.mean[i])))
            .collect(),
        variances: (0..k).map(|i| cov_se[i][i]).collect(),
        covariances: cov_se,
        estimator_variance: batch_se(ev_batches),
    };
    Ok(MomentTable {
        design,
        k,
        rho,
        mc_replications: Some(replications),
        seed: Some(seed),
        source: MomentSource::MonteCarlo,
        means: total.mean.clone(),
        variances,
        covariances,
        standard_errors: Some(errors),
    })
}

/// Variance of a design's sample mean for one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorVariance {
    pub value: f64,
    pub design: DesignKind,
    pub k: usize,
    pub rho: f64,
}

impl EstimatorVariance {
    /// Variance of the mean over `cycles` independent cycles.
    pub fn over_cycles(&self, cycles: usize) -> f64 {
        self.value / cycles as f64
    }

    pub fn sd(&self) -> f64 {
        self.value.sqrt()
    }
}

/// `(1/k²) Σ Var + (2/k²) Σ_{i<i'} Cov` for one cycle.
pub fn estimator_variance(table: &MomentTable) -> EstimatorVariance {
    let k2 = (table.k * table.k) as f64;
    let value = table.variances.iter().sum::<f64>() / k2 + 2.0 * table.off_diagonal_sum() / k2;
    EstimatorVariance {
        value,
        design: table.design,
        k: table.k,
        rho: table.rho,
    }
}

/// `1/k − (1/k²) Σ μ_(i:k)²`: variance of the RSS mean under perfect ranking.
pub fn rss_estimator_variance(k: usize) -> Result<EstimatorVariance> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    let kf = k as f64;
    let gain: f64 = (1..=k)
        .map(|i| normal_order_stat_mean(i, k).map(|m| m * m))
        .sum::<Result<f64>>()?;
    Ok(EstimatorVariance {
        value: 1.0 / kf - gain / (kf * kf),
        design: DesignKind::Rss,
        k,
        rho: 1.0,
    })
}

/// On-disk cache of Monte Carlo moment tables, one JSON file per key.
#[derive(Debug, Clone)]
pub struct MomentCache {
    dir: PathBuf,
}

impl MomentCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, design: DesignKind, k: usize, rho: f64, replications: u64, seed: u64) -> PathBuf {
        self.dir.join(format!(
            "moments_{}_k{k}_rho{rho}_n{replications}_s{seed}.json",
            design.name().to_lowercase()
        ))
    }

    pub fn load_or_compute(
        &self,
        design: DesignKind,
        k: usize,
        rho: f64,
        replications: u64,
        seed: u64,
    ) -> Result<MomentTable> {
        let path = self.path_for(design, k, rho, replications, seed);
        if path.exists() {
            log::debug!("moment cache hit: {}", path.display());
            return MomentTable::load_json(&path);
        }
        let table = mc_moment_table(design, k, rho, replications, seed)?;
        std::fs::create_dir_all(&self.dir)?;
        table.save_json(&path)?;
        Ok(table)
    }
}
