//! Sampling designs over a bivariate normal process.
//!
//! Units carry an auxiliary variable `X ~ N(0, 1)` that is cheap to rank and a
//! variable of interest `Y ~ N(mu_y, sigma_y²)` with `corr(X, Y) = rho`. A
//! design ranks units (by `Y` itself under perfect ranking, by the concomitant
//! `X` otherwise) and measures `Y` on `k` selected units.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DesignKind {
    /// Simple random sampling.
    Srs,
    /// Ranked set sampling: rank `i` from set `i`.
    Rss,
    /// Median ranked set sampling.
    Mrss,
    /// Extreme ranked set sampling.
    Erss,
    /// Neoteric ranked set sampling: one set of `k²` units.
    Nrss,
}

impl DesignKind {
    pub const ALL: [DesignKind; 5] = [
        DesignKind::Srs,
        DesignKind::Rss,
        DesignKind::Erss,
        DesignKind::Mrss,
        DesignKind::Nrss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DesignKind::Srs => "SRS",
            DesignKind::Rss => "RSS",
            DesignKind::Mrss => "MRSS",
            DesignKind::Erss => "ERSS",
            DesignKind::Nrss => "NRSS",
        }
    }

    /// Stable numeric code used in seed derivation.
    pub fn code(self) -> u64 {
        match self {
            DesignKind::Srs => 0,
            DesignKind::Rss => 1,
            DesignKind::Mrss => 2,
            DesignKind::Erss => 3,
            DesignKind::Nrss => 4,
        }
    }

    /// Whether the `k` measured units come from `k` independent sets.
    pub fn independent_sets(self) -> bool {
        matches!(self, DesignKind::Rss | DesignKind::Mrss | DesignKind::Erss)
    }

    /// Number of units that must be drawn (and ranked) per sample.
    pub fn units_drawn(self, k: usize) -> usize {
        match self {
            DesignKind::Srs => k,
            _ => k * k,
        }
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "srs" => Ok(DesignKind::Srs),
            "rss" => Ok(DesignKind::Rss),
            "mrss" => Ok(DesignKind::Mrss),
            "erss" => Ok(DesignKind::Erss),
            "nrss" => Ok(DesignKind::Nrss),
            other => Err(Error::invalid(format!("unknown design '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ranking {
    /// Units are ordered by the variable of interest itself.
    Perfect,
    /// Units are ordered by the concomitant auxiliary variable.
    Imperfect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessModel {
    pub mu_y: f64,
    pub sigma_y: f64,
    pub rho: f64,
}

impl ProcessModel {
    pub fn new(mu_y: f64, sigma_y: f64, rho: f64) -> Result<Self> {
        let m = Self { mu_y, sigma_y, rho };
        m.validate()?;
        Ok(m)
    }

    /// In-control standard model `N(0, 1)` with ranking correlation `rho`.
    pub fn standard(rho: f64) -> Result<Self> {
        Self::new(0.0, 1.0, rho)
    }

    /// Model whose mean sits `delta` standard errors of an SRS mean of size
    /// `k` away from `mu0`: `mu_y = mu0 + delta * sigma0 / sqrt(k)`.
    pub fn shifted(mu0: f64, sigma0: f64, delta: f64, k: usize, rho: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k must be positive"));
        }
        Self::new(mu0 + delta * sigma0 / (k as f64).sqrt(), sigma0, rho)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() <= 1.0) {
            return Err(Error::invalid(format!("|rho| must be <= 1, got {}", self.rho)));
        }
        if !(self.sigma_y > 0.0) || !self.sigma_y.is_finite() {
            return Err(Error::invalid(format!("sigma_y must be > 0, got {}", self.sigma_y)));
        }
        if !self.mu_y.is_finite() {
            return Err(Error::invalid("mu_y must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSample {
    pub design: DesignKind,
    pub k: usize,
    /// Measured values, one per selected rank position.
    pub values: Vec<f64>,
    /// 1-based rank of each measured unit: within its set for the RSS family,
    /// within the single set of `k²` units for NRSS.
    pub positions: Vec<usize>,
}

impl RankedSample {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::invalid(format!("set size k must be >= 2, got {k}")));
    }
    Ok(())
}

/// Ranks `(i-1)k + l` selected from a single ranked set of `k²` units.
///
/// `l = (k+1)/2` for odd `k`; for even `k`, `l = (k+2)/2` on odd `i` and
/// `l = k/2` on even `i`.
pub fn nrss_positions(k: usize) -> Result<Vec<usize>> {
    check_k(k)?;
    Ok((1..=k)
        .map(|i| {
            let l = if k % 2 == 1 {
                (k + 1) / 2
            } else if i % 2 == 1 {
                (k + 2) / 2
            } else {
                k / 2
            };
            (i - 1) * k + l
        })
        .collect())
}

/// The 1-based ranks a design measures.
///
/// For SRS this is `1..=k` (no ranking). For the RSS family entry `i` is the
/// rank taken from set `i`. For NRSS it is [`nrss_positions`].
pub fn selected_ranks(design: DesignKind, k: usize) -> Result<Vec<usize>> {
    check_k(k)?;
    let half = k / 2;
    Ok(match design {
        DesignKind::Srs => (1..=k).collect(),
        DesignKind::Rss => (1..=k).collect(),
        DesignKind::Mrss => {
            if k % 2 == 1 {
                vec![(k + 1) / 2; k]
            } else {
                (0..k)
                    .map(|i| if i < half { half } else { half + 1 })
                    .collect()
            }
        }
        // Odd k: the last set contributes its median.
        DesignKind::Erss => (0..k)
            .map(|i| {
                if i < half {
                    1
                } else if i < 2 * half {
                    k
                } else {
                    (k + 1) / 2
                }
            })
            .collect(),
        DesignKind::Nrss => nrss_positions(k)?,
    })
}

/// `n` independent `(x, y)` pairs from the bivariate normal process model.
pub fn draw_bivariate<R: Rng + ?Sized>(
    model: &ProcessModel,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    model.validate()?;
    let cond = (1.0 - model.rho * model.rho).max(0.0).sqrt();
    Ok((0..n)
        .map(|_| {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let y = model.mu_y + model.sigma_y * (model.rho * z1 + cond * z2);
            (z1, y)
        })
        .collect())
}

/// Reusable sample generator holding scratch buffers; the hot path of every
/// Monte Carlo loop.
///
/// Under imperfect ranking only the auxiliary values of the ranked units are
/// drawn up front; `Y` of a measured unit is drawn from its conditional law
/// `Y | X = x ~ N(mu_y + sigma_y rho x, sigma_y² (1 - rho²))`. That is the same
/// joint law as [`draw_bivariate`], without drawing `Y` for unmeasured units.
#[derive(Debug, Clone)]
pub struct Sampler {
    design: DesignKind,
    k: usize,
    model: ProcessModel,
    ranking: Ranking,
    ranks: Vec<usize>,
    cond_sd: f64,
    keys: Vec<f64>,
}

impl Sampler {
    pub fn new(design: DesignKind, k: usize, model: ProcessModel, ranking: Ranking) -> Result<Self> {
        model.validate()?;
        let ranks = selected_ranks(design, k)?;
        Ok(Self {
            design,
            k,
            model,
            ranking,
            ranks,
            cond_sd: (1.0 - model.rho * model.rho).max(0.0).sqrt(),
            keys: vec![0.0; design.units_drawn(k)],
        })
    }

    pub fn design(&self) -> DesignKind {
        self.design
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    #[inline]
    fn measure<R: Rng + ?Sized>(&self, key: f64, rng: &mut R) -> f64 {
        match self.ranking {
            Ranking::Perfect => key,
            Ranking::Imperfect => {
                let z: f64 = rng.sample(StandardNormal);
                self.model.mu_y + self.model.sigma_y * (self.model.rho * key + self.cond_sd * z)
            }
        }
    }

    #[inline]
    fn fill_keys<R: Rng + ?Sized>(&mut self, n: usize, rng: &mut R) {
        let (mu, sigma) = match self.ranking {
            Ranking::Perfect => (self.model.mu_y, self.model.sigma_y),
            Ranking::Imperfect => (0.0, 1.0),
        };
        for v in &mut self.keys[..n] {
            let z: f64 = rng.sample(StandardNormal);
            *v = mu + sigma * z;
        }
    }

    /// Draws one sample and writes the `k` measured values into `out`.
    pub fn draw_into<R: Rng + ?Sized>(&mut self, rng: &mut R, out: &mut [f64]) {
        let k = self.k;
        debug_assert_eq!(out.len(), k);
        match self.design {
            DesignKind::Srs => {
                for v in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = self.model.mu_y + self.model.sigma_y * z;
                }
            }
            DesignKind::Nrss => {
                self.fill_keys(k * k, rng);
                // Stable sort: equal keys keep draw order.
                self.keys.sort_by(f64::total_cmp);
                for i in 0..k {
                    let key = self.keys[self.ranks[i] - 1];
                    out[i] = self.measure(key, rng);
                }
            }
            DesignKind::Rss | DesignKind::Mrss | DesignKind::Erss => {
                for i in 0..k {
                    self.fill_keys(k, rng);
                    let set = &mut self.keys[..k];
                    set.sort_by(f64::total_cmp);
                    let key = set[self.ranks[i] - 1];
                    out[i] = self.measure(key, rng);
                }
            }
        }
    }

    /// Sample mean of one freshly drawn sample.
    pub fn draw_mean<R: Rng + ?Sized>(&mut self, rng: &mut R, scratch: &mut [f64]) -> f64 {
        self.draw_into(rng, scratch);
        scratch.iter().sum::<f64>() / self.k as f64
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> RankedSample {
        let mut values = vec![0.0; self.k];
        self.draw_into(rng, &mut values);
        RankedSample {
            design: self.design,
            k: self.k,
            values,
            positions: self.ranks.clone(),
        }
    }
}

/// Draws one ranked sample of size `k` under `design`.
pub fn draw_sample<R: Rng + ?Sized>(
    design: DesignKind,
    k: usize,
    model: &ProcessModel,
    ranking: Ranking,
    rng: &mut R,
) -> Result<RankedSample> {
    Ok(Sampler::new(design, k, *model, ranking)?.draw(rng))
}
