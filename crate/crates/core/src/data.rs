//! Finite-population data: CSV ingestion and with-replacement design draws.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::designs::{selected_ranks, DesignKind, RankedSample};
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// `(y, x)`: variable of interest, auxiliary ranking variable.
    pub records: Vec<(f64, f64)>,
    pub y_label: String,
    pub x_label: String,
    pub source: Option<PathBuf>,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let ss = values.map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn y_mean(&self) -> f64 {
        mean_sd(self.records.iter().map(|r| r.0)).0
    }

    /// Sample standard deviation of `y` (divisor `n - 1`).
    pub fn y_sd(&self) -> f64 {
        mean_sd(self.records.iter().map(|r| r.0)).1
    }

    pub fn x_mean(&self) -> f64 {
        mean_sd(self.records.iter().map(|r| r.1)).0
    }

    pub fn x_sd(&self) -> f64 {
        mean_sd(self.records.iter().map(|r| r.1)).1
    }

    pub fn correlation(&self) -> f64 {
        let (my, sy) = mean_sd(self.records.iter().map(|r| r.0));
        let (mx, sx) = mean_sd(self.records.iter().map(|r| r.1));
        let n = self.len() as f64;
        let sxy = self.records.iter().map(|&(y, x)| (y - my) * (x - mx)).sum::<f64>() / (n - 1.0);
        sxy / (sx * sy)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([&self.y_label, &self.x_label])?;
        for &(y, x) in &self.records {
            w.write_record([y.to_string(), x.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads columns `y_col` and `x_col` from a headed, comma-separated file.
pub fn ingest_csv(path: &Path, y_col: &str, x_col: &str) -> Result<Dataset> {
    let data_err = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| data_err(format!("column '{name}' not found; header is {:?}", headers.iter().collect::<Vec<_>>())))
    };
    let (yi, xi) = (find(y_col)?, find(x_col)?);
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let cell = |i: usize, name: &str| -> Result<f64> {
            let raw = row.get(i).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::MalformedRow {
                    path: path.to_path_buf(),
                    line,
                    message: format!("column '{name}' has non-numeric value '{raw}'"),
                }),
            }
        };
        records.push((cell(yi, y_col)?, cell(xi, x_col)?));
    }
    if records.is_empty() {
        return Err(data_err("no data rows (0 records)".into()));
    }
    let data = Dataset {
        records,
        y_label: y_col.to_string(),
        x_label: x_col.to_string(),
        source: Some(path.to_path_buf()),
    };
    log::info!(
        "{}: {} rows; {} mean {:.4} sd {:.4}; {} mean {:.4} sd {:.4}; corr {:.4}",
        path.display(),
        data.len(),
        y_col,
        data.y_mean(),
        data.y_sd(),
        x_col,
        data.x_mean(),
        data.x_sd(),
        data.correlation()
    );
    Ok(data)
}

fn pick<'a, R: Rng + ?Sized>(data: &'a Dataset, n: usize, rng: &mut R) -> Vec<&'a (f64, f64)> {
    (0..n).map(|_| &data.records[rng.random_range(0..data.len())]).collect()
}

fn rank_by_x(set: &mut [&(f64, f64)]) {
    set.sort_by(|a, b| a.1.total_cmp(&b.1));
}

/// Draws records with replacement, ranks them by `x` and measures `y` at the
/// design's selected ranks. Ties in `x` keep draw order.
pub fn resample_design<R: Rng + ?Sized>(data: &Dataset, design: DesignKind, k: usize, rng: &mut R) -> Result<RankedSample> {
    let ranks = selected_ranks(design, k)?;
    let needed = if design == DesignKind::Nrss { k * k } else { k };
    if data.len() < needed {
        return Err(Error::DatasetTooSmall {
            needed,
            have: data.len(),
        });
    }
    let values = match design {
        DesignKind::Srs => pick(data, k, rng).into_iter().map(|r| r.0).collect(),
        DesignKind::Nrss => {
            let mut set = pick(data, k * k, rng);
            rank_by_x(&mut set);
            ranks.iter().map(|&r| set[r - 1].0).collect()
        }
        DesignKind::Rss | DesignKind::Mrss | DesignKind::Erss => ranks
            .iter()
            .map(|&r| {
                let mut set = pick(data, k, rng);
                rank_by_x(&mut set);
                set[r - 1].0
            })
            .collect(),
    };
    Ok(RankedSample {
        design,
        k,
        values,
        positions: ranks,
    })
}

/// Adds one draw of `N(delta·sigma0/√k, noise_sd²)` to every value.
pub fn inject_shift<R: Rng + ?Sized>(
    sample: &RankedSample,
    delta: f64,
    sigma0: f64,
    noise_sd: f64,
    rng: &mut R,
) -> Result<RankedSample> {
    if !(delta >= 0.0) || !(noise_sd >= 0.0) || !(sigma0 > 0.0) {
        return Err(Error::invalid(format!(
            "shift needs delta >= 0, noise_sd >= 0, sigma0 > 0; got {delta}, {noise_sd}, {sigma0}"
        )));
    }
    let shift = delta * sigma0 / (sample.k as f64).sqrt();
    let offset = if noise_sd == 0.0 {
        shift
    } else {
        let dist = Normal::new(shift, noise_sd).map_err(|e| Error::invalid(e.to_string()))?;
        rng.sample(dist)
    };
    let mut out = sample.clone();
    if offset != 0.0 {
        out.values.iter_mut().for_each(|v| *v += offset);
    }
    Ok(out)
}

/// A stand-in for the concrete compressive-strength data: 1030 rows of
/// `strength` (MPa) and `cement` (kg/m³) with matching marginal means, standard
/// deviations, ranges and a correlation of about 0.50.
pub fn synthetic_concrete(seed: u64) -> Dataset {
    const N: usize = 1030;
    const RHO: f64 = 0.50;
    let mut rng = stream(seed);
    let cond = (1.0 - RHO * RHO).sqrt();
    let records = (0..N)
        .map(|_| {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let cement = (281.17 + 104.51 * z1).clamp(102.0, 540.0);
            let strength = (35.82 + 16.71 * (RHO * z1 + cond * z2)).clamp(2.33, 82.6);
            ((strength * 100.0).round() / 100.0, (cement * 10.0).round() / 10.0)
        })
        .collect();
    Dataset {
        records,
        y_label: "strength".into(),
        x_label: "cement".into(),
        source: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_reads_named_columns() {
        let f = write_tmp("cement,water,strength\n300,150,40.5\n200, 160 ,30\n");
        let d = ingest_csv(f.path(), "strength", "cement").unwrap();
        assert_eq!(d.records, vec![(40.5, 300.0), (30.0, 200.0)]);
    }

    #[test]
    fn ingest_errors() {
        let empty = write_tmp("strength,cement\n");
        let e = ingest_csv(empty.path(), "strength", "cement").unwrap_err();
        assert!(e.to_string().contains("0 records"), "{e}");

        let bad = write_tmp("strength,cement\n1,2\n3,4\nx,5\n");
        match ingest_csv(bad.path(), "strength", "cement") {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }

        let f = write_tmp("strength,cement\n1,2\n");
        assert!(ingest_csv(f.path(), "strength", "slag").is_err());
        assert!(ingest_csv(Path::new("/nonexistent/file.csv"), "a", "b").is_err());
    }

    #[test]
    fn synthetic_matches_marginals() {
        let d = synthetic_concrete(1);
        assert_eq!(d.len(), 1030);
        assert!((d.correlation() - 0.50).abs() < 0.06, "{}", d.correlation());
        assert!((d.y_mean() - 35.82).abs() < 2.0);
        assert!((d.y_sd() - 16.71).abs() < 1.5);
        assert_eq!(d, synthetic_concrete(1));
    }

    #[test]
    fn nrss_resample_takes_positions_by_x() {
        // y = -x makes the selected ranks visible in the values.
        let data = Dataset {
            records: (0..50).map(|i| (-(i as f64), i as f64)).collect(),
            y_label: "y".into(),
            x_label: "x".into(),
            source: None,
        };
        let mut rng = stream(3);
        let s = resample_design(&data, DesignKind::Nrss, 3, &mut rng).unwrap();
        assert_eq!(s.positions, vec![2, 5, 8]);
        assert!(s.values.windows(2).all(|w| w[0] >= w[1]));
        let tiny = Dataset {
            records: data.records[..8].to_vec(),
            ..data.clone()
        };
        assert!(matches!(
            resample_design(&tiny, DesignKind::Nrss, 3, &mut rng),
            Err(Error::DatasetTooSmall { needed: 9, have: 8 })
        ));
    }

    #[test]
    fn shift_identity_and_mean() {
        let s = RankedSample {
            design: DesignKind::Srs,
            k: 3,
            values: vec![1.0, 2.0, 3.0],
            positions: vec![1, 2, 3],
        };
        let mut rng = stream(5);
        assert_eq!(inject_shift(&s, 0.0, 10.0, 0.0, &mut rng).unwrap(), s);
        let t = inject_shift(&s, 1.2, 10.0, 0.0, &mut rng).unwrap();
        assert!((t.mean() - s.mean() - 1.2 * 10.0 / 3f64.sqrt()).abs() < 1e-12);
        let n = 20_000;
        let avg = (0..n)
            .map(|_| inject_shift(&s, 1.2, 10.0, 2.0, &mut rng).unwrap().mean() - s.mean())
            .sum::<f64>()
            / n as f64;
        assert!((avg - 1.2 * 10.0 / 3f64.sqrt()).abs() < 4.0 * 2.0 / (n as f64).sqrt());
        assert!(inject_shift(&s, -1.0, 1.0, 0.0, &mut rng).is_err());
    }
}
