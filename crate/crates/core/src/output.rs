//! CSV/JSON emission. CSV numbers carry 6 significant digits; JSON carries
//! full precision.

use std::path::Path;

use serde::Serialize;

use crate::designs::DesignKind;
use crate::error::{Error, Result};
use crate::simulation::{BiasRow, EfficiencyRow, GridRow};

/// `%g`-style formatting with 6 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..6).contains(&exp) {
        return format!("{}e{exp}", trim_zeros(mantissa));
    }
    trim_zeros(&format!("{x:.*}", (5 - exp) as usize)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn parse_f64(s: &str, path: &Path, line: u64) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        message: format!("not a number: '{s}'"),
    })
}

pub const GRID_HEADER: [&str; 10] = [
    "design",
    "k",
    "delta",
    "rho",
    "amplitude",
    "replications",
    "exceedances",
    "arl",
    "se_arl",
    "seed",
];

pub fn write_grid_csv(rows: &[GridRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(GRID_HEADER)?;
    for r in rows {
        w.write_record([
            r.design.name().to_string(),
            r.k.to_string(),
            fmt_sig(r.delta),
            fmt_sig(r.rho),
            fmt_sig(r.amplitude),
            r.replications.to_string(),
            r.exceedances.to_string(),
            fmt_sig(r.arl),
            fmt_sig(r.se_arl),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid_csv(path: &Path) -> Result<Vec<GridRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != GRID_HEADER {
        return Err(Error::Data {
            path: path.to_path_buf(),
            message: format!("unexpected grid header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let int = |i: usize| -> Result<u64> {
            rec[i].parse().map_err(|_| Error::MalformedRow {
                path: path.to_path_buf(),
                line,
                message: format!("column {} is not an integer: '{}'", GRID_HEADER[i], &rec[i]),
            })
        };
        let design: DesignKind = rec[0].parse().map_err(|e: Error| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        rows.push(GridRow {
            design,
            k: int(1)? as usize,
            delta: parse_f64(&rec[2], path, line)?,
            rho: parse_f64(&rec[3], path, line)?,
            amplitude: parse_f64(&rec[4], path, line)?,
            replications: int(5)?,
            exceedances: int(6)?,
            arl: parse_f64(&rec[7], path, line)?,
            se_arl: parse_f64(&rec[8], path, line)?,
            seed: int(9)?,
        });
    }
    Ok(rows)
}

/// A `delta`-by-column table of ARLs; missing cells are empty in CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct WideTable {
    pub columns: Vec<String>,
    pub deltas: Vec<f64>,
    pub cells: Vec<Vec<Option<f64>>>,
}

pub const WIDE_DESIGN_ORDER: [DesignKind; 5] = [
    DesignKind::Srs,
    DesignKind::Rss,
    DesignKind::Erss,
    DesignKind::Mrss,
    DesignKind::Nrss,
];

fn sorted_deltas<'a>(rows: impl Iterator<Item = &'a GridRow>) -> Vec<f64> {
    let mut d: Vec<f64> = rows.map(|r| r.delta).collect();
    d.sort_by(f64::total_cmp);
    d.dedup();
    d
}

fn arl_of(r: &GridRow) -> Option<f64> {
    r.arl.is_finite().then_some(r.arl)
}

impl WideTable {
    /// Columns `SRS,RSS,ERSS,MRSS,NRSS` at one `k` (the perfect-ranking tables).
    pub fn by_design(rows: &[GridRow], k: usize) -> Self {
        let at_k: Vec<&GridRow> = rows.iter().filter(|r| r.k == k).collect();
        let deltas = sorted_deltas(at_k.iter().copied());
        let cells = deltas
            .iter()
            .map(|&d| {
                WIDE_DESIGN_ORDER
                    .iter()
                    .map(|&des| at_k.iter().find(|r| r.design == des && r.delta == d).and_then(|r| arl_of(r)))
                    .collect()
            })
            .collect();
        Self {
            columns: WIDE_DESIGN_ORDER.iter().map(|d| d.name().to_string()).collect(),
            deltas,
            cells,
        }
    }

    /// One column per `rho` for a single design and `k` (the imperfect-ranking tables).
    pub fn by_rho(rows: &[GridRow], design: DesignKind, k: usize) -> Self {
        let sel: Vec<&GridRow> = rows.iter().filter(|r| r.k == k && r.design == design).collect();
        let deltas = sorted_deltas(sel.iter().copied());
        let mut rhos: Vec<f64> = sel.iter().map(|r| r.rho).collect();
        rhos.sort_by(f64::total_cmp);
        rhos.dedup();
        let cells = deltas
            .iter()
            .map(|&d| {
                rhos.iter()
                    .map(|&rho| sel.iter().find(|r| r.rho == rho && r.delta == d).and_then(|r| arl_of(r)))
                    .collect()
            })
            .collect();
        Self {
            columns: rhos.iter().map(|&r| fmt_sig(r)).collect(),
            deltas,
            cells,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(std::iter::once("delta").chain(self.columns.iter().map(String::as_str)))?;
        for (d, row) in self.deltas.iter().zip(&self.cells) {
            w.write_record(
                std::iter::once(fmt_sig(*d)).chain(row.iter().map(|c| c.map(fmt_sig).unwrap_or_default())),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let header = reader.headers()?.clone();
        if header.get(0) != Some("delta") {
            return Err(Error::Data {
                path: path.to_path_buf(),
                message: "first column must be 'delta'".into(),
            });
        }
        let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let (mut deltas, mut cells) = (Vec::new(), Vec::new());
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            deltas.push(parse_f64(&rec[0], path, line)?);
            cells.push(
                rec.iter()
                    .skip(1)
                    .map(|c| if c.is_empty() { Ok(None) } else { parse_f64(c, path, line).map(Some) })
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(Self { columns, deltas, cells })
    }
}

pub fn write_efficiency_csv(rows: &[EfficiencyRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["design", "k", "rho", "ratio", "cells"])?;
    for r in rows {
        w.write_record([
            r.design.name().to_string(),
            r.k.to_string(),
            fmt_sig(r.rho),
            fmt_sig(r.ratio),
            r.cells.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bias_csv(rows: &[BiasRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "m", "replications", "reference", "mean_estimate", "relative_bias", "se", "seed"])?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.m.to_string(),
            r.replications.to_string(),
            fmt_sig(r.reference),
            fmt_sig(r.mean_estimate),
            fmt_sig(r.relative_bias),
            fmt_sig(r.se),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}
