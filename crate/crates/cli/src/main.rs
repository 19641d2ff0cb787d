use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Parser, Subcommand};
use rankset_core::data::{ingest_csv, synthetic_concrete, Dataset};
use rankset_core::designs::{nrss_positions, DesignKind, Ranking};
use rankset_core::moments::{analytic_moment_table, estimator_variance, mc_moment_table, MomentCache};
use rankset_core::output::{write_bias_csv, write_efficiency_csv, write_grid_csv, write_json, WideTable};
use rankset_core::rng::with_threads;
use rankset_core::simulation::{
    bias_study, calibrate_amplitude, efficiency_summary, run_grid, AmplitudeRule, GridOutput, GridSpec,
    DEFAULT_REPLICATIONS, TARGET_ARL0,
};
use rankset_core::workflow::{phase_workflow, WorkflowConfig};
use serde_json::json;

const DEFAULT_SEED: u64 = 20_170_523;
const FAST_REPLICATIONS: u64 = 100_000;
const TABLE_DELTAS: &str = "0,0.1,0.2,0.3,0.4,0.8,1.2,1.6,2.0,2.4,3.2";
const TABLE_RHOS: [f64; 6] = [0.0, 0.25, 0.5, 0.75, 0.9, 1.0];

#[derive(Parser)]
#[command(name = "rankset-spc", version, about = "Ranked-set sampling designs and Shewhart mean charts")]
struct Cli {
    /// Base seed; identical invocations give identical outputs.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "RANKSET_SPC_THREADS")]
    threads: Option<usize>,
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the NRSS rank positions for each k.
    Positions {
        #[arg(long = "k", value_delimiter = ',', default_value = "3,4,5")]
        ks: Vec<usize>,
    },
    /// Calibrate the limit amplitude A to a target in-control ARL.
    Calibrate {
        #[arg(long, value_parser = parse_design)]
        design: DesignKind,
        #[arg(long)]
        k: usize,
        /// Rank on a concomitant with this correlation (default: perfect ranking).
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value_t = TARGET_ARL0)]
        target_arl0: f64,
        #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
        replications: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ARL over a (design, k, delta, rho) grid, as long-format CSV plus a JSON sidecar.
    ArlGrid {
        #[arg(long, value_delimiter = ',', value_parser = parse_design, default_value = "nrss,srs")]
        designs: Vec<DesignKind>,
        #[arg(long = "k", value_delimiter = ',', default_value = "3,4,5")]
        ks: Vec<usize>,
        /// Comma list; `a,b,...,c` expands to an arithmetic progression.
        #[arg(long, default_value = TABLE_DELTAS)]
        deltas: String,
        /// Concomitant ranking at these correlations with A = 3; omit for
        /// perfect ranking with calibrated A.
        #[arg(long, value_delimiter = ',')]
        rhos: Option<Vec<f64>>,
        #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
        replications: u64,
        /// Replications for amplitude calibration (default: --replications).
        #[arg(long)]
        calibration_replications: Option<u64>,
        /// Fixed amplitude instead of the default rule.
        #[arg(long)]
        amplitude: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
        moment_replications: u64,
        /// Directory for cached Monte Carlo moment tables.
        #[arg(long)]
        moment_cache: Option<PathBuf>,
        /// 10^5 replications everywhere.
        #[arg(long)]
        fast: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Moment table of a design's measured units (quadrature, or Monte Carlo with --rho).
    Moments {
        #[arg(long, value_parser = parse_design)]
        design: DesignKind,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
        replications: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relative bias of the phase-1 variance estimator for NRSS.
    BiasStudy {
        #[arg(long = "k", value_delimiter = ',', default_value = "3,4,5")]
        ks: Vec<usize>,
        #[arg(long = "m", value_delimiter = ',', default_value = "5,10,15,20,25")]
        ms: Vec<usize>,
        #[arg(long, default_value_t = 50_000)]
        replications: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Phase-1 limits and phase-2 monitoring on a dataset.
    Chart {
        /// CSV file; omit to use the built-in synthetic concrete stand-in.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "strength")]
        y: String,
        #[arg(long, default_value = "cement")]
        x: String,
        #[arg(long, value_parser = parse_design)]
        design: DesignKind,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 25)]
        m1: usize,
        #[arg(long, default_value_t = 75)]
        m2: usize,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        noise_sd: f64,
        #[arg(long, default_value_t = 3.0)]
        amplitude: f64,
        #[arg(long)]
        out: PathBuf,
        /// Per-point CSV for plotting.
        #[arg(long)]
        plot_csv: Option<PathBuf>,
    },
    /// Reproduce the perfect- and concomitant-ranking ARL tables and efficiency summaries.
    Tables {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long = "k", value_delimiter = ',', default_value = "3,4,5")]
        ks: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
        replications: u64,
        /// Replications for amplitude calibration (default: 10 x --replications).
        #[arg(long)]
        calibration_replications: Option<u64>,
        #[arg(long)]
        fast: bool,
    },
    /// Write the synthetic concrete stand-in dataset as CSV.
    SynthData {
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_design(s: &str) -> std::result::Result<DesignKind, String> {
    s.parse().map_err(|e: rankset_core::Error| e.to_string())
}

/// Parses `0,0.1,...,0.5,1` style lists.
fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let tokens: Vec<&str> = spec.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    let mut out: Vec<f64> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i] == "..." {
            let (n, end) = (out.len(), tokens.get(i + 1).context("'...' needs an end value")?);
            if n < 2 {
                bail!("'...' needs two preceding values");
            }
            let end: f64 = end.parse().with_context(|| format!("bad grid value '{end}'"))?;
            let (start, step) = (out[n - 2], out[n - 1] - out[n - 2]);
            if !(step > 0.0) || end < out[n - 1] {
                bail!("'...' needs an increasing progression");
            }
            let steps = ((end - start) / step).round() as usize;
            for j in 2..=steps {
                out.push(((start + step * j as f64) * 1e9).round() / 1e9);
            }
            i += 2;
            continue;
        }
        out.push(tokens[i].parse().with_context(|| format!("bad grid value '{}'", tokens[i]))?);
        i += 1;
    }
    if out.is_empty() {
        bail!("empty grid");
    }
    Ok(out)
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_grid(output: &GridOutput, out: &Path, seed: u64, started: Instant) -> Result<()> {
    write_grid_csv(&output.rows(), out).with_context(|| format!("writing {}", out.display()))?;
    let failed: Vec<_> = output.failed().collect();
    let sidecar = json!({
        "tool": "rankset-spc",
        "version": env!("CARGO_PKG_VERSION"),
        "base_seed": seed,
        "grid": output.spec,
        "cell_seeds": output.cells.iter().map(|c| json!({
            "design": c.design, "k": c.k, "delta": c.delta, "rho": c.rho, "seed": c.seed
        })).collect::<Vec<_>>(),
        "calibrations": output.calibrations,
        "limits": output.limits,
        "failed_cells": failed,
        "wall_time_secs": started.elapsed().as_secs_f64(),
    });
    write_json(&sidecar, &sidecar_path(out))?;
    for c in &failed {
        log::warn!("failed cell {} k={} delta={} rho={}", c.design, c.k, c.delta, c.rho);
    }
    Ok(())
}

fn load_data(path: Option<&Path>, y: &str, x: &str, seed: u64) -> Result<Dataset> {
    match path {
        Some(p) => Ok(ingest_csv(p, y, x)?),
        None => {
            log::info!("no --data given; using the synthetic concrete stand-in");
            Ok(synthetic_concrete(seed))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let started = Instant::now();
    match cli.command {
        Command::Positions { ks } => {
            for k in ks {
                let p = nrss_positions(k)?;
                println!("k={k}: {}", p.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" "));
            }
        }
        Command::Calibrate {
            design,
            k,
            rho,
            target_arl0,
            replications,
            out,
        } => {
            let ranking = if rho.is_some() { Ranking::Imperfect } else { Ranking::Perfect };
            let result = calibrate_amplitude(design, k, ranking, rho.unwrap_or(1.0), target_arl0, replications, seed)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
            if let Some(out) = out {
                write_json(&result, &out)?;
            }
        }
        Command::ArlGrid {
            designs,
            ks,
            deltas,
            rhos,
            replications,
            calibration_replications,
            amplitude,
            moment_replications,
            moment_cache,
            fast,
            out,
        } => {
            let deltas = parse_grid(&deltas)?;
            let (replications, moment_replications) = if fast {
                (FAST_REPLICATIONS, FAST_REPLICATIONS)
            } else {
                (replications, moment_replications)
            };
            let calibration = if fast { FAST_REPLICATIONS } else { calibration_replications.unwrap_or(replications) };
            let mut spec = match rhos {
                Some(r) => GridSpec::imperfect(designs, ks, deltas, r, replications, seed),
                None => {
                    let mut s = GridSpec::perfect(designs, ks, deltas, replications, seed);
                    s.amplitude = AmplitudeRule::Calibrated {
                        target_arl0: TARGET_ARL0,
                        replications: calibration,
                    };
                    s
                }
            };
            spec.moment_replications = moment_replications;
            if let Some(a) = amplitude {
                spec.amplitude = AmplitudeRule::Fixed { amplitude: a };
            }
            let cache = moment_cache.map(MomentCache::new);
            let output = run_grid(&spec, cache.as_ref())?;
            write_grid(&output, &out, seed, started)?;
            println!(
                "{} cells ({} failed) written to {}",
                output.cells.len(),
                output.failed().count(),
                out.display()
            );
        }
        Command::Moments {
            design,
            k,
            rho,
            replications,
            out,
        } => {
            let table = match rho {
                Some(r) => mc_moment_table(design, k, r, replications, seed)?,
                None => analytic_moment_table(design, k)?,
            };
            let var = estimator_variance(&table);
            println!("{}", serde_json::to_string_pretty(&table)?);
            println!("estimator variance: {}", var.value);
            if let Some(out) = out {
                table.save_json(&out)?;
            }
        }
        Command::BiasStudy {
            ks,
            ms,
            replications,
            out,
        } => {
            let rows = bias_study(&ks, &ms, replications, seed)?;
            println!("k,m,relative_bias,se");
            for r in &rows {
                println!("{},{},{:.6},{:.6}", r.k, r.m, r.relative_bias, r.se);
            }
            if let Some(out) = out {
                write_bias_csv(&rows, &out)?;
            }
        }
        Command::Chart {
            data,
            y,
            x,
            design,
            k,
            m1,
            m2,
            delta,
            noise_sd,
            amplitude,
            out,
            plot_csv,
        } => {
            let dataset = load_data(data.as_deref(), &y, &x, seed)?;
            let cfg = WorkflowConfig {
                design,
                k,
                m1,
                m2,
                delta,
                noise_sd,
                amplitude,
                seed,
            };
            let report = phase_workflow(&dataset, &cfg)?;
            write_json(&report, &out)?;
            if let Some(p) = plot_csv {
                let mut w = String::from("index,mean,lower,center,upper,outside\n");
                for (i, (m, f)) in report.points.iter().zip(&report.flags).enumerate() {
                    w.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        i + 1,
                        rankset_core::output::fmt_sig(*m),
                        rankset_core::output::fmt_sig(report.limits.lower),
                        rankset_core::output::fmt_sig(report.limits.center),
                        rankset_core::output::fmt_sig(report.limits.upper),
                        f
                    ));
                }
                fs::write(&p, w)?;
            }
            println!(
                "{design} k={k}: limits [{:.4}, {:.4}], {} of {} points outside",
                report.limits.lower,
                report.limits.upper,
                report.counts,
                report.points.len()
            );
        }
        Command::Tables {
            out_dir,
            ks,
            replications,
            calibration_replications,
            fast,
        } => {
            let replications = if fast { FAST_REPLICATIONS } else { replications };
            let calibration = calibration_replications.unwrap_or(10 * replications);
            let deltas = parse_grid(TABLE_DELTAS)?;
            fs::create_dir_all(&out_dir)?;

            let mut perfect = GridSpec::perfect(DesignKind::ALL.to_vec(), ks.clone(), deltas.clone(), replications, seed);
            perfect.amplitude = AmplitudeRule::Calibrated {
                target_arl0: TARGET_ARL0,
                replications: calibration,
            };
            let t = Instant::now();
            let perfect_out = run_grid(&perfect, None)?;
            write_grid(&perfect_out, &out_dir.join("grid_perfect.csv"), seed, t)?;
            let perfect_rows = perfect_out.rows();

            let mut imperfect = GridSpec::imperfect(
                DesignKind::ALL.to_vec(),
                ks.clone(),
                deltas,
                TABLE_RHOS.to_vec(),
                replications,
                seed,
            );
            imperfect.moment_replications = replications;
            let t = Instant::now();
            let imperfect_out = run_grid(&imperfect, None)?;
            write_grid(&imperfect_out, &out_dir.join("grid_imperfect.csv"), seed, t)?;
            let imperfect_rows = imperfect_out.rows();

            for &k in &ks {
                WideTable::by_design(&perfect_rows, k).write_csv(&out_dir.join(format!("table{}.csv", k - 2)))?;
                WideTable::by_rho(&imperfect_rows, DesignKind::Nrss, k)
                    .write_csv(&out_dir.join(format!("table{}.csv", k + 1)))?;
            }
            write_efficiency_csv(&efficiency_summary(&perfect_rows)?, &out_dir.join("figure1.csv"))?;
            write_efficiency_csv(&efficiency_summary(&imperfect_rows)?, &out_dir.join("figure2.csv"))?;
            println!("tables written to {}", out_dir.display());
        }
        Command::SynthData { out } => {
            synthetic_concrete(seed).write_csv(&out)?;
            println!("1030 rows written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli.threads {
        Some(n) => with_threads(n, || run(cli)),
        None => run(cli),
    }
}
