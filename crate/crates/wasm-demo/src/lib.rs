//! Browser bindings: NRSS design summary, ARL curves and a phase-1/phase-2
//! chart on the synthetic concrete data. Every export returns a JSON string.

use rankset_core::charts::limits_known;
use rankset_core::data::synthetic_concrete;
use rankset_core::designs::{nrss_positions, DesignKind, Ranking};
use rankset_core::moments::{analytic_moment_table, estimator_variance, mc_moment_table};
use rankset_core::rng::derive_seed;
use rankset_core::simulation::{estimate_arl, srs_arl_analytic, Scenario};
use rankset_core::workflow::{phase_workflow, WorkflowConfig};
use serde_json::json;
use wasm_bindgen::prelude::*;

const DELTAS: [f64; 17] = [
    0.0, 0.1, 0.2, 0.3, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.4, 2.8, 3.2, 3.6,
];

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn design(name: &str) -> Result<DesignKind, JsValue> {
    name.parse().map_err(js_err)
}

/// Positions, exact moments and the variance of the mean for each design at `k`.
#[wasm_bindgen]
pub fn design_summary(k: usize) -> Result<String, JsValue> {
    let table = analytic_moment_table(DesignKind::Nrss, k).map_err(js_err)?;
    let variances = DesignKind::ALL
        .iter()
        .map(|&d| {
            let v = estimator_variance(&analytic_moment_table(d, k)?).value;
            Ok(json!({ "design": d, "variance": v, "relative_efficiency": (1.0 / k as f64) / v }))
        })
        .collect::<rankset_core::Result<Vec<_>>>()
        .map_err(js_err)?;
    Ok(json!({
        "k": k,
        "positions": nrss_positions(k).map_err(js_err)?,
        "means": table.means,
        "covariances": table.covariances,
        "designs": variances,
    })
    .to_string())
}

/// Monte Carlo ARL against the shift `delta`, with the exact SRS curve for
/// reference. `rho >= 1` means perfect ranking.
#[wasm_bindgen]
pub fn arl_curve(design_name: &str, k: usize, rho: f64, amplitude: f64, replications: u32, seed: u32) -> Result<String, JsValue> {
    let d = design(design_name)?;
    let seed = seed as u64;
    let ranking = if rho >= 1.0 { Ranking::Perfect } else { Ranking::Imperfect };
    let var = match ranking {
        Ranking::Perfect => estimator_variance(&analytic_moment_table(d, k).map_err(js_err)?).value,
        Ranking::Imperfect if d == DesignKind::Srs => 1.0 / k as f64,
        Ranking::Imperfect => {
            let table = mc_moment_table(d, k, rho, (replications as u64).max(20_000), derive_seed(seed, &[u64::MAX]))
                .map_err(js_err)?;
            estimator_variance(&table).value
        }
    };
    let limits = limits_known(0.0, var, amplitude).map_err(js_err)?.for_design(d, k, rho.min(1.0));
    let points = DELTAS
        .iter()
        .enumerate()
        .map(|(i, &delta)| {
            let scenario = Scenario {
                design: d,
                k,
                delta,
                rho: rho.min(1.0),
                ranking,
                amplitude,
                replications: replications as u64,
                seed: derive_seed(seed, &[i as u64]),
            };
            let arl = match estimate_arl(&scenario, &limits) {
                Ok(e) => json!({ "arl": e.arl, "se": e.se_arl, "censored": false }),
                Err(rankset_core::Error::Censored { lower_bound, .. }) => {
                    json!({ "arl": lower_bound, "se": null, "censored": true })
                }
                Err(e) => return Err(js_err(e)),
            };
            Ok(json!({ "delta": delta, "estimate": arl, "srs_exact": srs_arl_analytic(delta, amplitude) }))
        })
        .collect::<Result<Vec<_>, JsValue>>()?;
    Ok(json!({ "design": d, "k": k, "rho": rho.min(1.0), "amplitude": amplitude, "limits": limits, "points": points })
        .to_string())
}

/// Phase-1 limits from 25 resampled samples and 75 monitored samples of the
/// synthetic concrete data, shifted by `delta` with per-sample noise.
#[wasm_bindgen]
pub fn chart_demo(design_name: &str, k: usize, delta: f64, noise_sd: f64, seed: u32) -> Result<String, JsValue> {
    let data = synthetic_concrete(1);
    let mut cfg = WorkflowConfig::new(design(design_name)?, k, delta, seed as u64);
    cfg.noise_sd = noise_sd;
    let report = phase_workflow(&data, &cfg).map_err(js_err)?;
    serde_json::to_string(&report).map_err(js_err)
}
