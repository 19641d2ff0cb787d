use rankset_wasm::{arl_curve, chart_demo, design_summary};

fn parse(s: &str) -> serde_json::Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn summary_srs_row_is_plain_mean() {
    for k in [3, 4, 5] {
        let v = parse(&design_summary(k).unwrap());
        let rows = v["designs"].as_array().unwrap();
        let srs = rows.iter().find(|r| r["design"] == "SRS").unwrap();
        assert!((srs["variance"].as_f64().unwrap() - 1.0 / k as f64).abs() < 1e-12);
        assert!((srs["relative_efficiency"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        for r in rows {
            assert!(r["relative_efficiency"].as_f64().unwrap() >= 1.0 - 1e-12, "{r}");
        }
    }
}

#[test]
fn srs_curve_tracks_exact_overlay() {
    let v = parse(&arl_curve("srs", 3, 1.0, 3.0, 200_000, 11).unwrap());
    for p in v["points"].as_array().unwrap() {
        let exact = p["srs_exact"].as_f64().unwrap();
        let est = &p["estimate"];
        if est["censored"].as_bool().unwrap() {
            continue;
        }
        let (arl, se) = (est["arl"].as_f64().unwrap(), est["se"].as_f64().unwrap());
        assert!((arl - exact).abs() < 4.0 * se + 1e-9, "delta {}: {arl} vs {exact}", p["delta"]);
    }
}

#[test]
fn chart_flags_agree_with_limits() {
    let v = parse(&chart_demo("rss", 4, 0.0, 0.0, 9).unwrap());
    let (lo, hi) = (v["limits"]["lower"].as_f64().unwrap(), v["limits"]["upper"].as_f64().unwrap());
    let flagged = v["points"]
        .as_array()
        .unwrap()
        .iter()
        .zip(v["flags"].as_array().unwrap())
        .filter(|(p, f)| {
            let p = p.as_f64().unwrap();
            assert_eq!(f.as_bool().unwrap(), p < lo || p > hi);
            f.as_bool().unwrap()
        })
        .count();
    assert_eq!(v["counts"].as_u64().unwrap(), flagged as u64);
}
