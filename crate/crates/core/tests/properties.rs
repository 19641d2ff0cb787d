use proptest::prelude::*;
use rand::Rng;
use rankset_core::charts::{limits_estimated, phase1_estimate, run_length, ChartLimits};
use rankset_core::data::{resample_design, Dataset};
use rankset_core::designs::{DesignKind, ProcessModel, RankedSample, Ranking, Sampler};
use rankset_core::moments::{estimator_variance, mc_moment_table};
use rankset_core::normal;
use rankset_core::rng::stream;
use rankset_core::simulation::{estimate_arl_by_runs, geometric_run_lengths, Scenario};

/// One-sample Kolmogorov–Smirnov statistic against Φ.
fn ks_normal(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal::cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn uninformative_ranking_gives_normal_draws() {
    // At rho = 0 every NRSS position is a plain N(0, 1) draw.
    let mut s = Sampler::new(DesignKind::Nrss, 3, ProcessModel::standard(0.0).unwrap(), Ranking::Imperfect).unwrap();
    let mut rng = stream(21);
    let n = 100_000;
    let mut per_pos = vec![Vec::with_capacity(n); 3];
    let mut buf = [0.0; 3];
    for _ in 0..n {
        s.draw_into(&mut rng, &mut buf);
        for (p, v) in per_pos.iter_mut().zip(buf) {
            p.push(v);
        }
    }
    // alpha = 1e-3 critical value of sqrt(n) D.
    let crit = 1.949 / (n as f64).sqrt();
    for p in &per_pos {
        let d = ks_normal(p.clone());
        assert!(d < crit, "KS {d} >= {crit}");
    }
    let r01 = per_pos[0].iter().zip(&per_pos[1]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    assert!(r01.abs() < 4.0 / (n as f64).sqrt(), "{r01}");
}

#[test]
fn explicit_runs_match_geometric_law() {
    // SRS k=4 at delta=1.2 has p = Φ(1.2-3) + Φ(-1.2-3).
    let p = normal::cdf(1.2 - 3.0) + normal::cdf(-1.2 - 3.0);
    let s = Scenario {
        design: DesignKind::Srs,
        k: 4,
        delta: 1.2,
        rho: 1.0,
        ranking: Ranking::Perfect,
        amplitude: 3.0,
        replications: 100_000,
        seed: 5,
    };
    let limits = rankset_core::charts::limits_known(0.0, 0.25, 3.0).unwrap().for_design(DesignKind::Srs, 4, 1.0);
    let (summary, explicit) = estimate_arl_by_runs(&s, &limits, 20_000, 1_000_000).unwrap();
    let shortcut = geometric_run_lengths(p, 20_000, 6).unwrap();

    // Decile bins of the geometric law; both samples are checked against it.
    let cdf = |l: u64| 1.0 - (1.0 - p).powi(l as i32);
    let mut edges = Vec::new();
    let mut l = 1;
    for q in 1..10 {
        while cdf(l) < q as f64 / 10.0 {
            l += 1;
        }
        edges.push(l);
    }
    edges.dedup();
    let chi2 = |xs: &[u64]| {
        let bins = edges.len() + 1;
        let mut counts = vec![0.0; bins];
        for &x in xs {
            counts[edges.iter().position(|&e| x <= e).unwrap_or(bins - 1)] += 1.0;
        }
        let mut lo_cdf = 0.0;
        let n = xs.len() as f64;
        let mut stat = 0.0;
        for (b, c) in counts.iter().enumerate() {
            let hi_cdf = if b < edges.len() { cdf(edges[b]) } else { 1.0 };
            let expected = n * (hi_cdf - lo_cdf);
            stat += (c - expected).powi(2) / expected;
            lo_cdf = hi_cdf;
        }
        (stat, bins - 1)
    };
    for xs in [&explicit, &shortcut] {
        let (stat, dof) = chi2(xs);
        // Upper 0.1% point of chi-square with at most 9 dof is 27.88.
        assert!(dof <= 9 && stat < 27.88, "chi2 {stat} on {dof} dof");
    }
    let mean_shortcut = shortcut.iter().sum::<u64>() as f64 / shortcut.len() as f64;
    let se_shortcut = ((1.0 - p) / (p * p) / shortcut.len() as f64).sqrt();
    assert!((summary.mean - mean_shortcut).abs() < 4.0 * (summary.se.powi(2) + se_shortcut.powi(2)).sqrt());
}

#[test]
fn nrss_variance_nonincreasing_in_rho() {
    let rhos = [0.0, 0.25, 0.5, 0.75, 0.9, 1.0];
    for k in [3, 4] {
        let est: Vec<(f64, f64)> = rhos
            .iter()
            .enumerate()
            .map(|(i, &rho)| {
                let t = mc_moment_table(DesignKind::Nrss, k, rho, 200_000, 40 + i as u64).unwrap();
                let se = t.standard_errors.as_ref().unwrap().estimator_variance;
                (estimator_variance(&t).value, se)
            })
            .collect();
        for w in est.windows(2) {
            let ((a, sa), (b, sb)) = (w[0], w[1]);
            assert!(b <= a + 4.0 * (sa * sa + sb * sb).sqrt(), "k={k}: {a} -> {b}");
        }
        assert!(est[5].0 < 0.6 * est[0].0);
    }
}

#[test]
fn srs_resampling_is_uniform_with_replacement() {
    let data = Dataset {
        records: (0..10).map(|i| (i as f64, (9 - i) as f64)).collect(),
        y_label: "y".into(),
        x_label: "x".into(),
        source: None,
    };
    let mut rng = stream(8);
    let mut counts = [0.0f64; 10];
    let draws = 100_000 / 3;
    for _ in 0..draws {
        for v in resample_design(&data, DesignKind::Srs, 3, &mut rng).unwrap().values {
            counts[v as usize] += 1.0;
        }
    }
    // Direct oracle: plain with-replacement index draws from an independent stream.
    let mut oracle = [0.0f64; 10];
    let mut rng2 = stream(9);
    for _ in 0..draws * 3 {
        oracle[rng2.random_range(0..10)] += 1.0;
    }
    let n = (draws * 3) as f64;
    for c in [counts, oracle] {
        let chi2: f64 = c.iter().map(|&x| (x - n / 10.0).powi(2) / (n / 10.0)).sum();
        // 0.1% point with 9 dof.
        assert!(chi2 < 27.88, "{chi2}");
    }
}

fn sample(design: DesignKind, k: usize, values: Vec<f64>) -> RankedSample {
    RankedSample {
        design,
        k,
        positions: rankset_core::designs::selected_ranks(design, k).unwrap(),
        values,
    }
}

fn design_strategy() -> impl Strategy<Value = DesignKind> {
    prop::sample::select(DesignKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phase1_matches_two_pass_oracle(
        design in design_strategy(),
        k in 2usize..6,
        m in 2usize..30,
        seed in any::<u64>(),
    ) {
        let mut rng = stream(seed);
        let samples: Vec<RankedSample> = (0..m)
            .map(|_| sample(design, k, (0..k).map(|_| rng.random_range(-5.0..5.0)).collect()))
            .collect();
        let est = phase1_estimate(&samples).unwrap();
        // The variance of the sample mean is the sample variance of the means.
        let means: Vec<f64> = samples.iter().map(RankedSample::mean).collect();
        let grand = means.iter().sum::<f64>() / m as f64;
        let var = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0);
        prop_assert!((est.grand_mean - grand).abs() < 1e-12);
        prop_assert!((est.estimated_var_mean - var).abs() < 1e-10 * (1.0 + var));
    }

    #[test]
    fn limits_and_run_lengths_are_equivariant(
        design in design_strategy(),
        k in 2usize..6,
        scale in 0.01f64..100.0,
        shift in -50.0f64..50.0,
        seed in any::<u64>(),
    ) {
        let mut s = Sampler::new(design, k, ProcessModel::standard(1.0).unwrap(), Ranking::Perfect).unwrap();
        let mut rng = stream(seed);
        let phase1: Vec<RankedSample> = (0..25).map(|_| s.draw(&mut rng)).collect();
        let phase2: Vec<f64> = (0..200).map(|_| s.draw(&mut rng).mean() * 1.3 + 0.4).collect();
        let base: ChartLimits = limits_estimated(&phase1_estimate(&phase1).unwrap(), 3.0).unwrap();
        let moved: Vec<RankedSample> = phase1
            .iter()
            .map(|p| RankedSample { values: p.values.iter().map(|v| scale * v + shift).collect(), ..p.clone() })
            .collect();
        let lim = limits_estimated(&phase1_estimate(&moved).unwrap(), 3.0).unwrap();
        let tol = 1e-9 * (1.0 + shift.abs() + scale);
        prop_assert!((lim.center - (scale * base.center + shift)).abs() < tol);
        prop_assert!((lim.upper - (scale * base.upper + shift)).abs() < tol);
        prop_assert!((lim.lower - (scale * base.lower + shift)).abs() < tol);
        // Points are kept away from the limits so rounding cannot flip a flag.
        let safe: Vec<f64> = phase2
            .iter()
            .copied()
            .filter(|p| (p - base.upper).abs() > 1e-6 && (p - base.lower).abs() > 1e-6)
            .collect();
        prop_assert_eq!(
            run_length(&base, safe.iter().copied()),
            run_length(&lim, safe.iter().map(|p| scale * p + shift))
        );
    }
}
