use super::*;

fn spearman(points: &[(f64, f64)]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (rx, ry) = (ranks(&xs), ranks(&ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn footprint_sizes() {
    assert_eq!(wafer_footprint(52).len(), 2128);
    assert_eq!(wafer_footprint(24).len(), 448);
}

#[test]
fn sparse_fail_counts_within_binomial_interval() {
    // Binomial(2128, 0.01) central interval with 1e-5 tails: [5, 43].
    let spec = SyntheticSpec::new(WaferPattern::SparseRandom { p: 0.01 }, 52, 200, 3);
    for w in synth_wafers(&spec).unwrap() {
        let f = w.wafer.fail_count();
        assert!((5..=43).contains(&f), "{f}");
    }
}

#[test]
fn grid_pattern_is_exact() {
    let spec = SyntheticSpec::new(
        WaferPattern::Grid {
            pitch: 4,
            phase: (1, 2),
            background: 0.0,
        },
        52,
        3,
        9,
    );
    for w in synth_wafers(&spec).unwrap() {
        for d in &w.wafer.dies {
            assert_eq!(!d.pass, d.x % 4 == 1 && d.y % 4 == 2, "{d:?}");
        }
    }
}

#[test]
fn edge_ring_expected_fail_count() {
    // 464 dies lie within 3 of the edge, 1664 inside: 464·0.9 + 1664·0.01 = 434.24.
    let spec = SyntheticSpec::new(WaferPattern::default_for("edge_ring").unwrap(), 52, 50, 1);
    let mean = synth_wafers(&spec)
        .unwrap()
        .iter()
        .map(|w| w.wafer.fail_count() as f64)
        .sum::<f64>()
        / 50.0;
    assert!((mean - 434.24).abs() < 10.0, "{mean}");
}

#[test]
fn growing_a_spec_keeps_existing_wafers() {
    let small = SyntheticSpec::new(WaferPattern::DenseRandom { p: 0.05 }, 24, 5, 11);
    let mut big = small.clone();
    big.wafers_per_lot = 9;
    let a = synth_wafers(&small).unwrap();
    let b = synth_wafers(&big).unwrap();
    assert_eq!(a[..], b[..5]);
}

#[test]
fn invalid_parameters_rejected() {
    let spec = SyntheticSpec::new(WaferPattern::SparseRandom { p: 1.5 }, 24, 1, 0);
    assert!(matches!(synth_wafers(&spec), Err(Error::Config(_))));
    assert!(matches!(WaferPattern::default_for("swirl"), Err(Error::Unknown { .. })));
}

#[test]
fn product_class_counts_are_exact() {
    let mut profile = ProductProfile::product_m();
    profile.wafers = 2000;
    profile.etests = 3;
    let corpus = synth_product(&profile, DEFAULT_M_MIX, 5).unwrap();
    let count = |name: &str| corpus.wafers.iter().filter(|w| w.label == name).count();
    assert_eq!(count("sparse_random"), 1100);
    assert_eq!(count("dense_random"), 600);
    assert_eq!(count("high_density"), 100);
    assert_eq!(count("grid"), 40);
    assert_eq!(count("edge_ring"), 20);
    assert_eq!(count("stripe") + count("quadrant"), 140);
    assert_eq!(corpus.lot_means.len(), 80);
}

#[test]
fn product_round_trips_through_csv() {
    let mut profile = ProductProfile::product_a();
    profile.wafers = 30;
    profile.etests = 4;
    profile.stages = 3;
    let corpus = synth_product(&profile, DEFAULT_M_MIX, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    corpus.write_dir(dir.path()).unwrap();
    let (data, counts) = super::super::ingest(
        &dir.path().join("dies.csv"),
        &dir.path().join("etests.csv"),
        &dir.path().join("tools.csv"),
    )
    .unwrap();
    assert_eq!(counts.wafers, 30);
    assert_eq!(data.etests.len(), 4);
    assert_eq!(data.etests[0].values.len(), 150);
    let mem = corpus.to_production_data();
    assert_eq!(mem.wafers, data.wafers);
    assert!((mem.etests[2].values[7].value - data.etests[2].values[7].value).abs() < 1e-9);
}

#[test]
fn correlation_classes_have_their_shape() {
    for seed in 0..50 {
        for class in [CorrelationClass::NoCorr, CorrelationClass::NoCorrSpiked] {
            let pts = synth_correlation(class, 40, seed).unwrap().points;
            let max = pts.iter().map(|p| p.1).fold(f64::MIN, f64::max);
            let near_max = pts.iter().filter(|p| p.1 >= 0.95 * max).count();
            assert_eq!(near_max, 1, "{class:?} {seed}");
        }
        let a = synth_correlation(CorrelationClass::TrendA, 40, seed).unwrap();
        let b = synth_correlation(CorrelationClass::TrendB, 40, seed).unwrap();
        assert!(spearman(&a.points) < -0.3, "{}", spearman(&a.points));
        assert!(spearman(&b.points) > 0.3);
    }
    assert!(synth_correlation(CorrelationClass::TrendA, 1, 0).is_err());
}

/// Two-sided Mann-Whitney U p-value via the normal approximation with tie
/// correction.
fn mann_whitney_p(a: &[f64], b: &[f64]) -> f64 {
    let mut all: Vec<(f64, usize)> = a.iter().map(|&v| (v, 0)).chain(b.iter().map(|&v| (v, 1))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len();
    let mut ranks = vec![0.0; n];
    let mut ties = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        for r in ranks.iter_mut().take(j + 1).skip(i) {
            *r = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let r1: f64 = all.iter().zip(&ranks).filter(|(p, _)| p.1 == 0).map(|(_, r)| r).sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let mu = n1 * n2 / 2.0;
    let nn = n1 + n2;
    let sigma = (n1 * n2 / 12.0 * ((nn + 1.0) - ties / (nn * (nn - 1.0)))).sqrt();
    let z = ((u - mu).abs() - 0.5) / sigma;
    2.0 * (1.0 - normal_cdf(z))
}

fn normal_cdf(z: f64) -> f64 {
    // Abramowitz-Stegun 7.1.26 on erf
    let x = z / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * x.abs());
    let y = 1.0 - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t + 0.254829592) * t * (-x * x).exp();
    0.5 * (1.0 + y.copysign(x))
}

#[test]
fn mann_whitney_matches_reference_values() {
    // scipy.stats.mannwhitneyu(a, b, method="asymptotic").pvalue
    let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
    let b = [5.5, 6.5, 7.5, 8.5, 9.5, 10.5, 11.5, 12.5];
    assert!((mann_whitney_p(&a, &b) - 0.007_405_5).abs() < 2e-4, "{}", mann_whitney_p(&a, &b));
}

#[test]
fn option_distributions_behave() {
    let params = OptionParams {
        options: 2,
        ..OptionParams::default()
    };
    let mut same = 0;
    let mut low = 0;
    for seed in 0..100 {
        let n = synth_option_distributions(OptionKind::NormalYield, &params, seed).unwrap();
        let (a, b) = (&n["opt000"], &n["opt001"]);
        assert_ne!(a, b);
        if mann_whitney_p(a, b) >= 0.01 {
            same += 1;
        }
        let l = synth_option_distributions(OptionKind::BiasedLow, &params, seed).unwrap();
        if mann_whitney_p(a, &l["opt000"]) < 0.01 {
            low += 1;
        }
    }
    assert!(same >= 95, "{same}");
    assert!(low >= 95, "{low}");
    let few = synth_option_distributions(OptionKind::FewLots, &params, 0).unwrap();
    assert_eq!(few["opt000"].len(), 5);
}
