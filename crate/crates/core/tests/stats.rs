use fredo_core::eval::{
    compare_arms, error_curve, paired_t_test, regularized_incomplete_beta, student_t_two_sided_p,
    univariate_compare, EvalError,
};
use fredo_core::synthetic::{generate, SyntheticSpec};
use fredo_core::{average_tile, AverageTileConfig, DomainMode, ForecasterConfig, SplitSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `P(|T| < t)` for integer dof via the finite trigonometric series.
fn closed_form_two_sided_p(t: f64, dof: u32) -> f64 {
    let theta = (t.abs() / (dof as f64).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    let c2 = c * c;
    let inside = if dof % 2 == 1 {
        let mut sum = 0.0;
        if dof > 1 {
            let mut term = c;
            sum = term;
            let mut k = 2;
            while k + 1 < dof {
                term *= c2 * k as f64 / (k + 1) as f64;
                sum += term;
                k += 2;
            }
        }
        2.0 / std::f64::consts::PI * (theta + s * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1;
        while k + 1 < dof {
            term *= c2 * k as f64 / (k + 1) as f64;
            sum += term;
            k += 2;
        }
        s * sum
    };
    1.0 - inside
}

#[test]
fn p_values_match_closed_form() {
    for dof in 1..=500u32 {
        for t in [0.0, 0.05, 0.4, 1.0, 1.96, 2.5, 4.0, 9.0] {
            let got = student_t_two_sided_p(t, dof as f64);
            let want = closed_form_two_sided_p(t, dof);
            assert!(
                (got - want).abs() < 1e-8,
                "dof {dof} t {t}: {got} vs {want}"
            );
            assert_eq!(got, student_t_two_sided_p(-t, dof as f64));
        }
    }
}

#[test]
fn incomplete_beta_edges_and_symmetry() {
    assert_eq!(regularized_incomplete_beta(0.0, 2.0, 3.0), 0.0);
    assert_eq!(regularized_incomplete_beta(1.0, 2.0, 3.0), 1.0);
    // I_x(1, 1) = x, I_x(a, 1) = x^a
    assert!((regularized_incomplete_beta(0.3, 1.0, 1.0) - 0.3).abs() < 1e-14);
    assert!((regularized_incomplete_beta(0.6, 3.0, 1.0) - 0.216).abs() < 1e-14);
    for (x, a, b) in [(0.2, 2.5, 7.0), (0.9, 0.5, 30.0), (0.5, 12.0, 12.0)] {
        let lhs = regularized_incomplete_beta(x, a, b);
        let rhs = 1.0 - regularized_incomplete_beta(1.0 - x, b, a);
        assert!((lhs - rhs).abs() < 1e-13);
    }
}

#[test]
fn null_rejection_rate_is_nominal() {
    let mut rng = ChaCha8Rng::seed_from_u64(2021);
    let trials = 10_000;
    let mut rejected = 0;
    for _ in 0..trials {
        let a: Vec<f64> = (0..30).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..30).map(|_| rng.sample(StandardNormal)).collect();
        if paired_t_test(&a, &b).unwrap().significant_at_5pct {
            rejected += 1;
        }
    }
    let rate = rejected as f64 / trials as f64;
    assert!((rate - 0.05).abs() <= 0.01, "rate {rate}");
}

#[test]
fn t_test_antisymmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let n = rng.random_range(2..40);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        assert_eq!(ab.t_stat, -ba.t_stat);
        assert_eq!(ab.p_value, ba.p_value);
        assert_eq!(ab.significant_at_5pct, ab.p_value < 0.05);
    }
}

#[test]
fn near_constant_positive_difference_is_significant() {
    let b = vec![0.0; 30];
    let mut a = vec![1.0; 30];
    a[29] = 0.999_999;
    assert!(paired_t_test(&a, &b).unwrap().p_value < 1e-3);
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn average_tile_error_grows_with_horizon() {
    // Periodic signal plus AR(1) noise: the last observed cycle carries
    // information about the near future that fades with the horizon.
    let mut rho_sum = 0.0;
    let seeds = 20;
    for seed in 0..seeds {
        let spec = SyntheticSpec {
            n_series: 4,
            length: 600,
            period: 12,
            seed,
            ..SyntheticSpec::default()
        };
        let m = generate(&spec).unwrap();
        let cfg = AverageTileConfig::new(12, 1).unwrap();
        let (mut preds, mut targets) = (Vec::new(), Vec::new());
        for col in m.columns() {
            for t in (12..col.len() - 36).step_by(5) {
                preds.push(average_tile(&col[t - 12..t], cfg, 36).unwrap());
                targets.push(col[t..t + 36].to_vec());
            }
        }
        let curve = error_curve(&preds, &targets).unwrap();
        let h: Vec<f64> = (0..36).map(|v| v as f64).collect();
        rho_sum += spearman(&h, &curve.horizon_mse);
        let mean = curve.horizon_mse.iter().sum::<f64>() / 36.0;
        assert!((curve.aggregate_mse - mean).abs() <= 1e-12 * mean);
    }
    assert!(rho_sum / seeds as f64 > 0.0);
}

fn toy() -> fredo_core::TimeSeriesMatrix {
    generate(&SyntheticSpec {
        n_series: 3,
        length: 300,
        period: 6,
        seed: 9,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

#[test]
fn self_comparison_has_no_variance() {
    let mut cfg = ForecasterConfig::new(6, 1, 12, 1, DomainMode::Time);
    cfg.train.max_epochs = 2;
    cfg.train.lr = 1e-3;
    let err = compare_arms(&toy(), SplitSpec::STANDARD, &cfg, &cfg, 2, 3).unwrap_err();
    assert!(matches!(err, EvalError::ZeroVarianceDifferences));
}

#[test]
fn compare_reports_equal_sizes_and_is_deterministic() {
    let mut cfg = ForecasterConfig::new(6, 1, 12, 2, DomainMode::Frequency);
    cfg.train.max_epochs = 3;
    cfg.train.lr = 1e-3;
    let r1 = univariate_compare(&toy(), SplitSpec::STANDARD, &cfg, 2, 3).unwrap();
    let r2 = univariate_compare(&toy(), SplitSpec::STANDARD, &cfg, 2, 3).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(r1.per_series.len(), 3);
    for s in &r1.per_series {
        assert_eq!(s.a_params, s.b_params);
    }
    assert_eq!(r1.a_domain, DomainMode::Frequency);
    assert_eq!(r1.b_domain, DomainMode::Time);
}

#[test]
fn single_series_rejected() {
    let one = toy().column_matrix(0);
    let cfg = ForecasterConfig::new(6, 1, 12, 1, DomainMode::Time);
    assert!(matches!(
        univariate_compare(&one, SplitSpec::STANDARD, &cfg, 1, 0),
        Err(EvalError::TooFewSeries(1))
    ));
}
