mod common;

use kpcast::dataset::{
    class_histogram, expand_balance, make_windows_with_stride, window_count, BalanceKey, LabelConfig, WindowConfig,
};
use kpcast::eval::{error_summary, ErrorSummary};
use kpcast::forecast::{expected_kp, ForecastReport, ForecastRow};
use kpcast::loss::{wasserstein_1d, WassersteinVariant};
use kpcast::model::DistVector;
use kpcast::nn::softmax;
use kpcast::synthetic::{synthetic_table, SyntheticSpec};
use proptest::prelude::*;

fn dist(k: usize) -> impl Strategy<Value = DistVector> {
    prop::collection::vec(0.0f64..1.0, k).prop_map(|mut v| {
        v[0] += 1e-3;
        let s: f64 = v.iter().sum();
        DistVector::new(v.iter().map(|x| x / s).collect()).unwrap()
    })
}

fn triple() -> impl Strategy<Value = (DistVector, DistVector, DistVector)> {
    (2usize..30).prop_flat_map(|k| (dist(k), dist(k), dist(k)))
}

const SUM: WassersteinVariant = WassersteinVariant::Sum;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn wasserstein_is_a_metric((p, q, r) in triple()) {
        let d = |a: &DistVector, b: &DistVector| wasserstein_1d(a, b, SUM).unwrap();
        prop_assert!(d(&p, &q) >= 0.0);
        prop_assert_eq!(d(&p, &q), d(&q, &p));
        prop_assert_eq!(d(&p, &p), 0.0);
        prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-12);
    }

    #[test]
    fn wasserstein_matches_quantile_oracle((p, q, _r) in triple()) {
        let w = wasserstein_1d(&p, &q, SUM).unwrap();
        prop_assert!((w - common::emd_quantile(p.probs(), q.probs())).abs() < 1e-9);
        let mean = wasserstein_1d(&p, &q, WassersteinVariant::Mean).unwrap();
        prop_assert!((mean * p.len() as f64 - w).abs() < 1e-12);
    }

    #[test]
    fn shifted_deltas_are_one_apart(k in 2usize..40, i in 0usize..39) {
        let i = i % (k - 1);
        let a = DistVector::delta(k, i);
        let b = DistVector::delta(k, i + 1);
        prop_assert_eq!(wasserstein_1d(&a, &b, SUM).unwrap(), 1.0);
        prop_assert!((wasserstein_1d(&a, &b, WassersteinVariant::Mean).unwrap() - 1.0 / k as f64).abs() < 1e-15);
    }

    #[test]
    fn softmax_is_a_distribution(v in prop::collection::vec(-50.0f64..50.0, 1..40), shift in -100.0f64..100.0) {
        let p = softmax(&v);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn window_count_formula(rows in 0usize..160, input in 1usize..30, long in any::<bool>(), stride in 1usize..12) {
        let output = if long { 40 } else { 24 };
        let expected = common::count_windows_by_enumeration(rows, input, output, stride);
        prop_assert_eq!(window_count(rows, input, output, stride), expected);
        if rows >= input + output {
            let spec = SyntheticSpec { rows, image_dim: 2, regime_min: 5, regime_max: 9, ..SyntheticSpec::default() };
            let table = synthetic_table(&spec).unwrap();
            let w = WindowConfig { input_steps: input, output_steps: output, stride_train: stride, stride_daily: 8 };
            let windows = make_windows_with_stride(&table, &w, &LabelConfig::default(), stride).unwrap();
            prop_assert_eq!(windows.len(), expected);
            for (i, s) in windows.iter().enumerate() {
                prop_assert_eq!(s.t0(), table.timestamps()[i * stride]);
            }
        }
    }

    #[test]
    fn label_high_iff_kp_at_least_seven(k in 0usize..28) {
        let kp = k as f64 / 3.0;
        prop_assert_eq!(LabelConfig::default().high(kp), kp >= 7.0);
    }

    #[test]
    fn balancing_equalizes_classes(seed in 0u64..1000, rows in 60usize..200) {
        let spec = SyntheticSpec { rows, image_dim: 2, regime_min: 3, regime_max: 12, seed, ..SyntheticSpec::default() };
        let table = synthetic_table(&spec).unwrap();
        let w = WindowConfig { input_steps: 4, output_steps: 24, stride_train: 1, stride_daily: 8 };
        let windows = make_windows_with_stride(&table, &w, &LabelConfig::default(), 1).unwrap();
        let before = class_histogram(&windows, BalanceKey::MaxInput);
        let balanced = expand_balance(&windows, BalanceKey::MaxInput, seed).unwrap();
        let after = class_histogram(&balanced, BalanceKey::MaxInput);
        prop_assert_eq!(before.keys().collect::<Vec<_>>(), after.keys().collect::<Vec<_>>());
        let top = *before.values().max().unwrap();
        prop_assert!(after.values().all(|&c| c == top));
    }

    #[test]
    fn error_summary_invariants(errors in prop::collection::vec(-12.0f64..12.0, 1..200), seed in any::<u64>()) {
        let s = ErrorSummary::of(1, &errors);
        prop_assert!(s.rmse + 1e-12 >= s.bias.abs());
        prop_assert_eq!(s.histogram.iter().sum::<usize>(), errors.len());
        prop_assert_eq!(s.count, errors.len());

        let rows: Vec<ForecastRow> = errors.iter().enumerate().map(|(i, &e)| ForecastRow {
            day: 0, horizon: 1 + i % 3, step: i as i64 * 10_800, kp_expected: 0.0, kp_argmax: 0.0, kp_observed: 0.0, error: e,
        }).collect();
        let mut shuffled = rows.clone();
        let mut state = seed;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        let a = error_summary(&ForecastReport { rows, gaps: vec![] });
        let b = error_summary(&ForecastReport { rows: shuffled, gaps: vec![] });
        prop_assert_eq!(a, b);
    }

    #[test]
    fn expected_kp_stays_in_support_hull(p in dist(28)) {
        let e = expected_kp(&p);
        let support: Vec<usize> = (0..28).filter(|&k| p.probs()[k] > 0.0).collect();
        let lo = *support.first().unwrap() as f64 / 3.0;
        let hi = *support.last().unwrap() as f64 / 3.0;
        prop_assert!((0.0..=9.0).contains(&e));
        prop_assert!(e >= lo - 1e-12 && e <= hi + 1e-12);
    }
}

#[test]
fn labels_match_brute_force_table() {
    let l = LabelConfig::default();
    for k in 0..28 {
        let kp = k as f64 / 3.0;
        let (c28, c10, c3, high) = common::brute_labels(k);
        assert_eq!(l.class28(kp), c28, "kp {kp}");
        assert_eq!(l.class10(kp), c10, "kp {kp}");
        assert_eq!(l.class3(kp), c3, "kp {kp}");
        assert_eq!(l.high(kp), high, "kp {kp}");
    }
}

#[test]
fn normalization_round_trips_every_third() {
    for k in 0..28 {
        let kp = k as f64 / 3.0;
        assert_eq!(kpcast::features::denormalize_kp(kpcast::features::normalize_kp(kp)), kp);
    }
}
