mod common;

use common::{perturb_after, WalkTask};
use kpcast::dataset::make_daily_windows;
use kpcast::forecast::{finetune_day, predict_horizons, run_walkforward, ForecastConfig, ForecastReport, ForecastRow};
use kpcast::loss::total_loss;
use kpcast::model::{forward, ModelParams};
use kpcast::nn::Mode;
use kpcast::table::THREE_HOURS;
use kpcast::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Predictions issued at or before `boundary`. Observed values and errors
/// are ground truth, not predictions, and are blanked.
fn issued_by(report: &ForecastReport, boundary: i64) -> ForecastReport {
    ForecastReport {
        rows: report
            .rows
            .iter()
            .filter(|r| r.day <= boundary)
            .map(|r| ForecastRow { kp_observed: 0.0, error: 0.0, ..r.clone() })
            .collect(),
        gaps: report.gaps.iter().filter(|g| g.0 <= boundary).cloned().collect(),
    }
}

#[test]
fn predictions_ignore_data_after_the_boundary() {
    let w = WalkTask::new(240, 1);
    let base = w.run(&w.task.test_table);
    let days = w.boundaries();
    assert_eq!(days.len(), 27);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..12 {
        let b = days[rng.gen_range(0..days.len())];
        let perturbed = w.run(&perturb_after(&w.task.test_table, b, trial));
        let kept = issued_by(&base, b);
        assert!(!kept.rows.is_empty() || b == days[days.len() - 1]);
        assert_eq!(issued_by(&perturbed, b), kept, "boundary {b}");
    }
}

#[test]
fn perturbing_before_the_boundary_is_visible() {
    let w = WalkTask::new(120, 2);
    let base = w.run(&w.task.test_table);
    let b = w.boundaries()[3];
    let shifted = perturb_after(&w.task.test_table, b - THREE_HOURS, 9);
    assert_ne!(issued_by(&w.run(&shifted), b), issued_by(&base, b));
}

#[test]
fn zero_finetune_epochs_leaves_params_unchanged() {
    let mut w = WalkTask::new(120, 3);
    w.forecast.finetune_epochs = 0;
    let daily = make_daily_windows(&w.task.test_table, &w.windows, &w.labels).unwrap();
    let s = w.task.transform.apply_sample(&daily[0]).unwrap();
    let p = finetune_day(&w.params, &[&s], s.output_end(), &w.task.model, &w.loss, &w.forecast, 0).unwrap();
    assert_eq!(p, w.params);
}

#[test]
fn one_step_past_the_boundary_is_a_leakage_error() {
    let w = WalkTask::new(120, 4);
    let raw = make_daily_windows(&w.task.test_table, &w.windows, &w.labels).unwrap();
    let daily: Vec<_> = raw.iter().map(|s| w.task.transform.apply_sample(s).unwrap()).collect();
    let b = daily[0].output_end();
    let early = b - THREE_HOURS;
    let err = finetune_day(&w.params, &[&daily[0]], early, &w.task.model, &w.loss, &w.forecast, 0).unwrap_err();
    assert!(matches!(err, Error::Leakage(_)), "{err}");
    assert!(predict_horizons(&w.params, &daily, &raw, 0, b, &w.task.model, &w.forecast).is_ok());

    let long = ForecastConfig { horizons: vec![3], ..w.forecast.clone() };
    let err = predict_horizons(&w.params, &daily, &raw, 0, early - 16 * THREE_HOURS, &w.task.model, &long).unwrap_err();
    assert!(matches!(err, Error::Leakage(_)), "{err}");
}

#[test]
fn ten_days_give_ten_groups_per_horizon_minus_gaps() {
    let w = WalkTask::new(28 + 9 * 8, 5);
    assert_eq!(w.boundaries().len(), 10);
    let r = w.run(&w.task.test_table);
    assert_eq!(r.gaps.len(), 1 + 2 + 3);
    assert_eq!(r.groups().len(), 10 * 3 - r.gaps.len());
    assert!(r.groups().iter().all(|&(day, h)| r.rows.iter().filter(|x| (x.day, x.horizon) == (day, h)).count() == 24));
}

#[test]
fn single_forecast_day_gives_one_group() {
    let mut w = WalkTask::new(28 + 8, 6);
    w.forecast.horizons = vec![1];
    let r = w.run(&w.task.test_table);
    assert_eq!(r.groups().len(), 1);
    assert_eq!(r.gaps.len(), 1);
}

#[test]
fn training_table_is_rejected_at_forecast_time() {
    let w = WalkTask::new(120, 7);
    let err = run_walkforward(&w.params, &w.task.train_table, &w.ctx()).unwrap_err();
    assert!(matches!(err, Error::Leakage(_)), "{err}");
}

#[test]
fn finetune_loss_is_mostly_non_increasing() {
    let trials = 20;
    let mut ok = 0;
    for seed in 0..trials {
        let mut w = WalkTask::new(60, 100 + seed);
        w.forecast.finetune_epochs = 1;
        let raw = make_daily_windows(&w.task.test_table, &w.windows, &w.labels).unwrap();
        let s = w.task.transform.apply_sample(&raw[0]).unwrap();
        let loss = |p: &ModelParams| {
            let out = forward(&s, p, &w.task.model, Mode::Infer, 0).unwrap();
            total_loss(&out, &s, p, &w.loss).unwrap().total
        };
        let mut p = w.params.clone();
        let mut prev = loss(&p);
        let mut monotone = true;
        for e in 0..5 {
            p = finetune_day(&p, &[&s], s.output_end(), &w.task.model, &w.loss, &w.forecast, e).unwrap();
            let l = loss(&p);
            monotone &= l <= prev;
            prev = l;
        }
        ok += monotone as u64;
    }
    assert!(ok * 10 >= trials * 9, "{ok}/{trials}");
}
