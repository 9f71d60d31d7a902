mod common;

use kpcast::dataset::{LabelConfig, WindowSample};
use kpcast::loss::LossConfig;
use kpcast::model::ModelParams;
use kpcast::synthetic::SyntheticSpec;
use kpcast::train::{chronological_split, evaluate, train_loop, TrainConfig};

fn relabel(s: &mut WindowSample, kp: f64) {
    s.kp_out.iter_mut().for_each(|k| *k = kp);
    let (a, b, c, d) = WindowSample::labels_from(&s.kp_out, &LabelConfig::default());
    (s.labels28, s.labels10, s.labels3, s.label_high) = (a, b, c, d);
}

/// Training targets say quiet, the validation tail says storm, so every
/// epoch after the first makes validation worse.
fn diverging_task() -> (Vec<WindowSample>, kpcast::model::ModelConfig) {
    let spec = SyntheticSpec { rows: 160, seed: 4, ..SyntheticSpec::default() };
    let task = common::synthetic_task(&spec, 120, 4);
    let mut samples = task.train;
    let (train_idx, val_idx) = chronological_split(&samples, 0.2).unwrap();
    for i in train_idx {
        relabel(&mut samples[i], 0.0);
    }
    for i in val_idx {
        relabel(&mut samples[i], 9.0);
    }
    (samples, task.model)
}

#[test]
fn patience_one_stops_after_two_epochs_with_epoch_one_params() {
    let (samples, cfg) = diverging_task();
    let lcfg = LossConfig::default();
    let tcfg = TrainConfig {
        adam: kpcast::train::AdamConfig { lr: 3e-2, ..Default::default() },
        patience: 1,
        val_fraction: 0.2,
        batch_size: 16,
        max_epochs: 10,
        ..TrainConfig::default()
    };
    let out = train_loop(&samples, ModelParams::init(&cfg).unwrap(), &cfg, &lcfg, &tcfg).unwrap();
    assert_eq!(out.history.len(), 2);
    assert!(out.history[1].val.total > out.history[0].val.total);
    assert!(out.stopped_early);
    assert_eq!(out.best_epoch, 1);

    let one = TrainConfig { max_epochs: 1, ..tcfg };
    let first = train_loop(&samples, ModelParams::init(&cfg).unwrap(), &cfg, &lcfg, &one).unwrap();
    assert_eq!(out.params, first.params);
}

#[test]
fn reruns_with_the_same_seed_are_bit_identical() {
    let (samples, cfg) = diverging_task();
    let lcfg = LossConfig::default();
    let tcfg = TrainConfig { max_epochs: 3, batch_size: 8, val_fraction: 0.2, seed: 17, ..TrainConfig::default() };
    let a = train_loop(&samples, ModelParams::init(&cfg).unwrap(), &cfg, &lcfg, &tcfg).unwrap();
    let b = train_loop(&samples, ModelParams::init(&cfg).unwrap(), &cfg, &lcfg, &tcfg).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.params, b.params);
    let c = train_loop(&samples, ModelParams::init(&cfg).unwrap(), &cfg, &lcfg, &TrainConfig { seed: 18, ..tcfg })
        .unwrap();
    assert_ne!(a.history, c.history);
}

#[test]
fn returned_params_have_the_best_validation_loss() {
    let task = common::separable_task(1);
    let lcfg = LossConfig::default();
    let tcfg = TrainConfig { max_epochs: 6, ..common::separable_train_config(1) };
    let out = train_loop(&task.train, ModelParams::init(&task.model).unwrap(), &task.model, &lcfg, &tcfg).unwrap();
    let best = out.history.iter().map(|r| r.val.total).fold(f64::INFINITY, f64::min);
    assert_eq!(out.history[out.best_epoch - 1].val.total, best);
    let (_, val_idx) = chronological_split(&task.train, tcfg.val_fraction).unwrap();
    let val: Vec<WindowSample> = val_idx.iter().map(|&i| task.train[i].clone()).collect();
    assert_eq!(evaluate(&val, &out.params, &task.model, &lcfg).unwrap().loss.total, best);
}

#[test]
fn validation_tail_is_later_than_training() {
    let task = common::separable_task(0);
    let (train, val) = chronological_split(&task.train, 0.25).unwrap();
    let last_train = train.iter().map(|&i| task.train[i].t0()).max().unwrap();
    assert!(val.iter().all(|&i| task.train[i].t0() > last_train));
    assert_eq!(train.len() + val.len(), task.train.len());
}

#[test]
fn evaluate_is_idempotent_and_pure() {
    let task = common::separable_task(2);
    let params = ModelParams::init(&task.model).unwrap();
    let before = params.clone();
    let lcfg = LossConfig::default();
    let a = evaluate(&task.test, &params, &task.model, &lcfg).unwrap();
    let b = evaluate(&task.test, &params, &task.model, &lcfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(params, before);
    assert!(evaluate(&[], &params, &task.model, &lcfg).is_err());
}

#[test]
fn separable_task_is_learned() {
    let task = common::separable_task(0);
    let lcfg = LossConfig::default();
    let params = ModelParams::init(&task.model).unwrap();
    let initial = evaluate(&task.train, &params, &task.model, &lcfg).unwrap().loss.total;
    let out = train_loop(&task.train, params, &task.model, &lcfg, &common::separable_train_config(0)).unwrap();
    let last = out.history.last().unwrap().train.total;
    assert!(last <= 0.5 * initial, "{initial} -> {last}");
    let acc3 = evaluate(&task.test, &out.params, &task.model, &lcfg).unwrap().acc3;
    assert!(acc3 > 0.8, "held-out acc3 {acc3}");
}
