//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use common::{perturb_after, WalkTask};
use kpcast::dataset::{
    class_histogram, expand_balance, make_windows_with_stride, window_count, BalanceKey, LabelConfig, WindowConfig,
    WindowSample,
};
use kpcast::forecast::{ForecastReport, ForecastRow};
use kpcast::loss::{
    cross_entropy, record_loss, total_loss, wasserstein_1d, LossBreakdown, LossConfig, LossTerms, WassersteinVariant,
};
use kpcast::model::{build_graph, forward, DistVector, ModelParams};
use kpcast::nn::{
    check_gradients, conv1d_residual, dense, dropout, global_avg_pool, l2_penalty, multi_head_attention,
    AttentionParams, Mode, Tape, Var,
};
use kpcast::synthetic::{synthetic_table, SyntheticSpec};
use kpcast::tensor::Tensor;
use kpcast::train::{batch_gradients, evaluate, train_loop, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);

fn random_dist(k: usize, rng: &mut ChaCha8Rng) -> DistVector {
    let v: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 1e-6).collect();
    let s: f64 = v.iter().sum();
    DistVector::new(v.iter().map(|x| x / s).collect()).unwrap()
}

fn wasserstein_suite() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sum = WassersteinVariant::Sum;
    let mut violations = 0;
    for _ in 0..1000 {
        let k = rng.gen_range(2..40);
        let (p, q, r) = (random_dist(k, &mut rng), random_dist(k, &mut rng), random_dist(k, &mut rng));
        let d = |a: &DistVector, b: &DistVector| wasserstein_1d(a, b, sum).unwrap();
        let ok = d(&p, &q) >= 0.0
            && d(&p, &q) == d(&q, &p)
            && d(&p, &p) == 0.0
            && d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-12;
        violations += !ok as usize;
    }
    let mut shifted_bad = 0;
    for k in 2..=40 {
        for i in 0..k - 1 {
            let (a, b) = (DistVector::delta(k, i), DistVector::delta(k, i + 1));
            shifted_bad += (wasserstein_1d(&a, &b, sum).unwrap() != 1.0) as usize;
            shifted_bad += (wasserstein_1d(&a, &b, WassersteinVariant::Mean).unwrap() != 1.0 / k as f64) as usize;
        }
    }
    let elapsed = t.elapsed();
    (
        violations == 0 && shifted_bad == 0 && elapsed < Duration::from_secs(10),
        format!("1000 triples, {violations} axiom violations, {shifted_bad} shifted-delta mismatches, {elapsed:.2?}"),
    )
}

fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// `sum(y * C)` for a fixed random `C`.
fn project(t: &mut Tape, y: Var) -> kpcast::Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (rows, cols) = (t.value(y).rows(), t.value(y).cols());
    let c = random_tensor(rows, cols, &mut rng);
    let w = t.mul_const(y, c)?;
    let m = t.mean_rows(w);
    let ones = t.constant(Tensor::full(&[cols, 1], rows as f64));
    t.matmul(m, ones)
}

type OpFn = Box<dyn Fn(&mut Tape, &BTreeMap<String, Var>) -> kpcast::Result<Var>>;

fn op_cases() -> Vec<(&'static str, Vec<(&'static str, [usize; 2])>, OpFn)> {
    let x34: Vec<(&str, [usize; 2])> = vec![("x", [3, 4])];
    vec![
        ("matmul", vec![("a", [3, 4]), ("b", [4, 2])], Box::new(|t, v| { let y = t.matmul(v["a"], v["b"])?; project(t, y) })),
        ("add", vec![("a", [3, 4]), ("b", [3, 4])], Box::new(|t, v| { let y = t.add(v["a"], v["b"])?; project(t, y) })),
        ("add_row", vec![("a", [3, 4]), ("b", [1, 4])], Box::new(|t, v| { let y = t.add_row(v["a"], v["b"])?; project(t, y) })),
        ("scale", x34.clone(), Box::new(|t, v| { let y = t.scale(v["x"], -1.7); project(t, y) })),
        ("transpose", x34.clone(), Box::new(|t, v| { let y = t.transpose(v["x"]); project(t, y) })),
        ("softmax_rows", x34.clone(), Box::new(|t, v| { let y = t.softmax_rows(v["x"]); project(t, y) })),
        ("relu", x34.clone(), Box::new(|t, v| { let y = t.relu(v["x"]); project(t, y) })),
        ("sigmoid", x34.clone(), Box::new(|t, v| { let y = t.sigmoid(v["x"]); project(t, y) })),
        ("slice_cols", x34.clone(), Box::new(|t, v| { let y = t.slice_cols(v["x"], 1, 2)?; project(t, y) })),
        ("concat_cols", vec![("a", [3, 2]), ("b", [3, 3])], Box::new(|t, v| { let y = t.concat_cols(&[v["a"], v["b"]])?; project(t, y) })),
        ("mean_rows", x34.clone(), Box::new(|t, v| { let y = t.mean_rows(v["x"]); project(t, y) })),
        ("mul_const", x34.clone(), Box::new(|t, v| {
            let c = random_tensor(3, 4, &mut ChaCha8Rng::seed_from_u64(5));
            let y = t.mul_const(v["x"], c)?;
            project(t, y)
        })),
        ("reshape", x34.clone(), Box::new(|t, v| { let y = t.reshape(v["x"], 2, 6)?; project(t, y) })),
        ("conv1d", vec![("x", [5, 3]), ("w", [9, 2]), ("b", [1, 2])], Box::new(|t, v| { let y = t.conv1d(v["x"], v["w"], v["b"], 3)?; project(t, y) })),
        ("sum_squares", x34.clone(), Box::new(|t, v| Ok(t.sum_squares(v["x"])))),
        ("cross_entropy", x34.clone(), Box::new(|t, v| { let p = t.softmax_rows(v["x"]); t.cross_entropy(p, &[0, 3, 2], 1e-12) })),
        ("wasserstein_sum", vec![("a", [3, 5]), ("b", [3, 5])], Box::new(|t, v| {
            let (p, q) = (t.softmax_rows(v["a"]), t.softmax_rows(v["b"]));
            t.wasserstein(p, q, false)
        })),
        ("wasserstein_mean", vec![("a", [3, 5]), ("b", [3, 5])], Box::new(|t, v| {
            let (p, q) = (t.softmax_rows(v["a"]), t.softmax_rows(v["b"]));
            t.wasserstein(p, q, true)
        })),
        ("bce_logits", vec![("z", [4, 1])], Box::new(|t, v| t.binary_cross_entropy_logits(v["z"], &[1.0, 0.0, 0.0, 1.0], 1e-12))),
        ("dense", vec![("x", [3, 4]), ("w", [4, 2]), ("b", [1, 2])], Box::new(|t, v| { let y = dense(t, v["x"], v["w"], v["b"])?; project(t, y) })),
        ("attention", vec![("x", [3, 4]), ("wq", [4, 4]), ("wk", [4, 4]), ("wv", [4, 4]), ("wo", [4, 4])], Box::new(|t, v| {
            let p = AttentionParams { wq: v["wq"], wk: v["wk"], wv: v["wv"], wo: v["wo"] };
            let (y, _) = multi_head_attention(t, v["x"], &p, 2)?;
            project(t, y)
        })),
        ("conv_residual", vec![("x", [5, 3]), ("w", [9, 3]), ("b", [1, 3])], Box::new(|t, v| { let y = conv1d_residual(t, v["x"], v["w"], v["b"], 3)?; project(t, y) })),
        ("global_avg_pool", x34.clone(), Box::new(|t, v| { let y = global_avg_pool(t, v["x"]); project(t, y) })),
        ("dropout", x34.clone(), Box::new(|t, v| {
            let y = dropout(t, v["x"], 0.3, Mode::Train, &mut ChaCha8Rng::seed_from_u64(9))?;
            project(t, y)
        })),
        ("l2_penalty", vec![("a", [2, 3]), ("b", [3, 1])], Box::new(|t, v| l2_penalty(t, &[v["a"], v["b"]], 0.3))),
    ]
}

fn gradient_checks() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_op = (String::new(), 0.0f64);
    let cases = op_cases();
    for (name, shapes, f) in &cases {
        let params = shapes
            .iter()
            .map(|(k, [r, c])| (k.to_string(), random_tensor(*r, *c, &mut rng)))
            .collect();
        let r = check_gradients(&params, 1e-5, f).unwrap();
        if r.max >= worst_op.1 {
            worst_op = (format!("{name}.{}", r.worst), r.max);
        }
    }

    let spec = SyntheticSpec { rows: 120, image_dim: 6, regime_min: 8, regime_max: 20, seed: 11, ..SyntheticSpec::default() };
    let task = common::synthetic_task(&spec, 90, 4);
    let mut cfg = task.model.clone();
    cfg.seed = 3;
    let sample = &task.train[7];
    let mut params = ModelParams::init(&cfg).unwrap();
    for p in params.tensors.values_mut() {
        p.scale_in_place(0.5);
    }
    let lcfg = LossConfig::default();
    let e2e = check_gradients(&params.tensors, 1e-5, |tape, vars| {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let g = build_graph(tape, vars, sample, &cfg, Mode::Train, &mut rng)?;
        Ok(record_loss(tape, &g, sample, vars, &params, &lcfg)?.total)
    })
    .unwrap();
    let elapsed = t.elapsed();
    let dims = (cfg.input_steps, cfg.model_dim, cfg.bins);
    (
        worst_op.1 < 1e-5 && e2e.max < 1e-4 && dims == (4, 8, 5) && elapsed < Duration::from_secs(120),
        format!(
            "{} ops worst {} = {:.1e}; micro-model {dims:?} worst {} = {:.1e} over {} tensors; {elapsed:.1?}",
            cases.len(),
            worst_op.0,
            worst_op.1,
            e2e.worst,
            e2e.max,
            e2e.per_param.len()
        ),
    )
}

fn loss_reconciliation() -> Outcome {
    let spec = SyntheticSpec { rows: 150, image_dim: 6, regime_min: 8, regime_max: 20, seed: 5, ..SyntheticSpec::default() };
    let task = common::synthetic_task(&spec, 120, 4);
    let params = ModelParams::init(&task.model).unwrap();
    let mut worst = 0.0f64;
    let mut batches = 0;
    for lcfg in [LossConfig::default(), LossConfig { variant: WassersteinVariant::Sum, alpha: 0.4, ..LossConfig::default() }] {
        for chunk in task.train.chunks(16) {
            let batch: Vec<(&WindowSample, u64)> = chunk.iter().zip(0u64..).collect();
            let (b, _) = batch_gradients(&batch, &params, &task.model, &lcfg).unwrap();
            let sum: f64 = b.weighted.as_array().iter().sum();
            worst = worst.max((sum - b.total).abs() / b.total.abs().max(1.0));
            batches += 1;
        }
    }

    let s = &task.train[3];
    let out = forward(s, &params, &task.model, Mode::Infer, 0).unwrap();
    let base = LossConfig { lambda_align: 0.0, lambda_l2: 0.0, ..LossConfig::default() };
    let mean = |d: &[DistVector], l: &[usize], f: &dyn Fn(&DistVector, usize) -> f64| {
        d.iter().zip(l).map(|(d, &l)| f(d, l)).sum::<f64>() / d.len() as f64
    };
    let ce = |d: &DistVector, l: usize| cross_entropy(d, l).unwrap();
    let w = |d: &DistVector, l: usize| wasserstein_1d(d, &DistVector::delta(d.len(), l), WassersteinVariant::Mean).unwrap();
    let a1: LossBreakdown = total_loss(&out, s, &params, &LossConfig { alpha: 1.0, ..base }).unwrap();
    let a0: LossBreakdown = total_loss(&out, s, &params, &LossConfig { alpha: 0.0, ..base }).unwrap();
    let exact = a1.weighted.ce28 == mean(&out.dist28, &s.labels28, &ce)
        && a1.weighted.ce3 == mean(&out.dist3, &s.labels3, &ce)
        && a1.weighted.wass28 == 0.0
        && a0.weighted.wass28 == mean(&out.dist28, &s.labels28, &w)
        && a0.weighted.wass10 == mean(&out.dist10, &s.labels10, &w)
        && a0.weighted.ce28 == 0.0
        && a0.total == LossTerms { bce: a0.raw.bce, ..a0.weighted }.sum();
    (
        worst <= 1e-12 && exact,
        format!("{batches} batches, worst relative sum gap {worst:.1e}; alpha 1/0 exact: {exact}"),
    )
}

fn label_window_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut count_bad = 0;
    for _ in 0..20 {
        let (input, stride) = (rng.gen_range(1..30), rng.gen_range(1..12));
        let output = if rng.gen_bool(0.5) { 24 } else { 40 };
        let rows = rng.gen_range(input + output..200);
        let expected = common::count_windows_by_enumeration(rows, input, output, stride);
        let spec = SyntheticSpec { rows, image_dim: 2, regime_min: 5, regime_max: 9, seed: rng.gen(), ..SyntheticSpec::default() };
        let table = synthetic_table(&spec).unwrap();
        let w = WindowConfig { input_steps: input, output_steps: output, stride_train: stride, stride_daily: 8 };
        let built = make_windows_with_stride(&table, &w, &LabelConfig::default(), stride).unwrap().len();
        count_bad += (window_count(rows, input, output, stride) != expected || built != expected) as usize;
    }
    let l = LabelConfig::default();
    let table_bad = (0..28)
        .filter(|&k| {
            let kp = k as f64 / 3.0;
            let (c28, c10, c3, high) = common::brute_labels(k);
            (l.class28(kp), l.class10(kp), l.class3(kp), l.high(kp)) != (c28, c10, c3, high) || l.high(kp) != (kp >= 7.0)
        })
        .count();
    let mut uneven = 0;
    for seed in 0..10 {
        let spec = SyntheticSpec { rows: 150, image_dim: 2, regime_min: 3, regime_max: 12, seed, ..SyntheticSpec::default() };
        let table = synthetic_table(&spec).unwrap();
        let w = WindowConfig { input_steps: 4, output_steps: 24, stride_train: 1, stride_daily: 8 };
        let windows = make_windows_with_stride(&table, &w, &l, 1).unwrap();
        let h = class_histogram(&expand_balance(&windows, BalanceKey::MaxInput, seed).unwrap(), BalanceKey::MaxInput);
        uneven += (h.values().min() != h.values().max()) as usize;
    }
    (
        count_bad == 0 && table_bad == 0 && uneven == 0,
        format!("20 window cases ({count_bad} wrong), 28 Kp thirds ({table_bad} wrong), 10 balanced sets ({uneven} uneven)"),
    )
}

fn predictions(report: &ForecastReport, boundary: i64) -> Vec<ForecastRow> {
    report
        .rows
        .iter()
        .filter(|r| r.day <= boundary)
        .map(|r| ForecastRow { kp_observed: 0.0, error: 0.0, ..r.clone() })
        .collect()
}

fn leakage_fuzz() -> Outcome {
    let t = Instant::now();
    let w = WalkTask::new(240, 21);
    let base = w.run(&w.task.test_table);
    let days = w.boundaries();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut changed = 0;
    let mut compared = 0;
    for trial in 0..50 {
        let b = days[rng.gen_range(0..days.len())];
        let report = w.run(&perturb_after(&w.task.test_table, b, 1000 + trial));
        let kept = predictions(&base, b);
        compared += kept.len();
        changed += (predictions(&report, b) != kept) as usize;
    }
    let elapsed = t.elapsed();
    (
        changed == 0 && elapsed < Duration::from_secs(300),
        format!(
            "30-day test range ({} forecast days), 50 perturbations, {compared} rows compared, {changed} differed, {elapsed:.1?}",
            days.len()
        ),
    )
}

fn learning_sanity() -> Outcome {
    let t = Instant::now();
    let task = common::separable_task(0);
    let lcfg = LossConfig::default();
    let params = ModelParams::init(&task.model).unwrap();
    let initial = evaluate(&task.train, &params, &task.model, &lcfg).unwrap().loss.total;
    let tcfg = common::separable_train_config(0);
    let out = train_loop(&task.train, params, &task.model, &lcfg, &tcfg).unwrap();
    let last = out.history.last().unwrap().train.total;
    let acc3 = evaluate(&task.test, &out.params, &task.model, &lcfg).unwrap().acc3;
    let drop = 1.0 - last / initial;
    let elapsed = t.elapsed();
    (
        drop >= 0.5 && out.history.len() <= 20 && acc3 > 0.8 && elapsed < Duration::from_secs(600),
        format!(
            "loss {initial:.3} -> {last:.3} ({:.0}% drop, {} epochs), held-out acc3 {acc3:.3} on {} windows, {elapsed:.1?}",
            drop * 100.0,
            out.history.len(),
            task.test.len()
        ),
    )
}

fn alignment_behavior() -> Outcome {
    let mut details = Vec::new();
    let mut passed = 0;
    for seed in 0..3 {
        let task = common::separable_task(seed);
        let lcfg = LossConfig { lambda_align: 0.5, ..LossConfig::default() };
        let tcfg = TrainConfig { patience: 20, ..common::separable_train_config(seed) };
        let out = train_loop(&task.train, ModelParams::init(&task.model).unwrap(), &task.model, &lcfg, &tcfg).unwrap();
        let first = out.history[0].train.raw.align;
        let last = out.history.last().unwrap().train.raw.align;
        let reduction = 1.0 - last / first;
        passed += (reduction >= 0.3) as usize;
        details.push(format!("seed {seed}: {first:.4} -> {last:.4} ({:.0}%)", reduction * 100.0));
    }
    (passed == 3, format!("{passed}/3 seeds; {}", details.join(", ")))
}

fn determinism_and_end_to_end() -> (Outcome, Outcome) {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let cfg = common::copy_fixture(dir.path());
        let t = Instant::now();
        let code = common::run_pipeline(&cfg, &[]);
        (code, t.elapsed(), common::work_outputs(dir.path()))
    };
    let (code_a, time_a, out_a) = run();
    let (code_b, _, out_b) = run();
    let is_key = |p: &std::path::Path| {
        let s = p.to_string_lossy();
        s == "report.csv" || s.ends_with(".ckpt") || s.starts_with("report/")
    };
    let key_files = out_a.iter().filter(|(p, _)| is_key(p)).count();
    let differing: Vec<String> = out_a
        .iter()
        .zip(&out_b)
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.display().to_string())
        .collect();
    let same = out_a.len() == out_b.len() && differing.is_empty();
    let ckpts = out_a.iter().filter(|(p, _)| p.to_string_lossy().ends_with(".ckpt")).count();
    let det = (
        code_a == 0 && code_b == 0 && same && ckpts > 0 && key_files > ckpts,
        format!(
            "{} files ({ckpts} checkpoints, {} report files) byte-identical: {same}{}",
            out_a.len(),
            key_files - ckpts,
            if differing.is_empty() { String::new() } else { format!("; differ: {}", differing.join(" ")) }
        ),
    );
    let has_report = out_a.iter().any(|(p, _)| p.to_string_lossy() == "report/summary.csv");
    let e2e = (
        code_a == 0 && has_report && time_a < Duration::from_secs(300),
        format!("200-row fixture, six stages, exit {code_a}, {time_a:.1?}, shipped feature file"),
    );
    (det, e2e)
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("Wasserstein metric suite", wasserstein_suite()),
        ("Gradient checks", gradient_checks()),
        ("Loss reconciliation", loss_reconciliation()),
        ("Label/window suite", label_window_suite()),
        ("Leakage fuzz", leakage_fuzz()),
        ("Learning sanity", learning_sanity()),
        ("Alignment behavior", alignment_behavior()),
    ];
    let (det, e2e) = determinism_and_end_to_end();
    results.push(("Determinism", det));
    results.push(("End-to-end fixture", e2e));
    for (name, (ok, detail)) in &results {
        common::pass_line(name, *ok, detail);
    }
    let failed = results.iter().filter(|(_, (ok, _))| !ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
