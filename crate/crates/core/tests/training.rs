use nexdenoise::metrics::{MetricsReport, Psnr};
use nexdenoise::net::{build_network, InputMode, Variant};
use nexdenoise::train::*;
use nexdenoise::Error;

fn small_data(volumes: usize, slices: usize, size: usize) -> (DatasetSplit, DatasetSplit) {
    build_dataset(&DatasetConfig {
        train_volumes: volumes,
        test_volumes: 1,
        slices_per_volume: slices,
        image_size: size,
        sigma0: Some(0.03),
        ..Default::default()
    })
    .unwrap()
}

fn narrow(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 2, val_volumes: 1, extract_width: 8, bridge_width: 4, ..Default::default() }
}

#[test]
fn two_samples_overfit() {
    let (train_set, _) = small_data(1, 2, 16);
    let cfg = TrainConfig { epochs: 200, batch_size: 2, val_volumes: 0, ..Default::default() };
    let out = train::<f32>(&cfg, &train_set, &RunOptions::default()).unwrap();
    let first = out.history.epochs[0].train_loss;
    let last = out.history.epochs.last().unwrap().train_loss;
    assert!(last <= 0.1 * first, "loss {first} -> {last}");
}

#[test]
fn zero_epochs_return_initialization() {
    let (train_set, _) = small_data(2, 2, 16);
    let cfg = narrow(0);
    let out = train::<f64>(&cfg, &train_set, &RunOptions::default()).unwrap();
    assert_eq!(out.params, build_network::<f64>(cfg.network(), cfg.seed));
    assert!(out.history.epochs.is_empty());
}

#[test]
fn runs_are_deterministic() {
    let (train_set, _) = small_data(3, 2, 16);
    let cfg = narrow(3);
    let a = train::<f32>(&cfg, &train_set, &RunOptions::default()).unwrap();
    let b = train::<f32>(&cfg, &train_set, &RunOptions::default()).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.history.without_timing(), b.history.without_timing());
    let c = train::<f32>(&TrainConfig { seed: 1, ..cfg }, &train_set, &RunOptions::default()).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn extending_a_finished_run_matches_a_longer_run() {
    let (train_set, _) = small_data(3, 2, 16);
    let full = train::<f64>(&narrow(4), &train_set, &RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions { checkpoint_dir: Some(dir.path()), resume: true, ..Default::default() };
    train::<f64>(&narrow(2), &train_set, &opts).unwrap();
    assert!(dir.path().join(LAST_CHECKPOINT).exists());
    assert!(dir.path().join(BEST_CHECKPOINT).exists());
    let extended = train::<f64>(&narrow(4), &train_set, &opts).unwrap();
    assert_eq!(extended.params, full.params);
    assert!(train::<f64>(&TrainConfig { seed: 9, ..narrow(5) }, &train_set, &opts).is_err());
}

#[test]
fn resume_after_interruption_matches_uninterrupted_run() {
    let (train_set, _) = small_data(3, 2, 16);
    let cfg = narrow(4);
    let full = train::<f64>(&cfg, &train_set, &RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let counter = std::cell::Cell::new(0);
    let stop = |_: &EpochRecord| {
        counter.set(counter.get() + 1);
        if counter.get() == 2 {
            panic!("interrupted");
        }
    };
    let interrupted = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        train::<f64>(&cfg, &train_set, &RunOptions { checkpoint_dir: Some(dir.path()), on_epoch: Some(&stop), resume: false })
    }));
    assert!(interrupted.is_err());
    let resumed =
        train::<f64>(&cfg, &train_set, &RunOptions { checkpoint_dir: Some(dir.path()), resume: true, ..Default::default() })
            .unwrap();
    assert_eq!(resumed.params, full.params);
    assert_eq!(resumed.best, full.best);
    assert_eq!(resumed.history.without_timing().epochs.len(), 4);
    let strip = |h: &TrainingHistory| {
        let mut h = h.without_timing();
        h.epochs.iter_mut().for_each(|e| e.checkpoint = None);
        h
    };
    assert_eq!(strip(&resumed.history), strip(&full.history));
}

#[test]
fn learning_rate_only_drops_by_the_factor() {
    let (train_set, _) = small_data(3, 2, 16);
    let cfg = TrainConfig { plateau_patience: 1, initial_lr: 1e-2, ..narrow(6) };
    let out = train::<f32>(&cfg, &train_set, &RunOptions::default()).unwrap();
    for w in out.history.epochs.windows(2) {
        let (a, b) = (w[0].lr, w[1].lr);
        assert!(b == a || b == a * 0.2, "{a} -> {b}");
    }
}

#[test]
fn non_finite_data_aborts_with_batch_index() {
    let (mut train_set, _) = small_data(3, 2, 16);
    train_set.samples.data_mut()[5] = f64::NAN;
    let err = train::<f64>(&narrow(1), &train_set, &RunOptions::default()).err().unwrap();
    match err {
        Error::NonFinite(msg) => assert!(msg.contains("batch"), "{msg}"),
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn untrained_network_reproduces_baseline_row() {
    let (train_set, test) = small_data(2, 2, 32);
    for mode in [InputMode::Dual, InputMode::Single] {
        for variant in [Variant::Full, Variant::Tra, Variant::Res] {
            let cfg = TrainConfig { input_mode: mode, variant, ..narrow(0) };
            let out = train::<f32>(&cfg, &train_set, &RunOptions::default()).unwrap();
            let slices = evaluate(Some(&out.params), &test, "Model", true).unwrap();
            let report = MetricsReport::from_slices(1.0, "product".into(), slices).unwrap();
            let (base, model) = (report.row(BASELINE_METHOD).unwrap(), report.row("Model").unwrap());
            assert_eq!(base.psnr, model.psnr);
            assert_eq!(base.ssim, model.ssim);
        }
    }
}

#[test]
fn zero_epoch_ablation_rows_all_equal_baseline() {
    let (train_set, test) = small_data(2, 2, 32);
    let report = run_ablation::<f32>(&train_set, &test, &narrow(0), &[0, 1]).unwrap();
    let base: Vec<_> = report.report.slices.iter().filter(|s| s.method == BASELINE_METHOD).collect();
    for run in &report.runs {
        assert_eq!(run.slices.len(), base.len());
        for (s, b) in run.slices.iter().zip(&base) {
            assert_eq!((s.slice, s.psnr, s.ssim), (b.slice, b.psnr, b.ssim), "{}", run.method);
        }
    }
    let base_row = report.report.row(BASELINE_METHOD).unwrap().clone();
    for m in ["Model", "Model-Tra", "Model-Res", "Model (single)"] {
        let row = report.report.row(m).unwrap();
        assert!((row.psnr.mean - base_row.psnr.mean).abs() < 1e-9, "{m}");
        assert!((row.ssim.mean - base_row.ssim.mean).abs() < 1e-12, "{m}");
    }
    let t3 = report.variant_comparison().unwrap();
    assert_eq!(t3.rows.iter().map(|r| r.method.as_str()).collect::<Vec<_>>(), ["Model", "Model-Tra", "Model-Res"]);
    assert_eq!(report.input_comparison().unwrap().rows.len(), 3);
}

#[test]
fn psnr_rows_use_the_target_average() {
    let (_, test) = small_data(1, 2, 32);
    let slices = evaluate::<f64>(None, &test, "", true).unwrap();
    assert_eq!(slices.len(), test.len());
    assert!(slices.iter().all(|s| matches!(s.psnr, Psnr::Db(v) if v > 20.0)));
}
