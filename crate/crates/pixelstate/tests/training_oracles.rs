//! Training-loop oracles: overfitting sanity, determinism of loss curves,
//! checkpoint/resume equivalence, and the non-finite-loss guard.

use pixelstate::dataset::{collect, split, CollectConfig, Dataset, ResetPolicy};
use pixelstate::env::EnvParams;
use pixelstate::nn::Params;
use pixelstate::predictor::{train, PredictorArch, TrainConfig};
use pixelstate::Error;

fn collect_small(n: u64, seed: u64, dir: &std::path::Path) -> Dataset {
    collect(
        &EnvParams::default(),
        &CollectConfig {
            n_samples: n,
            bins_per_dim: [5, 5, 5, 5],
            v_cap: 3.0,
            omega_cap: 3.0,
            seed,
            reset_policy: ResetPolicy::BinBalanced,
        },
        dir,
    )
    .unwrap();
    Dataset::load(&dir.join("dataset.bin")).unwrap()
}

/// Overfit oracle: on 100 samples with no validation split, 200 epochs of
/// the default optimizer collapse the training loss by at least 100×.
#[test]
fn overfit_run_collapses_training_loss() {
    let dir = tempfile::tempdir().unwrap();
    let ds = collect_small(100, 11, dir.path());
    let sp = split(ds.len(), 1.0, 0).unwrap();
    assert!(sp.val.is_empty());
    let cfg = TrainConfig { epochs: 200, ..TrainConfig::default() };
    let out = train(&ds, &sp, PredictorArch::default(), &cfg, None, |_, _, _| Ok(())).unwrap();
    let first = out.history.first().unwrap().train_loss;
    let last = out.history.last().unwrap().train_loss;
    assert!(
        last <= first / 100.0,
        "train loss shrank only {first:.4} → {last:.4} ({:.1}×)",
        first / last
    );
    assert!(out.best.is_none(), "no validation split, no best-val epoch");
}

#[test]
fn fixed_seed_reproduces_loss_curves() {
    let dir = tempfile::tempdir().unwrap();
    let ds = collect_small(96, 12, dir.path());
    let sp = split(ds.len(), 0.8, 5).unwrap();
    let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
    let run = || train(&ds, &sp, PredictorArch::default(), &cfg, None, |_, _, _| Ok(())).unwrap();
    let a = run();
    let b = run();
    assert_eq!(a.history.len(), b.history.len());
    for (x, y) in a.history.iter().zip(&b.history) {
        assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
        assert_eq!(
            x.val_loss.map(f64::to_bits),
            y.val_loss.map(f64::to_bits)
        );
    }
}

/// A resumed run must walk exactly the path the uninterrupted run takes:
/// same per-epoch losses, bitwise-identical final parameters.
#[test]
fn resume_matches_uninterrupted_run_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let ds = collect_small(80, 13, dir.path());
    let sp = split(ds.len(), 0.8, 1).unwrap();
    let arch = PredictorArch::default();

    let straight = train(
        &ds,
        &sp,
        arch,
        &TrainConfig { epochs: 4, ..TrainConfig::default() },
        None,
        |_, _, _| Ok(()),
    )
    .unwrap();

    // first half, capturing the checkpointable state at epoch 1
    let mut captured: Option<pixelstate::predictor::ResumeState> = None;
    let first_half = train(
        &ds,
        &sp,
        arch,
        &TrainConfig { epochs: 2, ..TrainConfig::default() },
        None,
        |stats, model, adam| {
            if stats.epoch == 1 {
                captured = Some(pixelstate::predictor::ResumeState {
                    model: model.clone(),
                    start_epoch: stats.epoch + 1,
                    adam_t: adam.steps_taken(),
                    moments: adam.export_state(),
                });
            }
            Ok(())
        },
    )
    .unwrap();

    let resumed = train(
        &ds,
        &sp,
        arch,
        &TrainConfig { epochs: 4, ..TrainConfig::default() },
        captured,
        |_, _, _| Ok(()),
    )
    .unwrap();

    // epoch numbering continues
    let epochs: Vec<u32> = resumed.history.iter().map(|s| s.epoch).collect();
    assert_eq!(epochs, vec![2, 3]);

    // loss curve pieces line up with the straight run
    for (i, stats) in first_half.history.iter().enumerate() {
        assert_eq!(stats.train_loss.to_bits(), straight.history[i].train_loss.to_bits());
    }
    for (i, stats) in resumed.history.iter().enumerate() {
        assert_eq!(stats.train_loss.to_bits(), straight.history[i + 2].train_loss.to_bits());
    }

    // final parameters identical
    let mut a = Vec::new();
    straight.model.visit("", &mut |_, v| a.extend(v.iter().map(|x| x.to_bits())));
    let mut b = Vec::new();
    resumed.model.visit("", &mut |_, v| b.extend(v.iter().map(|x| x.to_bits())));
    assert_eq!(a, b);
}

#[test]
fn absurd_learning_rate_aborts_with_diagnostics() {
    // lr so large that squared activations overflow f64 on the second batch
    // (moderately large rates merely saturate the GRU, which keeps the loss
    // finite — the guard is for genuine overflow)
    let dir = tempfile::tempdir().unwrap();
    let ds = collect_small(64, 14, dir.path());
    let sp = split(ds.len(), 1.0, 0).unwrap();
    let cfg = TrainConfig { epochs: 50, learning_rate: 1e200, ..TrainConfig::default() };
    match train(&ds, &sp, PredictorArch::default(), &cfg, None, |_, _, _| Ok(())) {
        Err(Error::NonFiniteLoss { context }) => {
            assert!(context.contains("epoch"), "diagnostics lack location: {context}");
        }
        Ok(_) => panic!("training survived lr=1e200"),
        Err(other) => panic!("unexpected error: {other}"),
    }
}
