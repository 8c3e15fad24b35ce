// timing probe, not a shipped test
use pixelstate::dataset::{collect, split, CollectConfig, Dataset, ResetPolicy};
use pixelstate::env::EnvParams;
use pixelstate::predictor::{train, PredictorArch, TrainConfig};
use std::time::Instant;

#[test]
#[ignore]
fn speed_probe() {
    let dir = tempfile::tempdir().unwrap();
    let params = EnvParams::default();
    let t0 = Instant::now();
    collect(
        &params,
        &CollectConfig {
            n_samples: 2_000,
            bins_per_dim: [5, 5, 5, 5],
            v_cap: 3.0,
            omega_cap: 3.0,
            seed: 0,
            reset_policy: ResetPolicy::BinBalanced,
        },
        dir.path(),
    )
    .unwrap();
    eprintln!("collect 2000: {:.1}s", t0.elapsed().as_secs_f64());
    let ds = Dataset::load(&dir.path().join("dataset.bin")).unwrap();
    let sp = split(ds.len(), 0.8, 0).unwrap();
    let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
    let t1 = Instant::now();
    let out = train(&ds, &sp, PredictorArch::default(), &cfg, None, |s, _, _| {
        eprintln!(
            "epoch {} train {:.5} val {:?} ({:.1}s)",
            s.epoch,
            s.train_loss,
            s.val_loss,
            t1.elapsed().as_secs_f64()
        );
        Ok(())
    })
    .unwrap();
    eprintln!("2 epochs on 1600 train samples: {:.1}s", t1.elapsed().as_secs_f64());
    let _ = out;
}
