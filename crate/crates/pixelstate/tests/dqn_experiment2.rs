// exploratory: target-sync period vs convergence speed at 50k steps
use pixelstate::env::EnvParams;
use pixelstate::eval::{evaluate_agent, Bounds};
use pixelstate::rl::{train_dqn, ObservationMode, RLConfig};

fn summarize(tag: &str, cfg: &RLConfig) {
    let params = EnvParams::default();
    let out = train_dqn(&params, cfg, ObservationMode::FullState).unwrap();
    let takeoff = out
        .episodes
        .windows(20)
        .position(|w| w.iter().map(|e| f64::from(e.steps)).sum::<f64>() / 20.0 > 100.0)
        .map(|i| out.episodes[..i].iter().map(|e| u64::from(e.steps)).sum::<u64>());
    let eval = evaluate_agent(&params, &out.qnet, ObservationMode::FullState, &Bounds::default(), 0, 10, 500).unwrap();
    let lens: Vec<u32> = eval.per_seed.iter().map(|(_, _, s)| *s).collect();
    eprintln!(
        "{tag}: takeoff@{:?} steps, {} eps | eval mean steps {:.1} lens {:?} | mae x {:.2}% th {:.2}%",
        takeoff, out.episodes.len(), eval.mean_steps, lens, eval.mean_mae[0], eval.mean_mae[2]
    );
}

#[test]
#[ignore]
fn sync_period_sweep() {
    for (tag, sync, steps) in [
        ("sync500@50k", 500u64, 50_000u64),
        ("sync200@50k", 200, 50_000),
        ("sync100@50k", 100, 50_000),
        ("sync500@100k", 500, 100_000),
    ] {
        let cfg = RLConfig { target_sync_period: sync, total_timesteps: steps, ..RLConfig::default() };
        summarize(tag, &cfg);
    }
}
