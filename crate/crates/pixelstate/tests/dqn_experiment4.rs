// exploratory: snapshot window × seed robustness matrix at 50k steps
use pixelstate::env::EnvParams;
use pixelstate::eval::{evaluate_agent, Bounds};
use pixelstate::rl::{train_dqn, ObservationMode, RLConfig};

#[test]
#[ignore]
fn matrix() {
    let params = EnvParams::default();
    for window in [10usize, 20, 40] {
        for seed in [0u64, 1, 2] {
            let cfg = RLConfig {
                total_timesteps: 50_000,
                snapshot_window: window,
                seed,
                ..RLConfig::default()
            };
            let out = train_dqn(&params, &cfg, ObservationMode::FullState).unwrap();
            let eval = evaluate_agent(&params, &out.qnet, ObservationMode::FullState, &Bounds::default(), 0, 10, 500).unwrap();
            let lens: Vec<u32> = eval.per_seed.iter().map(|(_, _, s)| *s).collect();
            eprintln!(
                "w{window} seed{seed}: mean {:6.1} lens {:?} mae x {:.2} th {:.2}",
                eval.mean_steps, lens, eval.mean_mae[0], eval.mean_mae[2]
            );
        }
    }
}
