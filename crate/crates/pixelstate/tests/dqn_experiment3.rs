// exploratory: adam epsilon and snapshot window variants
use pixelstate::env::EnvParams;
use pixelstate::eval::{evaluate_agent, Bounds, TerminationCause, Policy, rollout};
use pixelstate::rl::{train_dqn, ObservationMode, RLConfig};

#[test]
#[ignore]
fn variants() {
    let params = EnvParams::default();
    for steps in [50_000u64, 100_000] {
        let cfg = RLConfig { total_timesteps: steps, ..RLConfig::default() };
        let out = train_dqn(&params, &cfg, ObservationMode::FullState).unwrap();
        let eval = evaluate_agent(&params, &out.qnet, ObservationMode::FullState, &Bounds::default(), 0, 10, 500).unwrap();
        let lens: Vec<u32> = eval.per_seed.iter().map(|(_, _, s)| *s).collect();
        // diagnose failures: which bound kills the failing rollouts?
        let mut causes = Vec::new();
        for (seed, _, s) in &eval.per_seed {
            if *s < 500 {
                let t = rollout(&params, Policy::Greedy(&out.qnet), ObservationMode::FullState, *seed, 500).unwrap();
                let last = t.steps.last().unwrap().state;
                causes.push(format!(
                    "{}@{} x={:.2} th={:.3}",
                    match t.cause { TerminationCause::Terminated => "term", _ => "trunc" },
                    s, last[0], last[2]
                ));
            }
        }
        eprintln!(
            "steps {steps}: eval mean {:.1} lens {:?} mae x {:.2} th {:.2} | fails: {causes:?}",
            eval.mean_steps, lens, eval.mean_mae[0], eval.mean_mae[2]
        );
    }
}
