//! The DQN actor/learner loop, runnable on true states or on predictor
//! estimates computed from rendered frames.

use super::{
    epsilon_at, huber_grad, huber_loss, select_action, shaped_reward, td_error_with_cache,
    QNetwork, RLConfig, ReplayBuffer, Transition,
};
use crate::dataset::preprocess;
use crate::env::{Action, CartPoleEnv, EnvParams};
use crate::error::{Error, Result};
use crate::nn::{Adam, Params};
use crate::predictor::PredictorModel;
use crate::seed::{sub_rng, sub_seed};
use ndarray::{Array1, Array2};

/// What the agent observes.
#[derive(Clone, Copy)]
pub enum ObservationMode<'a> {
    /// The environment's true 4-vector state.
    FullState,
    /// The predictor's estimate from a rolling window of the last
    /// `seq_len` (rendered frame, action) pairs. True states never reach
    /// the agent on this path.
    Predicted(&'a PredictorModel),
}

impl ObservationMode<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            ObservationMode::FullState => "full",
            ObservationMode::Predicted(_) => "predicted",
        }
    }
}

/// One completed training episode, as logged to CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRow {
    pub episode: u32,
    pub steps: u32,
    pub shaped_return: f64,
    pub raw_return: f64,
    pub epsilon: f64,
}

pub struct DqnTrainOutput {
    pub qnet: QNetwork,
    pub episodes: Vec<EpisodeRow>,
    pub steps_done: u64,
}

/// Snapshot handed to an instrumentation probe before each action.
pub struct StepTrace {
    pub step: u64,
    pub episode: u32,
    pub episode_step: u32,
    /// What the agent sees (equals `true_state` only in full-state mode).
    pub observation: [f64; 4],
    pub true_state: [f64; 4],
    /// Predicted mode only: actions currently in the window.
    pub window_actions: Option<Vec<f64>>,
    /// Predicted mode only: checksums identifying the windowed frames.
    pub window_frame_ids: Option<Vec<u64>>,
}

/// Rolling window of per-frame features and the action taken at each frame.
/// At episode start the window is padded with the initial frame's feature
/// paired with action 0, so the predictor always sees a full window.
pub(crate) struct ObsWindow {
    pub(crate) features: Vec<Array1<f64>>,
    pub(crate) actions: Vec<f64>,
    pub(crate) frame_ids: Vec<u64>,
}

impl ObsWindow {
    pub(crate) fn start(model: &PredictorModel, first_frame: &ndarray::Array3<f64>) -> Result<Self> {
        let feat = model.encode_frame(first_frame)?;
        let id = checksum(first_frame);
        let len = model.arch.seq_len;
        Ok(ObsWindow {
            features: vec![feat; len],
            actions: vec![0.0; len],
            frame_ids: vec![id; len],
        })
    }

    pub(crate) fn push(&mut self, model: &PredictorModel, frame: &ndarray::Array3<f64>, action: Action) -> Result<()> {
        self.features.rotate_left(1);
        self.actions.rotate_left(1);
        self.frame_ids.rotate_left(1);
        let last = self.features.len() - 1;
        self.features[last] = model.encode_frame(frame)?;
        self.actions[last] = f64::from(action.value());
        self.frame_ids[last] = checksum(frame);
        Ok(())
    }

    pub(crate) fn observe(&self, model: &PredictorModel) -> Result<[f64; 4]> {
        model.predict_from_features(&self.features, &self.actions)
    }
}

fn checksum(frame: &ndarray::Array3<f64>) -> u64 {
    frame.iter().fold(0u64, |acc, v| acc.wrapping_mul(31).wrapping_add(v.to_bits()))
}

/// The agent-side state tracking one episode's observations.
enum ObsState {
    Full,
    Predicted { window: ObsWindow },
}

pub fn train_dqn(
    env_params: &EnvParams,
    cfg: &RLConfig,
    mode: ObservationMode<'_>,
) -> Result<DqnTrainOutput> {
    train_dqn_instrumented(env_params, cfg, mode, None)
}

/// As [`train_dqn`], with an optional probe called before every action
/// selection. Used by tests to audit the observation path.
pub fn train_dqn_instrumented(
    env_params: &EnvParams,
    cfg: &RLConfig,
    mode: ObservationMode<'_>,
    mut probe: Option<&mut dyn FnMut(&StepTrace)>,
) -> Result<DqnTrainOutput> {
    cfg.validate()?;
    env_params.validate()?;
    if let ObservationMode::Predicted(model) = mode {
        model.arch.validate()?;
    }

    let mut env = CartPoleEnv::new(*env_params);
    let mut online = QNetwork::new(sub_seed(cfg.seed, "qnet.init", 0));
    let mut target = online.clone();
    let mut adam = Adam::new(cfg.learning_rate);
    adam.eps = 1e-4;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut rng = sub_rng(cfg.seed, "dqn.loop", 0);

    let mut episodes: Vec<EpisodeRow> = Vec::new();
    let mut episode: u32 = 0;
    let mut episode_step: u32 = 0;
    let mut shaped_return = 0.0;
    let mut raw_return = 0.0;
    let mut prev_action: Option<Action> = None;
    let mut best_snapshot: Option<(f64, QNetwork)> = None;

    let reset_env = |env: &mut CartPoleEnv, episode: u32| -> [f64; 4] {
        env.reset(sub_seed(cfg.seed, "dqn.episode", u64::from(episode))).to_array()
    };

    let mut true_state = reset_env(&mut env, episode);
    let mut obs_state = match mode {
        ObservationMode::FullState => ObsState::Full,
        ObservationMode::Predicted(model) => {
            let frame = preprocess(env.render().data())?;
            ObsState::Predicted { window: ObsWindow::start(model, &frame)? }
        }
    };
    let mut obs = match (&obs_state, mode) {
        (ObsState::Full, _) => true_state,
        (ObsState::Predicted { window }, ObservationMode::Predicted(model)) => window.observe(model)?,
        _ => unreachable!(),
    };

    for step in 0..cfg.total_timesteps {
        let epsilon = epsilon_at(u64::from(episode), cfg);
        if let Some(p) = probe.as_deref_mut() {
            let (wa, wf) = match &obs_state {
                ObsState::Full => (None, None),
                ObsState::Predicted { window } => {
                    (Some(window.actions.clone()), Some(window.frame_ids.clone()))
                }
            };
            p(&StepTrace {
                step,
                episode,
                episode_step,
                observation: obs,
                true_state,
                window_actions: wa,
                window_frame_ids: wf,
            });
        }
        let action = select_action(online.q_values(&obs), epsilon, &mut rng);

        // frame where the action is taken, needed for the window pair
        let pre_frame = match &obs_state {
            ObsState::Predicted { .. } => Some(preprocess(env.render().data())?),
            ObsState::Full => None,
        };

        let result = env.step(action)?;
        let next_true = result.next_state.to_array();
        // Bootstrap masking applies to true terminations only. A truncated
        // episode ends the bookkeeping below, but its final state is not
        // terminal — masking it would teach the value function that
        // perfectly balanced states are worthless and corrode the policy
        // exactly when it starts reaching the step limit.
        let done = result.terminated;
        let episode_over = result.terminated || result.truncated;
        let reward = shaped_reward(&next_true, prev_action, action, cfg);

        let next_obs = match &mut obs_state {
            ObsState::Full => next_true,
            ObsState::Predicted { window } => {
                let model = match mode {
                    ObservationMode::Predicted(m) => m,
                    ObservationMode::FullState => unreachable!(),
                };
                window.push(model, pre_frame.as_ref().expect("rendered above"), action)?;
                window.observe(model)?
            }
        };

        buffer.push(Transition { state: obs, action, reward, next_state: next_obs, done });
        shaped_return += reward;
        raw_return += result.reward;
        episode_step += 1;
        prev_action = Some(action);

        if step + 1 >= cfg.warmup_steps && buffer.len() >= cfg.batch_size {
            let loss = learn_step(&mut online, &target, &mut adam, &buffer, cfg, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { context: format!("dqn step {step}") });
            }
        }
        if (step + 1) % cfg.target_sync_period == 0 {
            target = online.clone();
        }

        if episode_over {
            episodes.push(EpisodeRow {
                episode,
                steps: episode_step,
                shaped_return,
                raw_return,
                epsilon,
            });
            // Policy quality oscillates late in training once exploration
            // has decayed; keep the weights from the best trailing window
            // instead of whatever the final step leaves behind.
            if episodes.len() >= cfg.snapshot_window {
                let tail = &episodes[episodes.len() - cfg.snapshot_window..];
                let mean = tail.iter().map(|e| e.raw_return).sum::<f64>() / cfg.snapshot_window as f64;
                if best_snapshot.as_ref().map_or(true, |(score, _)| mean > *score) {
                    best_snapshot = Some((mean, online.clone()));
                }
            }
            episode += 1;
            episode_step = 0;
            shaped_return = 0.0;
            raw_return = 0.0;
            prev_action = None;
            true_state = reset_env(&mut env, episode);
            obs_state = match mode {
                ObservationMode::FullState => ObsState::Full,
                ObservationMode::Predicted(model) => {
                    let frame = preprocess(env.render().data())?;
                    ObsState::Predicted { window: ObsWindow::start(model, &frame)? }
                }
            };
            obs = match (&obs_state, mode) {
                (ObsState::Full, _) => true_state,
                (ObsState::Predicted { window }, ObservationMode::Predicted(model)) => {
                    window.observe(model)?
                }
                _ => unreachable!(),
            };
        } else {
            true_state = next_true;
            obs = next_obs;
        }
    }

    let qnet = match best_snapshot {
        Some((_, snapshot)) => snapshot,
        None => online,
    };
    Ok(DqnTrainOutput { qnet, episodes, steps_done: cfg.total_timesteps })
}


fn learn_step(
    online: &mut QNetwork,
    target: &QNetwork,
    adam: &mut Adam,
    buffer: &ReplayBuffer,
    cfg: &RLConfig,
    rng: &mut impl rand::Rng,
) -> Result<f64> {
    let ids = buffer.sample_indices(cfg.batch_size, rng)?;
    let batch: Vec<Transition> = ids.iter().map(|&i| *buffer.get(i)).collect();
    let (delta, _q, cache) = td_error_with_cache(&batch, online, target, cfg.gamma);
    let loss = huber_loss(&delta);

    // dL/dQ(s_i, a_i) = −ψ(δ_i)/B; other entries untouched
    let dldd = huber_grad(&delta);
    let mut dq = Array2::<f64>::zeros((batch.len(), 2));
    for (i, t) in batch.iter().enumerate() {
        dq[[i, t.action.value() as usize]] = -dldd[i];
    }
    online.zero_grads();
    online.backward(&cache, &dq);
    adam.step(online);
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn smoke_cfg() -> RLConfig {
        RLConfig {
            total_timesteps: 600,
            warmup_steps: 100,
            buffer_capacity: 1_000,
            batch_size: 16,
            ..RLConfig::default()
        }
    }

    #[test]
    fn full_state_training_is_deterministic() {
        let params = EnvParams::default();
        let cfg = smoke_cfg();
        let a = train_dqn(&params, &cfg, ObservationMode::FullState).unwrap();
        let b = train_dqn(&params, &cfg, ObservationMode::FullState).unwrap();
        assert_eq!(a.episodes, b.episodes);
        assert!(!a.episodes.is_empty());
        let qa = a.qnet.q_values(&[0.1, 0.2, 0.03, -0.4]);
        let qb = b.qnet.q_values(&[0.1, 0.2, 0.03, -0.4]);
        assert_eq!(qa[0].to_bits(), qb[0].to_bits());
    }

    #[test]
    fn target_sync_is_exact() {
        // run a few learn steps so online drifts from init, then sync and
        // probe: the copy must agree to zero error
        let params = EnvParams::default();
        let mut env = CartPoleEnv::new(params);
        env.reset(0);
        let cfg = RLConfig { batch_size: 8, ..RLConfig::default() };
        let mut online = QNetwork::new(1);
        let target0 = online.clone();
        let mut adam = Adam::new(1e-3);
        let mut buffer = ReplayBuffer::new(256);
        let mut rng = crate::seed::sub_rng(2, "sync.test", 0);
        let mut prev = None;
        for _ in 0..64 {
            let s = env.state().to_array();
            let a = if env.state().theta > 0.0 { Action::Right } else { Action::Left };
            let r = env.step(a).unwrap();
            buffer.push(Transition {
                state: s,
                action: a,
                reward: shaped_reward(&r.next_state.to_array(), prev, a, &cfg),
                next_state: r.next_state.to_array(),
                done: r.terminated || r.truncated,
            });
            prev = Some(a);
            if r.terminated || r.truncated {
                env.reset(buffer.len() as u64);
                prev = None;
            }
        }
        for _ in 0..20 {
            learn_step(&mut online, &target0, &mut adam, &buffer, &cfg, &mut rng).unwrap();
        }
        let synced = online.clone();
        let mut probe_rng = crate::seed::sub_rng(3, "sync.probe", 0);
        for _ in 0..25 {
            let s = [
                probe_rng.random_range(-2.4..2.4),
                probe_rng.random_range(-3.0..3.0),
                probe_rng.random_range(-0.21..0.21),
                probe_rng.random_range(-3.0..3.0),
            ];
            let a = online.q_values(&s);
            let b = synced.q_values(&s);
            assert_eq!(a[0].to_bits(), b[0].to_bits());
            assert_eq!(a[1].to_bits(), b[1].to_bits());
        }
    }

    #[test]
    fn episode_rows_account_for_all_steps() {
        let params = EnvParams::default();
        let cfg = smoke_cfg();
        let out = train_dqn(&params, &cfg, ObservationMode::FullState).unwrap();
        let logged: u64 = out.episodes.iter().map(|e| u64::from(e.steps)).sum();
        assert!(logged <= cfg.total_timesteps);
        // raw return equals steps survived
        for row in &out.episodes {
            assert_eq!(row.raw_return, f64::from(row.steps));
        }
        // episodes are numbered consecutively
        for (i, row) in out.episodes.iter().enumerate() {
            assert_eq!(row.episode as usize, i);
        }
    }
}
