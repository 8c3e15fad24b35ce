//! Deep Q-learning on cart-pole observations.
//!
//! The agent sees a 4-vector observation — either the true state or the
//! predictor's estimate — and learns action values with the usual machinery:
//! uniform experience replay, a periodically synchronized target network,
//! ε-greedy exploration with per-episode multiplicative decay, Huber loss on
//! the one-step temporal-difference error, and a shaped reward that
//! penalizes cart displacement, pole angle and action switching.

mod dqn;

pub use dqn::{
    train_dqn, train_dqn_instrumented, DqnTrainOutput, EpisodeRow, ObservationMode, StepTrace,
};
pub(crate) use dqn::ObsWindow;

use crate::env::Action;
use crate::error::{Error, Result};
use crate::nn::{self, Linear, Params};
use crate::predictor::checkpoint as ckpt;
use crate::seed::sub_rng;
use ndarray::{Array1, Array2};
use rand::Rng;
use std::path::Path;

/// One stored interaction. `state`/`next_state` are observations as the
/// agent saw them — predictor estimates in predicted mode, never the hidden
/// true state.
///
/// `done` marks a genuinely terminal `next_state` (a bounds violation), the
/// case where the TD bootstrap must be cut. Step-limit truncation ends an
/// episode without setting it: the truncated state still has value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: [f64; 4],
    pub action: Action,
    pub reward: f64,
    pub next_state: [f64; 4],
    pub done: bool,
}

/// Fixed-capacity ring buffer with strictly oldest-first eviction and
/// uniform sampling over current contents.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { data: Vec::with_capacity(capacity.min(1 << 20)), capacity, next: 0 }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.data[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.data.iter()
    }

    /// Draw `n` indices uniformly (with replacement) over current contents.
    pub fn sample_indices(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        if self.data.is_empty() {
            return Err(Error::Empty { what: "replay buffer".into() });
        }
        Ok((0..n).map(|_| rng.random_range(0..self.data.len())).collect())
    }
}

/// Hyperparameters of the DQN stage.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RLConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub total_timesteps: u64,
    pub buffer_capacity: usize,
    pub epsilon_init: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    pub target_sync_period: u64,
    pub warmup_steps: u64,
    /// Shaped-reward weights: cart displacement, pole angle, action switch.
    pub lambda_x: f64,
    pub lambda_theta: f64,
    pub lambda_jerk: f64,
    /// Trailing-episode window scored when snapshotting the best policy.
    pub snapshot_window: usize,
    pub seed: u64,
}

impl Default for RLConfig {
    fn default() -> Self {
        RLConfig {
            gamma: 0.99,
            learning_rate: 1e-4,
            batch_size: 64,
            total_timesteps: 100_000,
            buffer_capacity: 100_000,
            epsilon_init: 0.02,
            epsilon_decay: 0.9,
            epsilon_floor: 0.001,
            target_sync_period: 500,
            warmup_steps: 1_000,
            lambda_x: 0.1,
            lambda_theta: 1.0,
            lambda_jerk: 0.35,
            snapshot_window: 20,
            seed: 0,
        }
    }
}

impl RLConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |detail: &str| Err(Error::Config { detail: detail.into() });
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.epsilon_init) || !(0.0..=1.0).contains(&self.epsilon_floor) {
            return bad("epsilon values must lie in [0, 1]");
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return bad("epsilon_decay must lie in (0, 1]");
        }
        if self.lambda_x < 0.0 || self.lambda_theta < 0.0 || self.lambda_jerk < 0.0 {
            return bad("shaping weights must be nonnegative");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch_size and buffer_capacity must be ≥ 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if self.target_sync_period == 0 {
            return bad("target_sync_period must be ≥ 1");
        }
        if self.snapshot_window == 0 {
            return bad("snapshot_window must be ≥ 1");
        }
        Ok(())
    }
}

pub const QNET_INPUT: usize = 4;
pub const QNET_HIDDEN: usize = 128;
pub const QNET_OUTPUT: usize = 2;

/// Two hidden ReLU layers mapping an observation to two action values.
#[derive(Debug, Clone)]
pub struct QNetwork {
    pub l1: Linear,
    pub l2: Linear,
    pub l3: Linear,
}

pub struct QCache {
    input: Array2<f64>,
    a1: Array2<f64>,
    a2: Array2<f64>,
}

impl QNetwork {
    pub fn new(seed: u64) -> Self {
        QNetwork {
            l1: Linear::new(QNET_HIDDEN, QNET_INPUT, &mut sub_rng(seed, "qnet.l1", 0)),
            l2: Linear::new(QNET_HIDDEN, QNET_HIDDEN, &mut sub_rng(seed, "qnet.l2", 0)),
            l3: Linear::new(QNET_OUTPUT, QNET_HIDDEN, &mut sub_rng(seed, "qnet.l3", 0)),
        }
    }

    pub fn forward(&self, obs: &Array2<f64>) -> (Array2<f64>, QCache) {
        let mut a1 = self.l1.forward(obs);
        nn::relu_inplace(&mut a1);
        let mut a2 = self.l2.forward(&a1);
        nn::relu_inplace(&mut a2);
        let out = self.l3.forward(&a2);
        (out, QCache { input: obs.clone(), a1, a2 })
    }

    pub fn backward(&mut self, cache: &QCache, dout: &Array2<f64>) {
        let mut d2 = self.l3.backward(&cache.a2, dout);
        nn::relu_backward_inplace(&mut d2, &cache.a2);
        let mut d1 = self.l2.backward(&cache.a1, &d2);
        nn::relu_backward_inplace(&mut d1, &cache.a1);
        self.l1.backward(&cache.input, &d1);
    }

    /// Action values for a single observation.
    pub fn q_values(&self, obs: &[f64; 4]) -> [f64; 2] {
        let x = Array2::from_shape_vec((1, 4), obs.to_vec()).expect("fixed shape");
        let (out, _) = self.forward(&x);
        [out[[0, 0]], out[[0, 1]]]
    }
}

impl Params for QNetwork {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        self.l1.visit(&nn::join(prefix, "l1"), f);
        self.l2.visit(&nn::join(prefix, "l2"), f);
        self.l3.visit(&nn::join(prefix, "l3"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewMutD<'_, f64>)) {
        self.l1.visit_mut(&nn::join(prefix, "l1"), f);
        self.l2.visit_mut(&nn::join(prefix, "l2"), f);
        self.l3.visit_mut(&nn::join(prefix, "l3"), f);
    }

    fn visit_grads(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        self.l1.visit_grads(&nn::join(prefix, "l1"), f);
        self.l2.visit_grads(&nn::join(prefix, "l2"), f);
        self.l3.visit_grads(&nn::join(prefix, "l3"), f);
    }

    fn visit_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ndarray::ArrayViewMutD<'_, f64>, ndarray::ArrayViewD<'_, f64>),
    ) {
        self.l1.visit_pairs(&nn::join(prefix, "l1"), f);
        self.l2.visit_pairs(&nn::join(prefix, "l2"), f);
        self.l3.visit_pairs(&nn::join(prefix, "l3"), f);
    }

    fn zero_grads(&mut self) {
        self.l1.zero_grads();
        self.l2.zero_grads();
        self.l3.zero_grads();
    }
}

/// Shaped reward: survival bonus minus weighted penalties,
/// `1 − λ₁|x| − λ₂|θ| − λ₃·Δu` with Δu = 1 when the action switched.
///
/// Applied with absolute values of position and angle; the penalties exist
/// to pull both toward zero from either side. `prev_action = None` (episode
/// start) counts as no switch.
pub fn shaped_reward(state: &[f64; 4], prev_action: Option<Action>, action: Action, cfg: &RLConfig) -> f64 {
    let switched = prev_action.map_or(0.0, |p| if p != action { 1.0 } else { 0.0 });
    1.0 - cfg.lambda_x * state[0].abs() - cfg.lambda_theta * state[2].abs() - cfg.lambda_jerk * switched
}

/// ε-greedy over two action values; ties break toward action 0.
pub fn select_action(q: [f64; 2], epsilon: f64, rng: &mut impl Rng) -> Action {
    if epsilon > 0.0 && rng.random_range(0.0..1.0) < epsilon {
        if rng.random_range(0..2u8) == 0 {
            Action::Left
        } else {
            Action::Right
        }
    } else if q[1] > q[0] {
        Action::Right
    } else {
        Action::Left
    }
}

/// Exploration rate for an episode index: multiplicative decay with a floor.
pub fn epsilon_at(episode: u64, cfg: &RLConfig) -> f64 {
    let decayed = cfg.epsilon_init * cfg.epsilon_decay.powf(episode as f64);
    decayed.max(cfg.epsilon_floor)
}

/// Per-sample TD error: `δᵢ = rᵢ + γ·max_a' Q(s'ᵢ, a'; θ') · (1 − doneᵢ) − Q(sᵢ, aᵢ; θ)`.
/// Returns the online Q table and cache alongside so the training step can
/// reuse them for the backward pass.
pub fn td_error_with_cache(
    batch: &[Transition],
    online: &QNetwork,
    target: &QNetwork,
    gamma: f64,
) -> (Array1<f64>, Array2<f64>, QCache) {
    let b = batch.len();
    let mut s = Array2::<f64>::zeros((b, 4));
    let mut s_next = Array2::<f64>::zeros((b, 4));
    for (i, t) in batch.iter().enumerate() {
        for d in 0..4 {
            s[[i, d]] = t.state[d];
            s_next[[i, d]] = t.next_state[d];
        }
    }
    let (q, cache) = online.forward(&s);
    let (q_next, _) = target.forward(&s_next);
    let mut delta = Array1::<f64>::zeros(b);
    for (i, t) in batch.iter().enumerate() {
        let bootstrap = if t.done { 0.0 } else { gamma * q_next[[i, 0]].max(q_next[[i, 1]]) };
        delta[i] = t.reward + bootstrap - q[[i, t.action.value() as usize]];
    }
    (delta, q, cache)
}

pub fn td_error(batch: &[Transition], online: &QNetwork, target: &QNetwork, gamma: f64) -> Array1<f64> {
    td_error_with_cache(batch, online, target, gamma).0
}

/// Mean Huber loss: `½δ²` inside the unit interval, `|δ| − ½` outside.
pub fn huber_loss(delta: &Array1<f64>) -> f64 {
    assert!(!delta.is_empty(), "huber loss of an empty batch");
    delta
        .iter()
        .map(|&d| if d.abs() <= 1.0 { 0.5 * d * d } else { d.abs() - 0.5 })
        .sum::<f64>()
        / delta.len() as f64
}

/// dL/dδ for the mean Huber loss: clamp(δ, ±1) / n.
pub fn huber_grad(delta: &Array1<f64>) -> Array1<f64> {
    let n = delta.len() as f64;
    delta.mapv(|d| d.clamp(-1.0, 1.0) / n)
}

/// Persist a trained Q-network (same container format as the predictor).
pub fn save_qnet(path: &Path, qnet: &QNetwork, trained_steps: u64) -> Result<()> {
    let mut tensors: Vec<(String, ndarray::ArrayD<f64>)> = Vec::new();
    qnet.visit("", &mut |name, view| tensors.push((name.to_string(), view.to_owned())));
    let arch = [QNET_INPUT as u32, QNET_HIDDEN as u32, QNET_HIDDEN as u32, QNET_OUTPUT as u32];
    ckpt::write_container(path, ckpt::KIND_QNET, &arch, trained_steps, 0, &tensors)
}

pub fn load_qnet(path: &Path) -> Result<QNetwork> {
    let container = ckpt::read_container(path, ckpt::KIND_QNET)?;
    let want = [QNET_INPUT as u32, QNET_HIDDEN as u32, QNET_HIDDEN as u32, QNET_OUTPUT as u32];
    if container.arch_words != want {
        return Err(Error::ArchMismatch {
            detail: format!("q-network layers {:?}, expected {:?}", container.arch_words, want),
        });
    }
    let mut qnet = QNetwork::new(0);
    let mut missing = Vec::new();
    qnet.visit_mut("", &mut |name, mut view| match container.tensors.get(name) {
        Some(data) if data.shape() == view.shape() => view.assign(data),
        Some(data) => missing.push(format!("{name}: shape {:?} vs {:?}", data.shape(), view.shape())),
        None => missing.push(format!("{name}: absent")),
    });
    if !missing.is_empty() {
        return Err(Error::CorruptFile {
            path: path.to_path_buf(),
            detail: format!("parameter table mismatch: {}", missing.join("; ")),
        });
    }
    Ok(qnet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::sub_rng;

    fn t(state: [f64; 4], action: Action, reward: f64, next: [f64; 4], done: bool) -> Transition {
        Transition { state, action, reward, next_state: next, done }
    }

    #[test]
    fn shaped_reward_examples() {
        let cfg = RLConfig::default();
        // centered, no switch
        assert_eq!(shaped_reward(&[0.0, 0.0, 0.0, 0.0], Some(Action::Left), Action::Left, &cfg), 1.0);
        // worked example: x=1, θ=0.1, switched → 1 − 0.1 − 0.1 − 0.35
        let r = shaped_reward(&[1.0, 0.0, 0.1, 0.0], Some(Action::Left), Action::Right, &cfg);
        assert!((r - 0.45).abs() < 1e-15);
        // absolute-value symmetry
        let left = shaped_reward(&[-1.0, 0.0, 0.0, 0.0], Some(Action::Left), Action::Left, &cfg);
        let right = shaped_reward(&[1.0, 0.0, 0.0, 0.0], Some(Action::Left), Action::Left, &cfg);
        assert_eq!(left, right);
        assert!((left - 0.9).abs() < 1e-15);
        // first step of an episode has no switch penalty
        assert_eq!(shaped_reward(&[0.0; 4], None, Action::Right, &cfg), 1.0);
    }

    #[test]
    fn greedy_selection_and_tie_break() {
        let mut rng = sub_rng(0, "sel", 0);
        for _ in 0..100 {
            assert_eq!(select_action([1.0, 2.0], 0.0, &mut rng), Action::Right);
            assert_eq!(select_action([2.0, 1.0], 0.0, &mut rng), Action::Left);
            assert_eq!(select_action([0.7, 0.7], 0.0, &mut rng), Action::Left);
        }
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = sub_rng(1, "sel.unif", 0);
        let n = 10_000;
        let mut rights = 0;
        for _ in 0..n {
            if select_action([5.0, -5.0], 1.0, &mut rng) == Action::Right {
                rights += 1;
            }
        }
        let freq = f64::from(rights) / f64::from(n);
        assert!((freq - 0.5).abs() <= 0.02, "right-action frequency {freq}");
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = RLConfig::default();
        assert_eq!(epsilon_at(0, &cfg), 0.02);
        assert!((epsilon_at(1, &cfg) - 0.018).abs() < 1e-15);
        assert_eq!(epsilon_at(1_000_000, &cfg), 0.001);
    }

    #[test]
    fn td_error_examples() {
        // done transition: bootstrap zeroed, δ = r − Q(s, a)
        let mut online = QNetwork::new(3);
        let target = online.clone();
        online.visit_mut("", &mut |_, mut v| v.fill(0.0)); // Q ≡ 0
        let batch = [t([0.0; 4], Action::Left, 1.0, [9.0, 9.0, 9.0, 9.0], true)];
        let delta = td_error(&batch, &online, &target, 0.99);
        assert!((delta[0] - 1.0).abs() < 1e-12);

        // γ = 0: δ = r − Q(s,a); force Q(s,a) = 0.2 via bias
        let mut online = QNetwork::new(4);
        online.visit_mut("", &mut |name, mut v| {
            if name == "l3.b" {
                v.fill(0.2);
            } else {
                v.fill(0.0);
            }
        });
        let target = online.clone();
        let batch = [t([0.1; 4], Action::Right, 0.5, [0.1; 4], false)];
        let delta = td_error(&batch, &online, &target, 0.0);
        assert!((delta[0] - 0.3).abs() < 1e-12, "{}", delta[0]);
    }

    #[test]
    fn td_error_arithmetic_oracle() {
        // γ=0.99, r=1, max target Q = 10, Q(s,a) = 5 → δ = 1 + 9.9 − 5
        let mut online = QNetwork::new(5);
        online.visit_mut("", &mut |name, mut v| {
            v.fill(0.0);
            if name == "l3.b" {
                v[ndarray::IxDyn(&[0])] = 5.0;
                v[ndarray::IxDyn(&[1])] = -1.0;
            }
        });
        let mut target = QNetwork::new(6);
        target.visit_mut("", &mut |name, mut v| {
            v.fill(0.0);
            if name == "l3.b" {
                v[ndarray::IxDyn(&[0])] = 3.0;
                v[ndarray::IxDyn(&[1])] = 10.0;
            }
        });
        let batch = [t([0.0; 4], Action::Left, 1.0, [0.0; 4], false)];
        let delta = td_error(&batch, &online, &target, 0.99);
        assert!((delta[0] - 5.9).abs() < 1e-12, "{}", delta[0]);
    }

    #[test]
    fn terminal_masking_ignores_next_state() {
        let online = QNetwork::new(7);
        let target = QNetwork::new(8);
        let mut rng = sub_rng(9, "fuzz", 0);
        let base = t([0.3, -0.2, 0.05, 0.6], Action::Right, 0.7, [0.0; 4], true);
        let d0 = td_error(&[base], &online, &target, 0.99)[0];
        for _ in 0..50 {
            let mut fuzzed = base;
            for v in &mut fuzzed.next_state {
                *v = rng.random_range(-100.0..100.0);
            }
            let d = td_error(&[fuzzed], &online, &target, 0.99)[0];
            assert_eq!(d.to_bits(), d0.to_bits());
        }
    }

    #[test]
    fn huber_loss_values() {
        use ndarray::array;
        assert_eq!(huber_loss(&array![0.0]), 0.0);
        assert_eq!(huber_loss(&array![1.0]), 0.5);
        assert_eq!(huber_loss(&array![-1.0]), 0.5);
        let l = huber_loss(&array![0.5, 2.0]);
        assert!((l - 0.8125).abs() < 1e-15);
    }

    #[test]
    fn huber_matches_half_mse_inside_unit_interval() {
        let mut rng = sub_rng(10, "huber", 0);
        for _ in 0..100 {
            let d: f64 = rng.random_range(-1.0..1.0);
            let delta = ndarray::array![d];
            assert_eq!(huber_loss(&delta), 0.5 * d * d);
        }
    }

    #[test]
    fn replay_evicts_oldest_first() {
        let mut buf = ReplayBuffer::new(10);
        for i in 0..15 {
            buf.push(t([i as f64; 4], Action::Left, 0.0, [0.0; 4], false));
        }
        assert_eq!(buf.len(), 10);
        let present: Vec<i64> = buf.iter().map(|t| t.state[0] as i64).collect();
        for old in 0..5 {
            assert!(!present.contains(&old), "transition {old} should have been evicted");
        }
        for kept in 5..15 {
            assert!(present.contains(&kept), "transition {kept} missing");
        }
    }

    #[test]
    fn replay_sampling_is_roughly_uniform() {
        let mut buf = ReplayBuffer::new(100);
        for i in 0..100 {
            buf.push(t([i as f64; 4], Action::Left, 0.0, [0.0; 4], false));
        }
        let mut rng = sub_rng(11, "unif", 0);
        let mut counts = [0u32; 100];
        for idx in buf.sample_indices(100_000, &mut rng).unwrap() {
            counts[idx] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            assert!((850..=1150).contains(&c), "index {i} drawn {c} times");
        }
    }

    #[test]
    fn qnet_checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.ckpt");
        let qnet = QNetwork::new(12);
        save_qnet(&path, &qnet, 5000).unwrap();
        let loaded = load_qnet(&path).unwrap();
        let obs = [0.1, -0.5, 0.03, 1.2];
        let a = qnet.q_values(&obs);
        let b = loaded.q_values(&obs);
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }
}
