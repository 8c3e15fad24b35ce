//! Rollouts, normalized error metrics and report generation.
//!
//! Two error figures, both normalized per dimension by the state bounds and
//! expressed in percent:
//!
//! * RMSE% — estimation accuracy: predictor output against the true state
//!   along a trajectory;
//! * MAE% — tracking quality: true state against the zero reference vector,
//!   measuring how tightly an agent holds the system at the setpoint.

mod plot;
mod report;

pub use plot::{line_chart, multi_panel_chart, Series};
pub use report::{report, ReportInputs};

use crate::env::{CartPoleEnv, EnvParams};
use crate::error::{Error, Result};
use crate::predictor::PredictorModel;
use crate::rl::{select_action, ObservationMode, ObsWindow, QNetwork};
use crate::dataset::preprocess;
use crate::seed::{sub_rng, sub_seed};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Per-dimension normalization constants for the metric percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bounds {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { x: 2.4, x_dot: 3.0, theta: 0.21, theta_dot: 3.0 }
    }
}

impl Bounds {
    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().any(|&b| !(b > 0.0)) {
            return Err(Error::Config { detail: "metric bounds must be strictly positive".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationCause {
    /// A state bound was violated.
    Terminated,
    /// The step limit was reached first.
    Truncated,
}

/// One recorded step: the state reached, the estimate of that state (when an
/// observation model ran), the action taken and the raw reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajStep {
    pub state: [f64; 4],
    pub estimate: Option<[f64; 4]>,
    pub action: u8,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial_state: [f64; 4],
    pub steps: Vec<TrajStep>,
    pub cause: TerminationCause,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn has_estimates(&self) -> bool {
        self.steps.iter().all(|s| s.estimate.is_some())
    }
}

/// Control source for a rollout.
#[derive(Clone, Copy)]
pub enum Policy<'a> {
    /// Greedy argmax over a trained Q-network (ε = 0).
    Greedy(&'a QNetwork),
    /// Uniform random actions; the predictor-evaluation regime.
    Random,
}

/// Run one episode and record it. Stops at termination or after `max_steps`.
pub fn rollout(
    env_params: &EnvParams,
    policy: Policy<'_>,
    mode: ObservationMode<'_>,
    seed: u64,
    max_steps: u32,
) -> Result<Trajectory> {
    if max_steps == 0 {
        return Err(Error::Empty { what: "rollout step budget".into() });
    }
    let mut env = CartPoleEnv::new(*env_params);
    let initial = env.reset(sub_seed(seed, "eval.reset", 0));
    let mut rng = sub_rng(seed, "eval.policy", 0);

    let mut window = match mode {
        ObservationMode::FullState => None,
        ObservationMode::Predicted(model) => {
            let frame = preprocess(env.render().data())?;
            Some(ObsWindow::start(model, &frame)?)
        }
    };
    let mut obs = match (&window, mode) {
        (None, _) => initial.to_array(),
        (Some(w), ObservationMode::Predicted(model)) => w.observe(model)?,
        _ => unreachable!(),
    };

    let mut steps = Vec::new();
    let cause = loop {
        let action = match policy {
            Policy::Greedy(qnet) => select_action(qnet.q_values(&obs), 0.0, &mut rng),
            Policy::Random => {
                if rng.random_range(0..2u8) == 0 {
                    crate::env::Action::Left
                } else {
                    crate::env::Action::Right
                }
            }
        };
        let pre_frame = match &window {
            Some(_) => Some(preprocess(env.render().data())?),
            None => None,
        };
        let result = env.step(action)?;
        let estimate = match (&mut window, mode) {
            (Some(w), ObservationMode::Predicted(model)) => {
                w.push(model, pre_frame.as_ref().expect("rendered above"), action)?;
                let est = w.observe(model)?;
                obs = est;
                Some(est)
            }
            _ => {
                obs = result.next_state.to_array();
                None
            }
        };
        steps.push(TrajStep {
            state: result.next_state.to_array(),
            estimate,
            action: action.value(),
            reward: result.reward,
        });
        if result.terminated {
            break TerminationCause::Terminated;
        }
        if result.truncated || steps.len() as u32 >= max_steps {
            break TerminationCause::Truncated;
        }
    };
    Ok(Trajectory { initial_state: initial.to_array(), steps, cause })
}

/// Per-dimension RMSE between estimates and true states, normalized by the
/// bounds, in percent.
pub fn rmse_percent(traj: &Trajectory, bounds: &Bounds) -> Result<[f64; 4]> {
    if traj.is_empty() {
        return Err(Error::Empty { what: "trajectory".into() });
    }
    if !traj.has_estimates() {
        return Err(Error::MissingEstimates);
    }
    let mut sq = [0.0; 4];
    for step in &traj.steps {
        let est = step.estimate.expect("checked above");
        for d in 0..4 {
            let e = est[d] - step.state[d];
            sq[d] += e * e;
        }
    }
    let t = traj.len() as f64;
    let b = bounds.to_array();
    let mut out = [0.0; 4];
    for d in 0..4 {
        out[d] = (sq[d] / t).sqrt() / b[d] * 100.0;
    }
    Ok(out)
}

/// Per-dimension mean |state − 0| normalized by the bounds, in percent.
pub fn mae_percent(traj: &Trajectory, bounds: &Bounds) -> Result<[f64; 4]> {
    if traj.is_empty() {
        return Err(Error::Empty { what: "trajectory".into() });
    }
    let mut acc = [0.0; 4];
    for step in &traj.steps {
        for d in 0..4 {
            acc[d] += step.state[d].abs();
        }
    }
    let t = traj.len() as f64;
    let b = bounds.to_array();
    let mut out = [0.0; 4];
    for d in 0..4 {
        out[d] = acc[d] / t / b[d] * 100.0;
    }
    Ok(out)
}

/// RMSE% of the predictor over seeded random-action rollouts.
pub struct PredictorEval {
    pub per_seed: Vec<(u64, [f64; 4])>,
    pub mean: [f64; 4],
    /// Longest evaluated trajectory, kept for the trace plot.
    pub sample: Trajectory,
}

pub fn evaluate_predictor(
    env_params: &EnvParams,
    model: &PredictorModel,
    bounds: &Bounds,
    base_seed: u64,
    n_rollouts: u32,
    max_steps: u32,
) -> Result<PredictorEval> {
    bounds.validate()?;
    if n_rollouts == 0 {
        return Err(Error::Empty { what: "rollout count".into() });
    }
    let mut per_seed = Vec::new();
    let mut mean = [0.0; 4];
    let mut sample: Option<Trajectory> = None;
    for i in 0..n_rollouts {
        let seed = sub_seed(base_seed, "eval.predictor", u64::from(i));
        let traj = rollout(env_params, Policy::Random, ObservationMode::Predicted(model), seed, max_steps)?;
        let rmse = rmse_percent(&traj, bounds)?;
        for d in 0..4 {
            mean[d] += rmse[d];
        }
        if sample.as_ref().map_or(true, |s| traj.len() > s.len()) {
            sample = Some(traj.clone());
        }
        per_seed.push((seed, rmse));
    }
    for d in &mut mean {
        *d /= f64::from(n_rollouts);
    }
    Ok(PredictorEval { per_seed, mean, sample: sample.expect("n_rollouts ≥ 1") })
}

/// MAE% and episode lengths of a greedy agent over seeded rollouts.
pub struct AgentEval {
    pub per_seed: Vec<(u64, [f64; 4], u32)>,
    pub mean_mae: [f64; 4],
    pub mean_steps: f64,
    pub sample: Trajectory,
}

pub fn evaluate_agent(
    env_params: &EnvParams,
    qnet: &QNetwork,
    mode: ObservationMode<'_>,
    bounds: &Bounds,
    base_seed: u64,
    n_rollouts: u32,
    max_steps: u32,
) -> Result<AgentEval> {
    bounds.validate()?;
    if n_rollouts == 0 {
        return Err(Error::Empty { what: "rollout count".into() });
    }
    let mut per_seed = Vec::new();
    let mut mean_mae = [0.0; 4];
    let mut mean_steps = 0.0;
    let mut sample: Option<Trajectory> = None;
    for i in 0..n_rollouts {
        let seed = sub_seed(base_seed, "eval.agent", u64::from(i));
        let traj = rollout(env_params, Policy::Greedy(qnet), mode, seed, max_steps)?;
        let mae = mae_percent(&traj, bounds)?;
        let steps = traj.len() as u32;
        for d in 0..4 {
            mean_mae[d] += mae[d];
        }
        mean_steps += f64::from(steps);
        if sample.as_ref().map_or(true, |s| traj.len() > s.len()) {
            sample = Some(traj.clone());
        }
        per_seed.push((seed, mae, steps));
    }
    for d in &mut mean_mae {
        *d /= f64::from(n_rollouts);
    }
    mean_steps /= f64::from(n_rollouts);
    Ok(AgentEval { per_seed, mean_mae, mean_steps, sample: sample.expect("n_rollouts ≥ 1") })
}
