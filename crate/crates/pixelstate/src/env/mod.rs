//! Cart-pole dynamics with episode bookkeeping and a pixel renderer.
//!
//! The physics follows the classic control formulation: a pole hinged on a
//! cart, pushed left or right with a fixed force, integrated with an explicit
//! Euler step. Episodes terminate when the cart leaves `±position_bound` or
//! the pole leaves `±angle_bound`, and truncate at `max_episode_steps`.
//!
//! Two properties are load-bearing for the rest of the pipeline and are kept
//! exact to the last bit:
//!
//! * determinism — same seed, same action sequence, same trajectory;
//! * mirror symmetry — negating the state and swapping the action negates
//!   the next state exactly (every expression in [`step_dynamics`] is odd in
//!   the mirrored quantities, and IEEE-754 negation commutes with rounding).

mod render;

pub use render::{Frame, FRAME_CHANNELS, FRAME_HEIGHT, FRAME_WIDTH};

use crate::error::{Error, Result};
use crate::seed::sub_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Physical state of the system: cart position/velocity, pole angle (radians
/// from vertical) and angular velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl State {
    pub const ZERO: State = State { x: 0.0, x_dot: 0.0, theta: 0.0, theta_dot: 0.0 };

    pub fn new(x: f64, x_dot: f64, theta: f64, theta_dot: f64) -> Self {
        State { x, x_dot, theta, theta_dot }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        State { x: a[0], x_dot: a[1], theta: a[2], theta_dot: a[3] }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.x_dot.is_finite() && self.theta.is_finite() && self.theta_dot.is_finite()
    }

    /// Componentwise negation; the mirror image of the state.
    pub fn negated(self) -> Self {
        State { x: -self.x, x_dot: -self.x_dot, theta: -self.theta, theta_dot: -self.theta_dot }
    }
}

/// Discrete push direction. `Left` is action 0, `Right` is action 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Left,
    Right,
}

impl Action {
    pub fn value(self) -> u8 {
        match self {
            Action::Left => 0,
            Action::Right => 1,
        }
    }

    pub fn from_value(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Action::Left),
            1 => Ok(Action::Right),
            other => Err(Error::InvalidShape {
                expected: "action in {0, 1}".into(),
                found: other.to_string(),
            }),
        }
    }

    /// The opposite push; used by the mirror-symmetry property.
    pub fn flipped(self) -> Self {
        match self {
            Action::Left => Action::Right,
            Action::Right => Action::Left,
        }
    }
}

/// Outcome of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub next_state: State,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

/// Physical constants and episode limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length; the center of mass sits here.
    pub pole_half_length: f64,
    pub force_magnitude: f64,
    /// Integration step τ in seconds.
    pub time_step: f64,
    pub position_bound: f64,
    pub angle_bound: f64,
    pub max_episode_steps: u32,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            force_magnitude: 10.0,
            time_step: 0.02,
            position_bound: 2.4,
            angle_bound: 0.21,
            max_episode_steps: 500,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.gravity,
            self.cart_mass,
            self.pole_mass,
            self.pole_half_length,
            self.force_magnitude,
            self.time_step,
            self.position_bound,
            self.angle_bound,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) || self.time_step == 0.0 {
            return Err(Error::Config { detail: "env parameters must be finite and nonnegative".into() });
        }
        Ok(())
    }
}

/// Axis-aligned box in state space, used for bin-targeted resets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBounds {
    pub low: [f64; 4],
    pub high: [f64; 4],
}

/// One pure integration step of the cart-pole ODE.
///
/// Explicit Euler with the standard rod-on-cart equations of motion;
/// action 1 applies `+force_magnitude`, action 0 applies the negation.
pub fn step_dynamics(params: &EnvParams, state: &State, action: Action) -> Result<State> {
    if !state.is_finite() {
        return Err(Error::NonFiniteState);
    }
    let force = match action {
        Action::Right => params.force_magnitude,
        Action::Left => -params.force_magnitude,
    };
    let total_mass = params.pole_mass + params.cart_mass;
    let polemass_length = params.pole_mass * params.pole_half_length;

    let cos_theta = state.theta.cos();
    let sin_theta = state.theta.sin();
    let temp = (force + polemass_length * state.theta_dot * state.theta_dot * sin_theta) / total_mass;
    let theta_acc = (params.gravity * sin_theta - cos_theta * temp)
        / (params.pole_half_length * (4.0 / 3.0 - params.pole_mass * cos_theta * cos_theta / total_mass));
    let x_acc = temp - polemass_length * theta_acc * cos_theta / total_mass;

    let tau = params.time_step;
    Ok(State {
        x: state.x + tau * state.x_dot,
        x_dot: state.x_dot + tau * x_acc,
        theta: state.theta + tau * state.theta_dot,
        theta_dot: state.theta_dot + tau * theta_acc,
    })
}

/// Whether a state lies outside the termination bounds.
pub fn out_of_bounds(params: &EnvParams, state: &State) -> bool {
    state.x.abs() > params.position_bound || state.theta.abs() > params.angle_bound
}

/// A cart-pole episode: current state, step counter, termination latch.
///
/// Instances are independent; run as many in parallel as needed, one per
/// execution context.
#[derive(Debug, Clone)]
pub struct CartPoleEnv {
    params: EnvParams,
    state: State,
    steps: u32,
    done: bool,
}

impl CartPoleEnv {
    pub fn new(params: EnvParams) -> Self {
        CartPoleEnv { params, state: State::ZERO, steps: 0, done: false }
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn state(&self) -> State {
        self.state
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Start a fresh episode with every component uniform in [-0.05, 0.05].
    pub fn reset(&mut self, seed: u64) -> State {
        self.reset_in(
            seed,
            &StateBounds { low: [-0.05; 4], high: [0.05; 4] },
        )
    }

    /// Start a fresh episode drawn uniformly from the given box.
    pub fn reset_in(&mut self, seed: u64, bounds: &StateBounds) -> State {
        let mut rng = sub_rng(seed, "env.reset", 0);
        let mut draw = |lo: f64, hi: f64| -> f64 {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            }
        };
        self.state = State {
            x: draw(bounds.low[0], bounds.high[0]),
            x_dot: draw(bounds.low[1], bounds.high[1]),
            theta: draw(bounds.low[2], bounds.high[2]),
            theta_dot: draw(bounds.low[3], bounds.high[3]),
        };
        self.steps = 0;
        self.done = false;
        self.state
    }

    /// Advance one step. Errors if the episode already ended.
    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let next = step_dynamics(&self.params, &self.state, action)?;
        self.steps += 1;
        let terminated = out_of_bounds(&self.params, &next);
        let truncated = !terminated && self.steps >= self.params.max_episode_steps;
        self.state = next;
        self.done = terminated || truncated;
        Ok(StepResult { next_state: next, reward: 1.0, terminated, truncated })
    }

    /// Rasterize the current state.
    pub fn render(&self) -> Frame {
        render::render_state(&self.params, &self.state)
    }

    /// Rasterize an arbitrary state with this environment's bounds.
    pub fn render_state(&self, state: &State) -> Frame {
        render::render_state(&self.params, state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent one-step integrator, written directly from the equations
    /// of motion with a different algebraic arrangement. Kept free of any
    /// code shared with `step_dynamics`.
    fn oracle_step(p: &EnvParams, s: &State, action: Action) -> State {
        let f = if matches!(action, Action::Right) { p.force_magnitude } else { -p.force_magnitude };
        let m_total = p.cart_mass + p.pole_mass;
        let ml = p.pole_mass * p.pole_half_length;
        let (sin_t, cos_t) = (s.theta.sin(), s.theta.cos());

        // theta_acc = (g sinθ (mc+mp) - cosθ (F + ml θ̇² sinθ)) / (l (4/3 (mc+mp) - mp cos²θ))
        let num = p.gravity * sin_t * m_total - cos_t * (f + ml * s.theta_dot.powi(2) * sin_t);
        let den = p.pole_half_length * ((4.0 / 3.0) * m_total - p.pole_mass * cos_t.powi(2));
        let theta_acc = num / den;
        let x_acc = (f + ml * (s.theta_dot.powi(2) * sin_t - theta_acc * cos_t)) / m_total;

        State {
            x: s.x + p.time_step * s.x_dot,
            x_dot: s.x_dot + p.time_step * x_acc,
            theta: s.theta + p.time_step * s.theta_dot,
            theta_dot: s.theta_dot + p.time_step * theta_acc,
        }
    }

    fn assert_close(a: &State, b: &State, tol: f64) {
        for (u, v) in a.to_array().iter().zip(b.to_array()) {
            assert!((u - v).abs() <= tol, "{u} vs {v} (tol {tol})");
        }
    }

    #[test]
    fn reset_is_deterministic_and_in_range() {
        let mut env = CartPoleEnv::new(EnvParams::default());
        let a = env.reset(7);
        let b = env.reset(7);
        assert_eq!(a, b);
        for seed in 0..200 {
            let s = env.reset(seed);
            for v in s.to_array() {
                assert!((-0.05..=0.05).contains(&v), "component {v} outside reset range");
            }
        }
    }

    #[test]
    fn step_matches_independent_oracle() {
        let p = EnvParams::default();
        let mut env = CartPoleEnv::new(p);
        for seed in 0..50 {
            env.reset(seed);
            let mut oracle = env.state();
            let mut rng = sub_rng(seed, "test.actions", 0);
            for _ in 0..100 {
                let action = if rng.random_range(0..2u8) == 0 { Action::Left } else { Action::Right };
                let r = match env.step(action) {
                    Ok(r) => r,
                    Err(_) => break, // episode ended on a previous iteration
                };
                oracle = oracle_step(&p, &oracle, action);
                assert_close(&r.next_state, &oracle, 1e-12);
                if r.terminated || r.truncated {
                    break;
                }
            }
        }
    }

    #[test]
    fn single_push_from_origin_matches_oracle() {
        let p = EnvParams::default();
        let got = step_dynamics(&p, &State::ZERO, Action::Right).unwrap();
        let want = oracle_step(&p, &State::ZERO, Action::Right);
        assert_close(&got, &want, 1e-12);
        // pushing right accelerates the cart right and tips the pole left
        assert!(got.x_dot > 0.0);
        assert!(got.theta_dot < 0.0);
    }

    #[test]
    fn mirror_symmetry_is_exact() {
        let p = EnvParams::default();
        let mut env = CartPoleEnv::new(p);
        for seed in 0..20 {
            env.reset(seed);
            let s = env.state();
            let mut rng = sub_rng(seed, "test.mirror", 0);
            let mut a = s;
            let mut b = s.negated();
            for _ in 0..50 {
                let action = if rng.random_range(0..2u8) == 0 { Action::Left } else { Action::Right };
                a = step_dynamics(&p, &a, action).unwrap();
                b = step_dynamics(&p, &b, action.flipped()).unwrap();
                assert_eq!(a.x.to_bits(), (-b.x).to_bits());
                assert_eq!(a.x_dot.to_bits(), (-b.x_dot).to_bits());
                assert_eq!(a.theta.to_bits(), (-b.theta).to_bits());
                assert_eq!(a.theta_dot.to_bits(), (-b.theta_dot).to_bits());
            }
        }
    }

    #[test]
    fn mirrored_rollouts_from_origin() {
        // action 1 then action 0 vs action 0 then action 1, from the origin:
        // trajectories are sign-mirrored in every component.
        let p = EnvParams::default();
        let a = step_dynamics(&p, &State::ZERO, Action::Right).unwrap();
        let a2 = step_dynamics(&p, &a, Action::Left).unwrap();
        let b = step_dynamics(&p, &State::ZERO, Action::Left).unwrap();
        let b2 = step_dynamics(&p, &b, Action::Right).unwrap();
        assert_eq!(a2.x.to_bits(), (-b2.x).to_bits());
        assert_eq!(a2.theta.to_bits(), (-b2.theta).to_bits());
    }

    #[test]
    fn constant_push_destabilizes_within_episode_limit() {
        let p = EnvParams::default();
        let mut env = CartPoleEnv::new(p);
        env.reset_in(0, &StateBounds { low: [0.0; 4], high: [0.0; 4] });
        let mut steps = 0;
        loop {
            let r = env.step(Action::Right).unwrap();
            steps += 1;
            if r.terminated {
                assert!(r.next_state.theta.abs() > p.angle_bound || r.next_state.x.abs() > p.position_bound);
                break;
            }
            assert!(!r.truncated, "constant push should terminate well before truncation");
            assert!(steps < p.max_episode_steps, "never destabilized");
        }
        assert!(steps < 500);
    }

    #[test]
    fn termination_fires_exactly_on_crossing() {
        let p = EnvParams::default();
        // A state just inside the angle bound, falling: stepping must not
        // terminate while |θ| ≤ 0.21 and must terminate on the first step
        // where |θ| > 0.21.
        let mut env = CartPoleEnv::new(p);
        env.reset_in(0, &StateBounds { low: [0.0, 0.0, 0.2099, 0.4], high: [0.0, 0.0, 0.2099, 0.4] });
        let mut prev = env.state();
        loop {
            let r = env.step(Action::Left).unwrap();
            if prev.theta.abs() > p.angle_bound {
                unreachable!("should have terminated already");
            }
            if r.next_state.theta.abs() > p.angle_bound {
                assert!(r.terminated);
                break;
            }
            assert!(!r.terminated);
            prev = r.next_state;
        }
    }

    #[test]
    fn truncates_at_step_limit() {
        let mut p = EnvParams::default();
        p.max_episode_steps = 25;
        // Zero force keeps the balanced pole at the equilibrium forever.
        p.force_magnitude = 0.0;
        let mut env = CartPoleEnv::new(p);
        env.reset_in(0, &StateBounds { low: [0.0; 4], high: [0.0; 4] });
        for i in 1..=25 {
            let r = env.step(Action::Left).unwrap();
            if i < 25 {
                assert!(!r.truncated && !r.terminated);
            } else {
                assert!(r.truncated && !r.terminated);
            }
        }
        assert!(env.step(Action::Left).is_err());
    }

    #[test]
    fn step_rejects_non_finite_state() {
        let p = EnvParams::default();
        let bad = State { x: f64::NAN, x_dot: 0.0, theta: 0.0, theta_dot: 0.0 };
        assert!(matches!(step_dynamics(&p, &bad, Action::Left), Err(Error::NonFiniteState)));
    }

    #[test]
    fn energy_drift_is_small_without_force() {
        // Mechanical energy of the free system (force magnitude zero): the
        // explicit Euler integrator drifts, but slowly at τ = 0.02.
        let mut p = EnvParams::default();
        p.force_magnitude = 0.0;
        let energy = |s: &State| -> f64 {
            let m_total = p.cart_mass + p.pole_mass;
            let inertia = (4.0 / 3.0) * p.pole_mass * p.pole_half_length.powi(2);
            0.5 * m_total * s.x_dot.powi(2)
                + 0.5 * inertia * s.theta_dot.powi(2)
                + p.pole_mass * p.pole_half_length * s.x_dot * s.theta_dot * s.theta.cos()
                + p.pole_mass * p.gravity * p.pole_half_length * s.theta.cos()
        };
        let mut s = State { x: 0.0, x_dot: 0.0, theta: 0.05, theta_dot: 0.0 };
        let mut e = energy(&s);
        for _ in 0..50 {
            s = step_dynamics(&p, &s, Action::Left).unwrap();
            let e_next = energy(&s);
            assert!(
                (e_next - e).abs() < 0.01 * e.abs(),
                "energy moved {} -> {} in one step",
                e,
                e_next
            );
            e = e_next;
        }
    }
}
