//! Continuous-action cartpole and pendulum simulators.
//!
//! Both environments are pure functions of `(state, action)`. Rewards are
//! analytic, so the planner can score model rollouts with exactly the reward
//! the real environment would assign.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CARTPOLE_X_LIMIT: f64 = 2.4;
pub const CARTPOLE_THETA_LIMIT: f64 = 0.2095;
pub const PENDULUM_MAX_SPEED: f64 = 8.0;
pub const PENDULUM_MAX_TORQUE: f64 = 2.0;
pub const DEFAULT_EPISODE_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Cartpole,
    Pendulum,
}

impl EnvId {
    pub fn name(self) -> &'static str {
        match self {
            EnvId::Cartpole => "cartpole",
            EnvId::Pendulum => "pendulum",
        }
    }

    pub fn obs_dim(self) -> usize {
        match self {
            EnvId::Cartpole => 4,
            EnvId::Pendulum => 3,
        }
    }

    pub fn act_dim(self) -> usize {
        1
    }

    /// Per-dimension action bounds `(low, high)`.
    pub fn action_bounds(self) -> (f64, f64) {
        match self {
            EnvId::Cartpole => (-1.0, 1.0),
            EnvId::Pendulum => (-PENDULUM_MAX_TORQUE, PENDULUM_MAX_TORQUE),
        }
    }

    pub fn default_region(self) -> RegionSpec {
        match self {
            EnvId::Cartpole => RegionSpec::cartpole_default(),
            EnvId::Pendulum => RegionSpec::pendulum_default(),
        }
    }

    /// Whether an observation ends the episode. Pendulum never terminates.
    pub fn is_terminal(self, obs: &[f64]) -> bool {
        match self {
            EnvId::Cartpole => cartpole_out_of_bounds(obs[0], obs[2]),
            EnvId::Pendulum => false,
        }
    }

    /// Reward of a transition `obs --action--> next_obs`.
    ///
    /// Cartpole pays for surviving into `next_obs`; pendulum charges the cost
    /// of the state the action was applied in.
    pub fn transition_reward(self, obs: &[f64], action: &[f64], next_obs: &[f64]) -> f64 {
        match self {
            EnvId::Cartpole => cartpole_reward(next_obs),
            EnvId::Pendulum => pendulum_obs_reward(obs, action[0]),
        }
    }

    /// Draws an initial state.
    pub fn reset<R: Rng + ?Sized>(self, rng: &mut R) -> EnvState {
        match self {
            EnvId::Cartpole => EnvState::Cartpole(CartpoleState {
                x: rng.random_range(-0.05..0.05),
                x_dot: rng.random_range(-0.05..0.05),
                theta: rng.random_range(-0.05..0.05),
                theta_dot: rng.random_range(-0.05..0.05),
            }),
            EnvId::Pendulum => EnvState::Pendulum(PendulumState {
                theta: wrap_angle(rng.random_range(-PI..PI)),
                theta_dot: rng.random_range(-1.0..1.0),
            }),
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cartpole" => Ok(EnvId::Cartpole),
            "pendulum" => Ok(EnvId::Pendulum),
            other => Err(Error::UnknownEnv(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub values: Vec<f64>,
}

impl Observation {
    pub fn new(values: Vec<f64>) -> Self {
        Observation { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

impl From<Vec<f64>> for Observation {
    fn from(values: Vec<f64>) -> Self {
        Observation { values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartpoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartpoleState {
    pub fn observe(&self) -> Observation {
        Observation::new(vec![self.x, self.x_dot, self.theta, self.theta_dot])
    }

    pub fn from_obs(obs: &[f64]) -> Self {
        CartpoleState {
            x: obs[0],
            x_dot: obs[1],
            theta: obs[2],
            theta_dot: obs[3],
        }
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.x_dot.is_finite()
            && self.theta.is_finite()
            && self.theta_dot.is_finite()
    }

    pub fn is_terminal(&self) -> bool {
        cartpole_out_of_bounds(self.x, self.theta)
    }
}

/// Pendulum angle wrapped to (-pi, pi], 0 = upright.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumState {
    pub theta: f64,
    pub theta_dot: f64,
}

impl PendulumState {
    pub fn observe(&self) -> Observation {
        Observation::new(vec![self.theta.cos(), self.theta.sin(), self.theta_dot])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartpoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub half_length: f64,
    pub force_mag: f64,
    pub dt: f64,
}

impl Default for CartpoleParams {
    fn default() -> Self {
        CartpoleParams {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            force_mag: 10.0,
            dt: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<S> {
    pub next: S,
    pub reward: f64,
    pub done: bool,
}

impl CartpoleParams {
    /// One explicit Euler step of the classic cart-pole equations.
    pub fn step(&self, state: &CartpoleState, action: f64) -> Result<StepOutcome<CartpoleState>> {
        if !state.is_finite() || !action.is_finite() {
            return Err(Error::DomainInput(format!(
                "cartpole step with state {state:?}, action {action}"
            )));
        }
        let force = self.force_mag * action;
        let total_mass = self.cart_mass + self.pole_mass;
        let pole_mass_length = self.pole_mass * self.half_length;
        let (sin_t, cos_t) = state.theta.sin_cos();

        let temp = (force + pole_mass_length * state.theta_dot * state.theta_dot * sin_t) / total_mass;
        let theta_acc = (self.gravity * sin_t - cos_t * temp)
            / (self.half_length * (4.0 / 3.0 - self.pole_mass * cos_t * cos_t / total_mass));
        let x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;

        let next = CartpoleState {
            x: state.x + self.dt * state.x_dot,
            x_dot: state.x_dot + self.dt * x_acc,
            theta: state.theta + self.dt * state.theta_dot,
            theta_dot: state.theta_dot + self.dt * theta_acc,
        };
        let done = next.is_terminal();
        Ok(StepOutcome {
            next,
            reward: if done { 0.0 } else { 1.0 },
            done,
        })
    }
}

impl PendulumParams {
    /// Semi-implicit Euler: velocity first, then angle with the new velocity.
    pub fn step(&self, state: &PendulumState, torque: f64) -> Result<StepOutcome<PendulumState>> {
        if !state.theta.is_finite() || !state.theta_dot.is_finite() || !torque.is_finite() {
            return Err(Error::DomainInput(format!(
                "pendulum step with state {state:?}, torque {torque}"
            )));
        }
        let u = torque.clamp(-PENDULUM_MAX_TORQUE, PENDULUM_MAX_TORQUE);
        let reward = -pendulum_cost(wrap_angle(state.theta), state.theta_dot, u);

        let g = self.gravity;
        let m = self.mass;
        let l = self.length;
        let theta_acc = 3.0 * g / (2.0 * l) * state.theta.sin() + 3.0 / (m * l * l) * u;
        let theta_dot = (state.theta_dot + theta_acc * self.dt).clamp(-PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED);
        let theta = wrap_angle(state.theta + theta_dot * self.dt);

        Ok(StepOutcome {
            next: PendulumState { theta, theta_dot },
            reward,
            done: false,
        })
    }

    /// Mechanical energy of a uniform rod pivoting at one end (zero at the pivot height).
    pub fn energy(&self, state: &PendulumState) -> f64 {
        let inertia = self.mass * self.length * self.length / 3.0;
        0.5 * inertia * state.theta_dot * state.theta_dot
            + self.mass * self.gravity * 0.5 * self.length * state.theta.cos()
    }
}

pub fn cartpole_step(state: &CartpoleState, action: f64) -> Result<StepOutcome<CartpoleState>> {
    CartpoleParams::default().step(state, action)
}

pub fn pendulum_step(state: &PendulumState, torque: f64) -> Result<StepOutcome<PendulumState>> {
    PendulumParams::default().step(state, torque)
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

fn cartpole_out_of_bounds(x: f64, theta: f64) -> bool {
    x.abs() > CARTPOLE_X_LIMIT || theta.abs() > CARTPOLE_THETA_LIMIT
}

fn cartpole_reward(obs: &[f64]) -> f64 {
    if cartpole_out_of_bounds(obs[0], obs[2]) {
        0.0
    } else {
        1.0
    }
}

fn pendulum_cost(theta: f64, theta_dot: f64, u: f64) -> f64 {
    theta * theta + 0.1 * theta_dot * theta_dot + 0.001 * u * u
}

fn pendulum_obs_reward(obs: &[f64], torque: f64) -> f64 {
    let u = torque.clamp(-PENDULUM_MAX_TORQUE, PENDULUM_MAX_TORQUE);
    -pendulum_cost(obs[1].atan2(obs[0]), obs[2], u)
}

/// Reward the true environment assigns, computed from an observation and action.
///
/// For cartpole the observation is the state being entered; out-of-bounds
/// states pay nothing.
pub fn analytic_reward(env: EnvId, obs: &Observation, action: &[f64]) -> Result<f64> {
    check_dim(env.obs_dim(), obs.dim(), "observation")?;
    check_dim(env.act_dim(), action.len(), "action")?;
    Ok(match env {
        EnvId::Cartpole => cartpole_reward(&obs.values),
        EnvId::Pendulum => pendulum_obs_reward(&obs.values, action[0]),
    })
}

fn check_dim(expected: usize, got: usize, context: &'static str) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            expected,
            got,
            context,
        });
    }
    Ok(())
}

/// Out-of-distribution region whose transitions are removed from training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "env", rename_all = "lowercase", deny_unknown_fields)]
pub enum RegionSpec {
    /// Pole angle strictly below `threshold`.
    Cartpole { threshold: f64 },
    /// Pendulum angle strictly inside `(lo, hi)`.
    Pendulum { lo: f64, hi: f64 },
}

impl RegionSpec {
    pub fn cartpole_default() -> Self {
        RegionSpec::Cartpole { threshold: -0.105 }
    }

    pub fn pendulum_default() -> Self {
        RegionSpec::Pendulum {
            lo: -3.0 * PI / 4.0,
            hi: -PI / 4.0,
        }
    }

    pub fn env(&self) -> EnvId {
        match self {
            RegionSpec::Cartpole { .. } => EnvId::Cartpole,
            RegionSpec::Pendulum { .. } => EnvId::Pendulum,
        }
    }

    pub fn contains(&self, obs: &[f64]) -> bool {
        match *self {
            RegionSpec::Cartpole { threshold } => obs[2] < threshold,
            RegionSpec::Pendulum { lo, hi } => {
                let theta = obs[1].atan2(obs[0]);
                lo < theta && theta < hi
            }
        }
    }
}

pub fn in_forbidden_region(obs: &Observation, region: &RegionSpec) -> bool {
    region.contains(&obs.values)
}

/// A running environment instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvState {
    Cartpole(CartpoleState),
    Pendulum(PendulumState),
}

impl EnvState {
    pub fn env(&self) -> EnvId {
        match self {
            EnvState::Cartpole(_) => EnvId::Cartpole,
            EnvState::Pendulum(_) => EnvId::Pendulum,
        }
    }

    pub fn observe(&self) -> Observation {
        match self {
            EnvState::Cartpole(s) => s.observe(),
            EnvState::Pendulum(s) => s.observe(),
        }
    }

    /// Advances the state in place, returning `(reward, done)`.
    /// The action is clamped to the environment's bounds.
    pub fn step(&mut self, action: &[f64]) -> Result<(f64, bool)> {
        check_dim(self.env().act_dim(), action.len(), "action")?;
        let (low, high) = self.env().action_bounds();
        let a = action[0].clamp(low, high);
        match self {
            EnvState::Cartpole(s) => {
                let out = cartpole_step(s, a)?;
                *s = out.next;
                Ok((out.reward, out.done))
            }
            EnvState::Pendulum(s) => {
                let out = pendulum_step(s, a)?;
                *s = out.next;
                Ok((out.reward, out.done))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cartpole_upright_is_fixed_point() {
        let s = CartpoleState { x: 0.0, x_dot: 0.0, theta: 0.0, theta_dot: 0.0 };
        let out = cartpole_step(&s, 0.0).unwrap();
        assert_eq!(out.next, s);
        assert_eq!(out.reward, 1.0);
        assert!(!out.done);
    }

    #[test]
    fn cartpole_tilted_beyond_limit_is_terminal() {
        let s = CartpoleState { x: 0.0, x_dot: 0.0, theta: 0.25, theta_dot: 0.0 };
        let out = cartpole_step(&s, 0.0).unwrap();
        assert!(out.done);
        assert_eq!(out.reward, 0.0);
    }

    #[test]
    fn cartpole_single_step_matches_hand_evaluation() {
        // Straight-line evaluation of the ODE with the constants substituted.
        let theta: f64 = 0.05;
        let (s, c) = (theta.sin(), theta.cos());
        let temp = (10.0 + 0.05 * 0.0 * s) / 1.1;
        let theta_acc = (9.8 * s - c * temp) / (0.5 * (4.0 / 3.0 - 0.1 * c * c / 1.1));
        let x_acc = temp - 0.05 * theta_acc * c / 1.1;
        let expected = CartpoleState {
            x: 0.0,
            x_dot: 0.02 * x_acc,
            theta: 0.05,
            theta_dot: 0.02 * theta_acc,
        };

        let out = cartpole_step(&CartpoleState { x: 0.0, x_dot: 0.0, theta, theta_dot: 0.0 }, 1.0).unwrap();
        assert!((out.next.x - expected.x).abs() < 1e-12);
        assert!((out.next.x_dot - expected.x_dot).abs() < 1e-12);
        assert!((out.next.theta - expected.theta).abs() < 1e-12);
        assert!((out.next.theta_dot - expected.theta_dot).abs() < 1e-12);
        assert!(out.next.theta_dot < 0.0, "pushing right tips the pole left");
    }

    #[test]
    fn cartpole_rejects_non_finite() {
        let s = CartpoleState { x: f64::NAN, x_dot: 0.0, theta: 0.0, theta_dot: 0.0 };
        assert!(matches!(cartpole_step(&s, 0.0), Err(Error::DomainInput(_))));
        let s = CartpoleState { x: 0.0, x_dot: 0.0, theta: 0.0, theta_dot: 0.0 };
        assert!(cartpole_step(&s, f64::INFINITY).is_err());
    }

    #[test]
    fn pendulum_upright_equilibrium() {
        let out = pendulum_step(&PendulumState { theta: 0.0, theta_dot: 0.0 }, 0.0).unwrap();
        assert_eq!(out.next, PendulumState { theta: 0.0, theta_dot: 0.0 });
        assert_eq!(out.reward, 0.0);
        assert!(!out.done);
    }

    #[test]
    fn pendulum_hanging_reward() {
        let out = pendulum_step(&PendulumState { theta: PI, theta_dot: 0.0 }, 0.0).unwrap();
        assert!((out.reward + PI * PI).abs() < 1e-12);
    }

    #[test]
    fn pendulum_single_step_matches_hand_evaluation() {
        let acc = 15.0 * 0.1f64.sin() + 3.0 * 2.0;
        let theta_dot = 0.05 * acc;
        let theta = 0.1 + 0.05 * theta_dot;
        let out = pendulum_step(&PendulumState { theta: 0.1, theta_dot: 0.0 }, 2.0).unwrap();
        assert!((out.next.theta_dot - theta_dot).abs() < 1e-12);
        assert!((out.next.theta - theta).abs() < 1e-12);
        assert!((out.reward + 0.01 + 0.004).abs() < 1e-12);
    }

    #[test]
    fn pendulum_clamps_speed_and_torque() {
        let out = pendulum_step(&PendulumState { theta: 1.0, theta_dot: 7.9 }, 50.0).unwrap();
        assert_eq!(out.next.theta_dot, PENDULUM_MAX_SPEED);
        assert!((out.reward + (1.0 + 0.1 * 7.9 * 7.9 + 0.004)).abs() < 1e-12);
    }

    #[test]
    fn pendulum_energy_is_nearly_conserved_at_small_dt() {
        let params = PendulumParams { dt: 0.001, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let mut s = PendulumState {
                theta: rng.random_range(-PI..PI),
                theta_dot: rng.random_range(-2.0..2.0),
            };
            for _ in 0..100 {
                let e0 = params.energy(&s);
                s = params.step(&s, 0.0).unwrap().next;
                assert!((params.energy(&s) - e0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        for k in -20..20 {
            let w = wrap_angle(k as f64 * 0.7);
            assert!(w > -PI && w <= PI);
        }
    }

    #[test]
    fn analytic_reward_examples() {
        let a = [0.3];
        assert_eq!(analytic_reward(EnvId::Cartpole, &vec![0.0; 4].into(), &a).unwrap(), 1.0);
        assert_eq!(
            analytic_reward(EnvId::Cartpole, &vec![3.0, 0.0, 0.0, 0.0].into(), &a).unwrap(),
            0.0
        );
        assert_eq!(
            analytic_reward(EnvId::Pendulum, &vec![1.0, 0.0, 0.0].into(), &[0.0]).unwrap(),
            0.0
        );
        assert!(matches!(
            analytic_reward(EnvId::Pendulum, &vec![1.0, 0.0].into(), &[0.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!("acrobot".parse::<EnvId>(), Err(Error::UnknownEnv(_))));
    }

    #[test]
    fn analytic_reward_matches_step_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let s = CartpoleState {
                x: rng.random_range(-3.0..3.0),
                x_dot: rng.random_range(-3.0..3.0),
                theta: rng.random_range(-0.3..0.3),
                theta_dot: rng.random_range(-3.0..3.0),
            };
            let a = rng.random_range(-1.0..1.0);
            let out = cartpole_step(&s, a).unwrap();
            let r = analytic_reward(EnvId::Cartpole, &out.next.observe(), &[a]).unwrap();
            assert_eq!(r, out.reward);

            let p = PendulumState {
                theta: wrap_angle(rng.random_range(-PI..PI)),
                theta_dot: rng.random_range(-8.0..8.0),
            };
            let u = rng.random_range(-3.0..3.0);
            let out = pendulum_step(&p, u).unwrap();
            let r = analytic_reward(EnvId::Pendulum, &p.observe(), &[u]).unwrap();
            assert!((r - out.reward).abs() < 1e-12);
        }
    }

    #[test]
    fn forbidden_region_examples() {
        let cp = RegionSpec::cartpole_default();
        assert!(in_forbidden_region(&vec![0.0, 0.0, -0.2, 0.0].into(), &cp));
        assert!(!in_forbidden_region(&vec![0.0; 4].into(), &cp));
        let pd = RegionSpec::pendulum_default();
        let inside = PendulumState { theta: -PI / 2.0, theta_dot: 0.0 };
        assert!(in_forbidden_region(&inside.observe(), &pd));
        let outside = PendulumState { theta: PI / 2.0, theta_dot: 0.0 };
        assert!(!in_forbidden_region(&outside.observe(), &pd));
    }

    #[test]
    fn pendulum_observation_on_unit_circle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = EnvId::Pendulum.reset(&mut rng);
        for _ in 0..200 {
            let o = s.observe();
            assert!((o.values[0].powi(2) + o.values[1].powi(2) - 1.0).abs() < 1e-9);
            s.step(&[rng.random_range(-2.0..2.0)]).unwrap();
        }
    }

    #[test]
    fn steps_are_deterministic() {
        let s = CartpoleState { x: 0.1, x_dot: -0.2, theta: 0.03, theta_dot: 0.4 };
        assert_eq!(cartpole_step(&s, 0.7).unwrap(), cartpole_step(&s, 0.7).unwrap());
        let p = PendulumState { theta: 2.0, theta_dot: -1.0 };
        assert_eq!(pendulum_step(&p, 1.2).unwrap(), pendulum_step(&p, 1.2).unwrap());
    }
}
