use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvError, EnvSpec, EpisodeClock, Env, StepOutcome};

/// Physical constants for `θ̈ = (g/l)·sin θ + u/(m·l²)` with θ = 0 upright.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    /// Angular velocity is clipped to `±max_speed` after each step, if set.
    pub max_speed: Option<f64>,
    pub max_torque: f64,
    pub dt: f64,
    pub max_episode_steps: usize,
}

impl PendulumParams {
    /// Ideal point mass, `m = l = 1`, no speed limit.
    pub fn point_mass() -> Self {
        Self {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            max_speed: None,
            max_torque: 2.0,
            dt: 0.05,
            max_episode_steps: 200,
        }
    }
}

impl Default for PendulumParams {
    /// Uniform rod of unit length and mass, written as the equivalent point
    /// mass (`l = 2/3`, `m = 3/4`, so `g/l = 15` and `1/(m·l²) = 3`), with
    /// angular speed limited to 8 rad/s.
    fn default() -> Self {
        Self { mass: 0.75, length: 2.0 / 3.0, max_speed: Some(8.0), ..Self::point_mass() }
    }
}

/// Torque-limited swing-up. Observation `(cos θ, sin θ, θ̇)`, action torque.
#[derive(Debug, Clone)]
pub struct Pendulum {
    params: PendulumParams,
    spec: EnvSpec,
    theta: f64,
    theta_dot: f64,
    clock: EpisodeClock,
}

pub(crate) fn angle_normalize(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Self {
        let spec = EnvSpec {
            state_dim: 3,
            action_dim: 1,
            action_low: vec![-params.max_torque],
            action_high: vec![params.max_torque],
            max_episode_steps: params.max_episode_steps,
            dt: params.dt,
        };
        Self { params, spec, theta: 0.0, theta_dot: 0.0, clock: EpisodeClock::default() }
    }

    pub fn params(&self) -> &PendulumParams {
        &self.params
    }

    /// Physical state `(θ, θ̇)`.
    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    /// Starts an episode from an explicit physical state.
    pub fn reset_to(&mut self, theta: f64, theta_dot: f64) -> Vec<f64> {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.clock.start();
        self.observation()
    }

    pub fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }

    pub fn steps(&self) -> usize {
        self.clock.steps()
    }
}

impl Env for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// θ ~ U[−π, π), θ̇ ~ U[−1, 1).
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = rng.random_range(-PI..PI);
        let theta_dot = rng.random_range(-1.0..1.0);
        self.reset_to(theta, theta_dot)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        self.clock.check(&self.spec, action)?;
        let u = self.spec.clip_action(action)[0];
        let p = &self.params;
        let th = angle_normalize(self.theta);
        let reward = -(th * th + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u);

        let accel = p.gravity / p.length * self.theta.sin() + u / (p.mass * p.length * p.length);
        let mut theta_dot = self.theta_dot + p.dt * accel;
        if let Some(limit) = p.max_speed {
            theta_dot = theta_dot.clamp(-limit, limit);
        }
        self.theta_dot = theta_dot;
        self.theta += p.dt * theta_dot;

        let continuation = self.clock.tick(&self.spec);
        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            continuation,
            time_limit: continuation == 0.0,
        })
    }
}
