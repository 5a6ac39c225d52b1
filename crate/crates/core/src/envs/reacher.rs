use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvError, EnvSpec, EpisodeClock, Env, StepOutcome};

const DAMPING: f64 = 1.0;

/// Damped point mass pushed towards a goal in the plane.
///
/// Observation `(pos, vel, goal, pos − goal)` (8 values); action is a force in
/// `[−1, 1]²`. Reward `−‖pos − goal‖ − 0.01‖u‖²`.
#[derive(Debug, Clone)]
pub struct PointReacher2d {
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    goal: [f64; 2],
    clock: EpisodeClock,
}

impl Default for PointReacher2d {
    fn default() -> Self {
        Self::new()
    }
}

impl PointReacher2d {
    pub fn new() -> Self {
        let spec = EnvSpec {
            state_dim: 8,
            action_dim: 2,
            action_low: vec![-1.0, -1.0],
            action_high: vec![1.0, 1.0],
            max_episode_steps: 100,
            dt: 0.1,
        };
        Self { spec, pos: [0.0; 2], vel: [0.0; 2], goal: [0.0; 2], clock: EpisodeClock::default() }
    }

    pub fn reset_to(&mut self, pos: [f64; 2], vel: [f64; 2], goal: [f64; 2]) -> Vec<f64> {
        self.pos = pos;
        self.vel = vel;
        self.goal = goal;
        self.clock.start();
        self.observation()
    }

    pub fn observation(&self) -> Vec<f64> {
        let [px, py] = self.pos;
        let [gx, gy] = self.goal;
        vec![px, py, self.vel[0], self.vel[1], gx, gy, px - gx, py - gy]
    }
}

impl Env for PointReacher2d {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Position and goal uniform in `[−1, 1]²`, zero velocity.
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let pos = draw();
        let goal = draw();
        self.reset_to(pos, [0.0, 0.0], goal)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        self.clock.check(&self.spec, action)?;
        let u = self.spec.clip_action(action);
        let dist = ((self.pos[0] - self.goal[0]).powi(2) + (self.pos[1] - self.goal[1]).powi(2)).sqrt();
        let reward = -dist - 0.01 * (u[0] * u[0] + u[1] * u[1]);
        let dt = self.spec.dt;
        for d in 0..2 {
            self.vel[d] += dt * (u[d] - DAMPING * self.vel[d]);
            self.pos[d] += dt * self.vel[d];
        }
        let continuation = self.clock.tick(&self.spec);
        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            continuation,
            time_limit: continuation == 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resting_at_goal_costs_nothing() {
        let mut env = PointReacher2d::new();
        env.reset_to([0.3, -0.2], [0.0, 0.0], [0.3, -0.2]);
        let o = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(o.reward, 0.0);
        assert_eq!(&o.observation[6..], &[0.0, 0.0]);
    }

    #[test]
    fn semi_implicit_step_by_hand() {
        let mut env = PointReacher2d::new();
        env.reset_to([0.0, 0.0], [0.5, 0.0], [1.0, 0.0]);
        let o = env.step(&[1.0, -2.0]).unwrap();
        // vx = 0.5 + 0.1(1 − 0.5) = 0.55, x = 0.055; vy = 0.1(−1) = −0.1, y = −0.01
        assert!((o.observation[2] - 0.55).abs() < 1e-15);
        assert!((o.observation[0] - 0.055).abs() < 1e-15);
        assert!((o.observation[3] + 0.1).abs() < 1e-15);
        assert!((o.observation[1] + 0.01).abs() < 1e-15);
        assert!((o.reward - (-1.0 - 0.01 * 2.0)).abs() < 1e-15);
    }
}
