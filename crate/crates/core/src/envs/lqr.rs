use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvError, EnvSpec, EpisodeClock, Env, StepOutcome};

/// Scalar linear system `x′ = a·x + b·u` with reward `−(x² + u²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrParams {
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub max_action: f64,
    pub reset_range: f64,
    pub max_episode_steps: usize,
}

impl Default for LqrParams {
    fn default() -> Self {
        Self { a: 1.0, b: 1.0, gamma: 0.99, max_action: 5.0, reset_range: 2.0, max_episode_steps: 50 }
    }
}

impl LqrParams {
    /// Positive root `P` of the discounted scalar Riccati equation
    /// `P = 1 + γa²P − (γabP)² / (1 + γb²P)`, i.e. of
    /// `γb²P² + (1 − γa² − γb²)P − 1 = 0`.
    pub fn riccati(&self) -> f64 {
        let Self { a, b, gamma, .. } = *self;
        let qa = gamma * b * b;
        let qb = 1.0 - gamma * a * a - gamma * b * b;
        if qa == 0.0 {
            return 1.0 / qb;
        }
        // Stable form of the positive root.
        let disc = (qb * qb + 4.0 * qa).sqrt();
        if qb >= 0.0 {
            2.0 / (qb + disc)
        } else {
            (disc - qb) / (2.0 * qa)
        }
    }

    /// Optimal feedback gain `k` with `u = −k·x`.
    pub fn optimal_gain(&self) -> f64 {
        let p = self.riccati();
        self.gamma * self.a * self.b * p / (1.0 + self.gamma * self.b * self.b * p)
    }

    /// Optimal discounted return from state `x`: `−P·x²`.
    pub fn optimal_value(&self, x: f64) -> f64 {
        -self.riccati() * x * x
    }
}

/// Diagnostic task with a closed-form value function.
#[derive(Debug, Clone)]
pub struct Lqr1d {
    params: LqrParams,
    spec: EnvSpec,
    x: f64,
    clock: EpisodeClock,
}

impl Lqr1d {
    pub fn new(params: LqrParams) -> Self {
        let spec = EnvSpec {
            state_dim: 1,
            action_dim: 1,
            action_low: vec![-params.max_action],
            action_high: vec![params.max_action],
            max_episode_steps: params.max_episode_steps,
            dt: 1.0,
        };
        Self { params, spec, x: 0.0, clock: EpisodeClock::default() }
    }

    pub fn params(&self) -> &LqrParams {
        &self.params
    }

    pub fn lqr_optimal_value(&self, x: f64) -> f64 {
        self.params.optimal_value(x)
    }

    pub fn reset_to(&mut self, x: f64) -> Vec<f64> {
        self.x = x;
        self.clock.start();
        vec![x]
    }
}

impl Env for Lqr1d {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = self.params.reset_range;
        let x = rng.random_range(-r..r);
        self.reset_to(x)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        self.clock.check(&self.spec, action)?;
        let u = self.spec.clip_action(action)[0];
        let reward = -(self.x * self.x + u * u);
        self.x = self.params.a * self.x + self.params.b * u;
        let continuation = self.clock.tick(&self.spec);
        Ok(StepOutcome { observation: vec![self.x], reward, continuation, time_limit: continuation == 0.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Value iteration on the Riccati recursion, started from P = 0.
    fn riccati_by_iteration(p: &LqrParams) -> f64 {
        let (a, b, g) = (p.a, p.b, p.gamma);
        let mut v = 0.0f64;
        for _ in 0..100_000 {
            let next = 1.0 + g * a * a * v - (g * a * b * v).powi(2) / (1.0 + g * b * b * v);
            if (next - v).abs() < 1e-14 {
                return next;
            }
            v = next;
        }
        v
    }

    #[test]
    fn closed_form_matches_fixed_point_iteration() {
        let base = LqrParams::default();
        let p = base.riccati();
        assert!((p - riccati_by_iteration(&base)).abs() < 1e-10);
        // Frozen from the iteration above for a = b = 1, γ = 0.99.
        assert!((p - 1.615_251_245_663_011_7).abs() < 1e-10, "{p}");
        for (a, b, gamma) in [(0.9, 0.5, 0.95), (1.2, 1.0, 0.9), (0.5, 2.0, 0.0)] {
            let params = LqrParams { a, b, gamma, ..base };
            assert!((params.riccati() - riccati_by_iteration(&params)).abs() < 1e-10);
        }
    }

    #[test]
    fn value_is_symmetric_and_zero_at_origin() {
        let env = Lqr1d::new(LqrParams::default());
        assert_eq!(env.lqr_optimal_value(0.0), 0.0);
        for x in [0.1, 0.7, 1.9] {
            assert_eq!(env.lqr_optimal_value(x), env.lqr_optimal_value(-x));
        }
    }

    #[test]
    fn bellman_residual_under_optimal_gain() {
        let p = LqrParams::default();
        let k = p.optimal_gain();
        for i in 0..=40 {
            let x = -2.0 + 0.1 * i as f64;
            let u = -k * x;
            let next = p.a * x + p.b * u;
            let residual = -(x * x + u * u) + p.gamma * p.optimal_value(next) - p.optimal_value(x);
            assert!(residual.abs() <= 1e-8, "x={x}: {residual}");
        }
    }
}
