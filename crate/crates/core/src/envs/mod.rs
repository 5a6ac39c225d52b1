//! Deterministic continuous-control tasks.
//!
//! Every task is seed-reproducible: `reset(seed)` fully determines the initial
//! state, and dynamics are noise-free. Episodes end only at the time limit.

mod lqr;
mod normalizer;
mod pendulum;
mod reacher;

pub use lqr::{Lqr1d, LqrParams};
pub use normalizer::ObservationNormalizer;
pub use pendulum::{Pendulum, PendulumParams};
pub use reacher::PointReacher2d;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("step called after the episode finished; call reset first")]
    EpisodeFinished,
    #[error("step called before reset")]
    NotReset,
    #[error("action has {got} dimensions, environment expects {expected}")]
    ActionDim { expected: usize, got: usize },
    #[error("unknown environment id {0:?} (expected pendulum, reacher2d or lqr1d)")]
    UnknownId(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub max_episode_steps: usize,
    pub dt: f64,
}

impl EnvSpec {
    /// Clips `action` into the box, elementwise.
    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(&a, (&lo, &hi))| if a.is_nan() { 0.5 * (lo + hi) } else { a.clamp(lo, hi) })
            .collect()
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// 1 while the episode continues, 0 on its final step.
    pub continuation: f64,
    /// The episode ended because the step limit was reached (always the case
    /// for the tasks here).
    pub time_limit: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.continuation == 0.0
    }
}

/// One replay atom `(s, a, r, s′, d)` with `d = 1` meaning "bootstrap from s′".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub continuation: f64,
}

pub trait Env {
    fn spec(&self) -> &EnvSpec;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError>;
}

/// Environment id as it appears in config documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvId {
    #[serde(rename = "pendulum")]
    Pendulum,
    #[serde(rename = "reacher2d")]
    Reacher2d,
    #[serde(rename = "lqr1d")]
    Lqr1d,
}

impl EnvId {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Pendulum => "pendulum",
            EnvId::Reacher2d => "reacher2d",
            EnvId::Lqr1d => "lqr1d",
        }
    }
}

impl std::str::FromStr for EnvId {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pendulum" => Ok(EnvId::Pendulum),
            "reacher2d" => Ok(EnvId::Reacher2d),
            "lqr1d" => Ok(EnvId::Lqr1d),
            other => Err(EnvError::UnknownId(other.to_string())),
        }
    }
}

impl std::fmt::Display for EnvId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub enum AnyEnv {
    Pendulum(Pendulum),
    Reacher2d(PointReacher2d),
    Lqr1d(Lqr1d),
}

impl AnyEnv {
    pub fn new(id: EnvId) -> Self {
        match id {
            EnvId::Pendulum => AnyEnv::Pendulum(Pendulum::new(PendulumParams::default())),
            EnvId::Reacher2d => AnyEnv::Reacher2d(PointReacher2d::new()),
            EnvId::Lqr1d => AnyEnv::Lqr1d(Lqr1d::new(LqrParams::default())),
        }
    }

    fn inner(&self) -> &dyn Env {
        match self {
            AnyEnv::Pendulum(e) => e,
            AnyEnv::Reacher2d(e) => e,
            AnyEnv::Lqr1d(e) => e,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Env {
        match self {
            AnyEnv::Pendulum(e) => e,
            AnyEnv::Reacher2d(e) => e,
            AnyEnv::Lqr1d(e) => e,
        }
    }
}

impl Env for AnyEnv {
    fn spec(&self) -> &EnvSpec {
        self.inner().spec()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.inner_mut().reset(seed)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        self.inner_mut().step(action)
    }
}

/// Step counter shared by all tasks.
#[derive(Debug, Clone, Default)]
pub(crate) struct EpisodeClock {
    steps: usize,
    started: bool,
    finished: bool,
}

impl EpisodeClock {
    pub(crate) fn start(&mut self) {
        *self = Self { steps: 0, started: true, finished: false };
    }

    pub(crate) fn check(&self, spec: &EnvSpec, action: &[f64]) -> Result<(), EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.finished {
            return Err(EnvError::EpisodeFinished);
        }
        if action.len() != spec.action_dim {
            return Err(EnvError::ActionDim { expected: spec.action_dim, got: action.len() });
        }
        Ok(())
    }

    /// Advances and returns the continuation flag for this step.
    pub(crate) fn tick(&mut self, spec: &EnvSpec) -> f64 {
        self.steps += 1;
        if self.steps >= spec.max_episode_steps {
            self.finished = true;
            0.0
        } else {
            1.0
        }
    }

    pub(crate) fn steps(&self) -> usize {
        self.steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rollout(id: EnvId, seed: u64) -> Vec<StepOutcome> {
        let mut env = AnyEnv::new(id);
        env.reset(seed);
        let dim = env.spec().action_dim;
        let mut out = Vec::new();
        for t in 0.. {
            let a: Vec<f64> = (0..dim).map(|d| ((t * 7 + d * 3) as f64 * 0.37).sin() * 3.0).collect();
            let o = env.step(&a).unwrap();
            let done = o.done();
            out.push(o);
            if done {
                break;
            }
        }
        out
    }

    #[test]
    fn time_limit_and_determinism_for_every_task() {
        for id in [EnvId::Pendulum, EnvId::Reacher2d, EnvId::Lqr1d] {
            let a = rollout(id, 11);
            let b = rollout(id, 11);
            assert_eq!(a, b, "{id} not deterministic");
            let limit = AnyEnv::new(id).spec().max_episode_steps;
            assert_eq!(a.len(), limit);
            for (i, o) in a.iter().enumerate() {
                let last = i + 1 == limit;
                assert_eq!(o.continuation, if last { 0.0 } else { 1.0 });
                assert!(o.reward.is_finite());
                assert!(o.observation.iter().all(|v| v.is_finite()));
            }
            assert!(a.last().unwrap().time_limit);
        }
    }

    #[test]
    fn step_after_terminal_is_an_error() {
        let mut env = AnyEnv::new(EnvId::Lqr1d);
        assert_eq!(env.step(&[0.0]), Err(EnvError::NotReset));
        env.reset(0);
        for _ in 0..env.spec().max_episode_steps {
            env.step(&[0.0]).unwrap();
        }
        assert_eq!(env.step(&[0.0]), Err(EnvError::EpisodeFinished));
        env.reset(1);
        assert!(env.step(&[0.0]).is_ok());
    }

    #[test]
    fn wrong_action_dimension() {
        let mut env = AnyEnv::new(EnvId::Reacher2d);
        env.reset(0);
        assert_eq!(env.step(&[0.0]), Err(EnvError::ActionDim { expected: 2, got: 1 }));
    }

    #[test]
    fn env_ids_parse() {
        for id in [EnvId::Pendulum, EnvId::Reacher2d, EnvId::Lqr1d] {
            assert_eq!(id.as_str().parse::<EnvId>().unwrap(), id);
        }
        assert!("mujoco".parse::<EnvId>().is_err());
    }
}
