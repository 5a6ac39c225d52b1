use serde::{Deserialize, Serialize};

use crate::envs::EnvId;
use crate::geometry::GeometryConfig;
use crate::kernel::KernelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Savgo,
    Sac,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Savgo => "savgo",
            Algorithm::Sac => "sac",
        }
    }
}

/// Everything a run depends on. Serialized flat: the geometry and kernel
/// settings appear as top-level keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub env: EnvId,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub total_steps: u64,
    /// Uniform-random actions and no updates for this many steps.
    pub warmup_steps: u64,
    pub batch_size: usize,
    pub gamma: f64,
    /// Polyak retention: `target ← τ·target + (1 − τ)·online`.
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub encoder_lr: f64,
    pub temperature_lr: f64,
    /// Hidden widths shared by actor, critics and encoder.
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub initial_eta: f64,
    pub normalize_observations: bool,
    #[serde(flatten)]
    pub geometry: GeometryConfig,
    #[serde(flatten)]
    pub kernel: KernelConfig,
    /// Ablation: hold ρ at this value instead of annealing.
    pub fixed_rho: Option<f64>,
    /// Ablation: never apply representation-loss updates.
    pub freeze_encoder: bool,
    /// Ablation: hold β at this value instead of tracking value gaps.
    pub fixed_beta: Option<f64>,
    /// Ablation: force ε = 1 (uniform kernel weights).
    pub uniform_kernel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvId::Pendulum,
            algorithm: Algorithm::Savgo,
            seed: 0,
            total_steps: 50_000,
            warmup_steps: 1000,
            batch_size: 256,
            gamma: 0.99,
            tau: 0.995,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            encoder_lr: 3e-4,
            temperature_lr: 3e-4,
            hidden: vec![256, 256],
            buffer_capacity: 100_000,
            eval_interval: 1000,
            eval_episodes: 10,
            initial_eta: 1.0,
            normalize_observations: true,
            geometry: GeometryConfig::default(),
            kernel: KernelConfig::default(),
            fixed_rho: None,
            freeze_encoder: false,
            fixed_beta: None,
            uniform_kernel: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if self.total_steps < self.warmup_steps {
            return Err(format!(
                "total_steps ({}) must be at least warmup_steps ({})",
                self.total_steps, self.warmup_steps
            ));
        }
        if self.batch_size < 2 {
            return Err(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(format!(
                "buffer_capacity ({}) must hold at least one batch ({})",
                self.buffer_capacity, self.batch_size
            ));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(format!("tau must lie in [0, 1], got {}", self.tau));
        }
        for (name, lr) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("encoder_lr", self.encoder_lr),
            ("temperature_lr", self.temperature_lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(format!("{name} must be positive, got {lr}"));
            }
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(format!("hidden widths must be nonempty and positive, got {:?}", self.hidden));
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 {
            return Err("eval_interval and eval_episodes must be positive".into());
        }
        if !(self.initial_eta > 0.0 && self.initial_eta.is_finite()) {
            return Err(format!("initial_eta must be positive, got {}", self.initial_eta));
        }
        if let Some(r) = self.fixed_rho {
            if !(r > 0.0 && r.is_finite()) {
                return Err(format!("fixed_rho must be positive, got {r}"));
            }
        }
        if let Some(b) = self.fixed_beta {
            if !(b > 0.0 && b.is_finite()) {
                return Err(format!("fixed_beta must be positive, got {b}"));
            }
        }
        self.geometry.validate().map_err(|e| e.to_string())?;
        self.kernel.validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    /// The configuration actually run: ablation flags folded into the
    /// settings they override.
    pub fn effective(&self) -> Self {
        let mut c = self.clone();
        if c.uniform_kernel {
            c.kernel.epsilon = 1.0;
        }
        c
    }
}
