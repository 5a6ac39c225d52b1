//! The training loop: interaction, critic update, encoder update, actor
//! update, temperature update and target tracking, with periodic evaluation.

mod config;
mod eval;
mod metrics;

pub use config::{Algorithm, ExperimentConfig};
pub use eval::{eval_reset_seed, evaluate, train_reset_seed, DeterministicPolicy, GreedyPolicy};
pub use metrics::{MetricsRow, METRICS_HEADER};

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::envs::{AnyEnv, Env, EnvError, EnvSpec, ObservationNormalizer, Transition};
use crate::geometry::{annotate_pairs, form_pairs, representation_loss, BetaScale, Encoder};
use crate::kernel::{self, evaluate_candidates, rho_schedule, sample_candidates, KernelInputs};
use crate::numerics::{AdamConfig, AdamState, NumericsError, Tensor};
use crate::replay::{ReplayBuffer, ReplayError};
use crate::sac::{
    critic_loss, sac_actor_loss, standard_normal, td_target, ActionSampler, EntropyTemperature, GaussianPolicy,
    TwinCritics,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite {what} at step {step}")]
    NonFinite { step: u64, what: String },
    #[error("numerics failure at step {step}: {source}")]
    Numerics { step: u64, source: NumericsError },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("metrics sink failed: {0}")]
    Sink(String),
}

/// ChaCha stream ids for each independent source of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    pub init: u64,
    pub exploration: u64,
    pub replay: u64,
    pub td: u64,
    pub anchor: u64,
    pub candidates: u64,
    pub pairs: u64,
}

impl Default for Streams {
    fn default() -> Self {
        Self { init: 0, exploration: 1, replay: 2, td: 3, anchor: 4, candidates: 5, pairs: 6 }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

#[derive(Debug, Clone)]
struct Rngs {
    exploration: ChaCha8Rng,
    replay: ChaCha8Rng,
    td: ChaCha8Rng,
    anchor: ChaCha8Rng,
    candidates: ChaCha8Rng,
    pairs: ChaCha8Rng,
}

/// Cumulative number of parameter updates per component.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateCounts {
    pub critics: [u64; 2],
    pub encoder: u64,
    pub actor: u64,
    pub temperature: u64,
    pub targets: u64,
}

/// What happened during one loop iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Environment steps taken so far, including this one.
    pub step: u64,
    pub reward: f64,
    pub updated: bool,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub representation_loss: Option<f64>,
    pub eta: f64,
    pub beta: Option<f64>,
    pub rho: Option<f64>,
    /// Smallest and largest kernel weight in this update's bundle.
    pub kernel_weight_range: Option<(f64, f64)>,
    /// Undiscounted return of an episode that ended on this step.
    pub episode_return: Option<f64>,
    /// Wall time of the actor update (candidates through optimizer step).
    pub actor_seconds: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Losses {
    critic: Option<f64>,
    actor: Option<f64>,
    representation: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: ExperimentConfig,
    spec: EnvSpec,
    env: AnyEnv,
    eval_env: AnyEnv,
    obs: Vec<f64>,
    episode: u64,
    episode_return: f64,
    policy: GaussianPolicy,
    critics: TwinCritics,
    encoder: Encoder,
    temperature: EntropyTemperature,
    actor_opt: AdamState,
    critic_opts: [AdamState; 2],
    encoder_opt: AdamState,
    beta: BetaScale,
    buffer: ReplayBuffer,
    normalizer: ObservationNormalizer,
    rngs: Rngs,
    t: u64,
    counts: UpdateCounts,
    losses: Losses,
    started: Instant,
}

impl Trainer {
    pub fn new(config: &ExperimentConfig) -> Result<Self, TrainError> {
        Self::with_streams(config, Streams::default())
    }

    pub fn with_streams(config: &ExperimentConfig, streams: Streams) -> Result<Self, TrainError> {
        config.validate().map_err(TrainError::Config)?;
        let cfg = config.effective();
        let num = |e: NumericsError| TrainError::Numerics { step: 0, source: e };
        let mut env = AnyEnv::new(cfg.env);
        let spec = env.spec().clone();
        let (sd, ad) = (spec.state_dim, spec.action_dim);

        let mut init = stream(cfg.seed, streams.init);
        let policy = GaussianPolicy::new(sd, &cfg.hidden, spec.action_low.clone(), spec.action_high.clone(), &mut init)
            .map_err(num)?;
        let critics = TwinCritics::new(sd, ad, &cfg.hidden, cfg.tau, &mut init).map_err(num)?;
        let encoder = Encoder::new(sd, ad, &cfg.hidden, cfg.geometry.embed_dim, cfg.tau, &mut init).map_err(num)?;
        let temperature =
            EntropyTemperature::new(cfg.initial_eta, -(ad as f64), AdamConfig::with_lr(cfg.temperature_lr))
                .map_err(num)?;
        let actor_opt = AdamState::new(policy.net.params(), AdamConfig::with_lr(cfg.actor_lr));
        let critic_opts = [
            AdamState::new(critics.pairs[0].online.params(), AdamConfig::with_lr(cfg.critic_lr)),
            AdamState::new(critics.pairs[1].online.params(), AdamConfig::with_lr(cfg.critic_lr)),
        ];
        let encoder_opt = AdamState::new(encoder.nets.online.params(), AdamConfig::with_lr(cfg.encoder_lr));
        let beta = match cfg.fixed_beta {
            Some(b) => BetaScale::new(b.max(cfg.geometry.beta_floor), cfg.geometry.beta_decay, cfg.geometry.beta_floor),
            None => BetaScale::from_config(&cfg.geometry),
        }
        .map_err(num)?;
        let buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
        let mut normalizer = ObservationNormalizer::new(sd, cfg.normalize_observations);
        let obs = env.reset(train_reset_seed(cfg.seed, 0));
        normalizer.update(&obs);
        let rngs = Rngs {
            exploration: stream(cfg.seed, streams.exploration),
            replay: stream(cfg.seed, streams.replay),
            td: stream(cfg.seed, streams.td),
            anchor: stream(cfg.seed, streams.anchor),
            candidates: stream(cfg.seed, streams.candidates),
            pairs: stream(cfg.seed, streams.pairs),
        };
        Ok(Self {
            eval_env: AnyEnv::new(cfg.env),
            cfg,
            spec,
            env,
            obs,
            episode: 0,
            episode_return: 0.0,
            policy,
            critics,
            encoder,
            temperature,
            actor_opt,
            critic_opts,
            encoder_opt,
            beta,
            buffer,
            normalizer,
            rngs,
            t: 0,
            counts: UpdateCounts::default(),
            losses: Losses::default(),
            started: Instant::now(),
        })
    }

    /// The effective configuration (ablation flags applied).
    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.policy
    }

    pub fn critics(&self) -> &TwinCritics {
        &self.critics
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn temperature(&self) -> &EntropyTemperature {
        &self.temperature
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn normalizer(&self) -> &ObservationNormalizer {
        &self.normalizer
    }

    pub fn update_counts(&self) -> UpdateCounts {
        self.counts
    }

    /// β in use for value-gap normalization.
    pub fn beta(&self) -> f64 {
        self.cfg.fixed_beta.unwrap_or(self.beta.value())
    }

    /// Kernel temperature for the update at step `t`.
    pub fn rho_at(&self, t: u64) -> f64 {
        self.cfg.fixed_rho.unwrap_or_else(|| rho_schedule(t, &self.cfg.kernel))
    }

    fn is_savgo(&self) -> bool {
        self.cfg.algorithm == Algorithm::Savgo
    }

    /// Switches the actor objective while keeping every other piece of state,
    /// for paired comparisons between objectives from one shared history.
    pub fn switch_algorithm(&mut self, algorithm: Algorithm, kernel: crate::kernel::KernelConfig) {
        self.cfg.algorithm = algorithm;
        self.cfg.kernel = kernel;
        self.cfg = self.cfg.effective();
    }

    /// Makes the candidate stream a copy of the anchor stream, so a single
    /// policy candidate per state reuses the anchor's noise.
    pub fn align_candidate_stream(&mut self) {
        self.rngs.candidates = self.rngs.anchor.clone();
    }

    /// One loop iteration: a single environment transition, then (after
    /// warmup) one update of each learned component.
    pub fn step(&mut self) -> Result<StepReport, TrainError> {
        let t = self.t;
        let action = if t < self.cfg.warmup_steps {
            (0..self.spec.action_dim)
                .map(|j| self.rngs.exploration.random_range(self.spec.action_low[j]..self.spec.action_high[j]))
                .collect()
        } else {
            let x = Tensor::row_vector(&self.normalizer.normalize(&self.obs));
            let (a, _) = self.policy.sample_actions(&x, &mut self.rngs.exploration).map_err(|e| self.num(e))?;
            a.into_data()
        };
        let out = self.env.step(&action)?;
        self.normalizer.update(&out.observation);
        self.episode_return += out.reward;
        // Time-limit ends are truncations: keep bootstrapping through them.
        let continuation = if out.time_limit { 1.0 } else { out.continuation };
        let next = out.observation.clone();
        self.buffer.push(Transition {
            state: std::mem::replace(&mut self.obs, next),
            action,
            reward: out.reward,
            next_state: out.observation,
            continuation,
        });
        let mut episode_return = None;
        if out.continuation == 0.0 {
            episode_return = Some(self.episode_return);
            self.episode_return = 0.0;
            self.episode += 1;
            self.obs = self.env.reset(train_reset_seed(self.cfg.seed, self.episode));
            self.normalizer.update(&self.obs);
        }
        self.t += 1;

        let mut report = StepReport {
            step: self.t,
            reward: out.reward,
            updated: false,
            critic_loss: None,
            actor_loss: None,
            representation_loss: None,
            eta: self.temperature.eta(),
            beta: self.is_savgo().then(|| self.beta()),
            rho: self.is_savgo().then(|| self.rho_at(t)),
            kernel_weight_range: None,
            episode_return,
            actor_seconds: None,
        };
        if t >= self.cfg.warmup_steps && self.buffer.len() >= self.cfg.batch_size {
            self.update(t, &mut report)?;
        }
        Ok(report)
    }

    fn num(&self, e: NumericsError) -> TrainError {
        match e {
            NumericsError::NonFinite { node, op } => {
                TrainError::NonFinite { step: self.t, what: format!("value in {op} (graph node {node})") }
            }
            other => TrainError::Numerics { step: self.t, source: other },
        }
    }

    fn check(&self, what: &str, v: f64) -> Result<f64, TrainError> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(TrainError::NonFinite { step: self.t, what: what.to_string() })
        }
    }

    fn update(&mut self, t: u64, report: &mut StepReport) -> Result<(), TrainError> {
        let b = self.cfg.batch_size;
        let normalizer = &self.normalizer;
        let batch = self.buffer.sample(b, &mut self.rngs.replay)?.map_states(|s| normalizer.normalize(s));
        let eta = self.temperature.eta();

        // Critics.
        let y = td_target(&batch, &self.policy, &self.critics, eta, self.cfg.gamma, &mut self.rngs.td)
            .map_err(|e| self.num(e))?;
        let mut critic_total = 0.0;
        for m in 0..2 {
            let (l, g) = critic_loss(&self.critics.pairs[m].online, &batch.states, &batch.actions, &y)
                .map_err(|e| self.num(e))?;
            critic_total += self.check("critic loss", l)?;
            self.critic_opts[m].step(self.critics.pairs[m].online.params_mut(), &g).map_err(|e| self.num(e))?;
            self.counts.critics[m] += 1;
        }
        report.critic_loss = Some(critic_total / 2.0);

        // Encoder.
        if self.is_savgo() {
            let pairs = form_pairs(b, &mut self.rngs.pairs).expect("batch_size ≥ 2 is validated");
            let q = self.critics.conservative_q(&batch.states, &batch.actions).map_err(|e| self.num(e))?;
            let q = q.data();
            if self.cfg.fixed_beta.is_none() {
                let gaps: Vec<f64> = pairs.iter().map(|&(i, j)| (q[i] - q[j]).abs()).collect();
                self.beta.update(&gaps).map_err(|e| self.num(e))?;
            }
            let annotated = annotate_pairs(&pairs, q, self.beta(), self.cfg.geometry.lambda).map_err(|e| self.num(e))?;
            let (l, g) = representation_loss(
                &self.encoder.nets.online,
                &batch.states,
                &batch.actions,
                &annotated,
                self.cfg.geometry.huber_delta,
            )
            .map_err(|e| self.num(e))?;
            report.representation_loss = Some(self.check("representation loss", l)?);
            if !self.cfg.freeze_encoder {
                self.encoder_opt.step(self.encoder.nets.online.params_mut(), &g).map_err(|e| self.num(e))?;
                self.counts.encoder += 1;
            }
            report.beta = Some(self.beta());
        }

        // Actor.
        let actor_started = Instant::now();
        let noise = standard_normal(b, self.spec.action_dim, &mut self.rngs.anchor);
        let (loss, grads, mean_log_prob) = match self.cfg.algorithm {
            Algorithm::Sac => sac_actor_loss(&self.policy, &self.critics, &batch.states, &noise, eta)
                .map_err(|e| self.num(e))?,
            Algorithm::Savgo => {
                let k = self.cfg.kernel.k;
                let rho = self.rho_at(t);
                let acts = sample_candidates(
                    &self.policy,
                    &batch.states,
                    k,
                    self.cfg.kernel.proposal_mix,
                    &mut self.rngs.candidates,
                )
                .map_err(|e| self.num(e))?;
                let cands = evaluate_candidates(&self.encoder.nets.target, &self.critics, &batch.states, acts, k)
                    .map_err(|e| self.num(e))?;
                let inputs = KernelInputs {
                    encoder_target: &self.encoder.nets.target,
                    states: &batch.states,
                    anchor_noise: &noise,
                    candidates: &cands,
                    rho,
                    epsilon: self.cfg.kernel.epsilon,
                };
                let out = kernel::actor_loss(&self.policy, &inputs, eta).map_err(|e| self.num(e))?;
                let w = out.bundle.weights.data();
                let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                report.kernel_weight_range = Some((lo, hi));
                report.rho = Some(rho);
                (out.loss, out.grads, out.mean_log_prob)
            }
        };
        report.actor_loss = Some(self.check("actor loss", loss)?);
        self.actor_opt.step(self.policy.net.params_mut(), &grads).map_err(|e| self.num(e))?;
        self.counts.actor += 1;
        report.actor_seconds = Some(actor_started.elapsed().as_secs_f64());

        // Temperature.
        self.check("policy log-probability", mean_log_prob)?;
        self.temperature.update(mean_log_prob).map_err(|e| self.num(e))?;
        report.eta = self.check("temperature", self.temperature.eta())?;
        self.counts.temperature += 1;

        // Targets.
        self.critics.polyak_update().map_err(|e| self.num(e))?;
        // A frozen encoder has nothing to track; skipping keeps its target
        // bit-identical to initialization.
        if self.is_savgo() && !self.cfg.freeze_encoder {
            self.encoder.nets.polyak_update().map_err(|e| self.num(e))?;
        }
        self.counts.targets += 1;

        report.updated = true;
        self.losses = Losses {
            critic: report.critic_loss,
            actor: report.actor_loss,
            representation: report.representation_loss,
        };
        Ok(())
    }

    /// Deterministic evaluation of the current policy on the evaluation seeds.
    pub fn evaluate(&mut self) -> Result<(f64, f64), TrainError> {
        let greedy = GreedyPolicy { policy: &self.policy, normalizer: &self.normalizer };
        Ok(evaluate(&greedy, &mut self.eval_env, self.cfg.eval_episodes, self.cfg.seed)?)
    }

    /// Evaluates and assembles a metrics row for the current step.
    pub fn metrics_row(&mut self) -> Result<MetricsRow, TrainError> {
        let (mean, std) = self.evaluate()?;
        let savgo = self.is_savgo();
        Ok(MetricsRow {
            step: self.t,
            mean_eval_return: mean,
            std_eval_return: std,
            critic_loss: self.losses.critic,
            actor_loss: self.losses.actor,
            representation_loss: self.losses.representation,
            eta: self.temperature.eta(),
            beta: savgo.then(|| self.beta()),
            rho: savgo.then(|| self.rho_at(self.t.saturating_sub(1))),
            wall_seconds: self.started.elapsed().as_secs_f64(),
        })
    }
}

/// Metrics and final state of a finished run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub metrics: Vec<MetricsRow>,
    pub trainer: Trainer,
}

pub fn train(config: &ExperimentConfig) -> Result<RunArtifacts, TrainError> {
    train_with(config, |_| Ok(()))
}

/// Runs `total_steps` iterations, evaluating every `eval_interval` steps and
/// handing each row to `sink` as soon as it exists.
pub fn train_with<F>(config: &ExperimentConfig, mut sink: F) -> Result<RunArtifacts, TrainError>
where
    F: FnMut(&MetricsRow) -> Result<(), String>,
{
    let mut trainer = Trainer::new(config)?;
    let mut metrics = Vec::new();
    while trainer.steps() < trainer.cfg.total_steps {
        trainer.step()?;
        if trainer.steps() % trainer.cfg.eval_interval == 0 {
            let row = trainer.metrics_row()?;
            sink(&row).map_err(TrainError::Sink)?;
            metrics.push(row);
        }
    }
    Ok(RunArtifacts { metrics, trainer })
}
