//! Geometry-aware policy improvement: the value of a reparameterized anchor
//! action is estimated by a softmax kernel over candidate actions, weighted by
//! embedding similarity to the anchor.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{encode, encode_graph};
use crate::numerics::{gradient, softmax_in_place, Graph, Mlp, MlpBinding, NumericsError, Tensor, Var};
use crate::sac::{standard_normal, GaussianPolicy, TwinCritics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub k: usize,
    pub epsilon: f64,
    pub rho_max: f64,
    pub rho_min: f64,
    pub anneal_steps: u64,
    /// Fraction of candidates drawn uniformly from the action box.
    pub proposal_mix: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { k: 32, epsilon: 0.05, rho_max: 0.75, rho_min: 0.05, anneal_steps: 200_000, proposal_mix: 0.2 }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<(), NumericsError> {
        let bad = |m: String| Err(NumericsError::Config(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must lie in [0, 1], got {}", self.epsilon));
        }
        if !(self.rho_min > 0.0 && self.rho_max >= self.rho_min && self.rho_max.is_finite()) {
            return bad(format!("need rho_max ≥ rho_min > 0, got {} and {}", self.rho_max, self.rho_min));
        }
        if !(0.0..=1.0).contains(&self.proposal_mix) {
            return bad(format!("proposal_mix must lie in [0, 1], got {}", self.proposal_mix));
        }
        Ok(())
    }

    /// Number of policy-drawn candidates, `⌈(1 − mix)·K⌉`.
    pub fn policy_candidates(&self) -> usize {
        let exact = (1.0 - self.proposal_mix) * self.k as f64;
        // Guard against 25.000000000000004-style rounding.
        ((exact - 1e-9).ceil().max(0.0) as usize).min(self.k)
    }
}

/// Cosine-annealed kernel temperature.
pub fn rho_schedule(t: u64, cfg: &KernelConfig) -> f64 {
    if t == 0 {
        return cfg.rho_max;
    }
    if cfg.anneal_steps == 0 || t >= cfg.anneal_steps {
        return cfg.rho_min;
    }
    let frac = t as f64 / cfg.anneal_steps as f64;
    cfg.rho_min + 0.5 * (cfg.rho_max - cfg.rho_min) * (1.0 + (PI * frac).cos())
}

/// `K` candidates per state, laid out state-major (`[B·K, action_dim]`).
/// Within each state's block the policy draws come first, then uniform draws.
/// All policy noise is drawn before any uniform sample.
pub fn sample_candidates<R: Rng + ?Sized>(
    policy: &GaussianPolicy,
    states: &Tensor,
    k: usize,
    proposal_mix: f64,
    rng: &mut R,
) -> Result<Tensor, NumericsError> {
    let cfg = KernelConfig { k, proposal_mix, ..KernelConfig::default() };
    let kp = cfg.policy_candidates();
    let b = states.rows();
    let ad = policy.action_dim();
    let policy_actions = if kp > 0 {
        let noise = standard_normal(b * kp, ad, rng);
        policy.sample_with_noise(&states.repeat_rows(kp), &noise)?.0
    } else {
        Tensor::zeros(&[0, ad])
    };
    let mut data = Vec::with_capacity(b * k * ad);
    let mut uniform = Vec::with_capacity(b * (k - kp) * ad);
    for _ in 0..b * (k - kp) {
        for j in 0..ad {
            uniform.push(rng.random_range(policy.low()[j]..policy.high()[j]));
        }
    }
    for r in 0..b {
        for c in 0..kp {
            data.extend_from_slice(policy_actions.row(r * kp + c));
        }
        data.extend_from_slice(&uniform[r * (k - kp) * ad..(r + 1) * (k - kp) * ad]);
    }
    Tensor::matrix(b * k, ad, data)
}

/// `(1 − ε)·softmax(c/ρ) + ε/K`.
pub fn kernel_weights(similarities: &[f64], rho: f64, epsilon: f64) -> Vec<f64> {
    let k = similarities.len() as f64;
    let mut w: Vec<f64> = similarities.iter().map(|c| c / rho).collect();
    softmax_in_place(&mut w);
    w.iter().map(|p| (1.0 - epsilon) * p + epsilon / k).collect()
}

/// `Σ w_k·q_k`.
pub fn kernel_value(weights: &[f64], q: &[f64]) -> f64 {
    weights.iter().zip(q).map(|(w, q)| w * q).sum()
}

/// Candidate actions with their target-encoder embeddings and conservative values.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub k: usize,
    /// `[B·K, action_dim]`
    pub actions: Tensor,
    /// `[B·K, d]`
    pub embeddings: Tensor,
    /// `[B, K]`
    pub values: Tensor,
}

pub fn evaluate_candidates(
    encoder_target: &Mlp,
    critics: &TwinCritics,
    states: &Tensor,
    actions: Tensor,
    k: usize,
) -> Result<CandidateSet, NumericsError> {
    let b = states.rows();
    if actions.rows() != b * k {
        return Err(NumericsError::ShapeMismatch {
            op: "evaluate_candidates",
            detail: format!("{} candidate rows for {b} states × {k}", actions.rows()),
        });
    }
    let rep = states.repeat_rows(k);
    let embeddings = encode(encoder_target, &rep, &actions)?;
    let values = critics.conservative_q(&rep, &actions)?.reshape(&[b, k])?;
    Ok(CandidateSet { k, actions, embeddings, values })
}

/// Values of one actor-update bundle, for inspection and logging.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBundle {
    pub anchor_actions: Tensor,
    pub anchor_log_probs: Tensor,
    pub anchor_embeddings: Tensor,
    pub candidates: CandidateSet,
    /// `[B, K]`
    pub similarities: Tensor,
    /// `[B, K]`
    pub weights: Tensor,
    /// `[B, 1]`
    pub q_hat: Tensor,
}

/// Graph handles produced by [`kernel_graph`].
#[derive(Debug, Clone, Copy)]
pub struct KernelVars {
    pub anchor_action: Var,
    pub anchor_log_prob: Var,
    pub anchor_embedding: Var,
    pub similarities: Var,
    pub weights: Var,
    pub q_hat: Var,
}

/// Everything the kernel actor update reads, apart from the policy itself.
#[derive(Debug, Clone, Copy)]
pub struct KernelInputs<'a> {
    pub encoder_target: &'a Mlp,
    pub states: &'a Tensor,
    pub anchor_noise: &'a Tensor,
    pub candidates: &'a CandidateSet,
    pub rho: f64,
    pub epsilon: f64,
}

/// Records the anchor path: reparameterized anchor → target-encoder embedding
/// → cosine to each candidate embedding → kernel weights → `Q̂`. Candidates,
/// their values and the encoder are constants.
pub fn kernel_graph(
    g: &mut Graph,
    policy: &GaussianPolicy,
    policy_binding: &MlpBinding,
    inputs: &KernelInputs,
) -> Result<KernelVars, NumericsError> {
    let cands = inputs.candidates;
    let k = cands.k;
    let b = inputs.states.rows();
    if !(inputs.rho > 0.0) {
        return Err(NumericsError::Config(format!("kernel temperature must be positive, got {}", inputs.rho)));
    }
    let s = g.constant(inputs.states.clone());
    let (anchor_action, anchor_log_prob) = policy.sample_graph(g, policy_binding, s, inputs.anchor_noise)?;
    let enc = inputs.encoder_target.bind(g, false);
    let anchor_embedding = encode_graph(g, &enc, s, anchor_action)?;
    let rep = g.repeat_rows(anchor_embedding, k);
    let ce = g.constant(cands.embeddings.clone());
    let cos = g.row_cosine(rep, ce)?;
    let similarities = g.reshape(cos, &[b, k])?;
    let logits = g.scale(similarities, 1.0 / inputs.rho);
    let soft = g.softmax_rows(logits);
    let mixed = g.scale(soft, 1.0 - inputs.epsilon);
    let weights = g.add_scalar(mixed, inputs.epsilon / k as f64);
    let q = g.constant(cands.values.clone());
    let wq = g.mul(weights, q)?;
    let q_hat = g.sum_cols(wq);
    Ok(KernelVars { anchor_action, anchor_log_prob, anchor_embedding, similarities, weights, q_hat })
}

fn bundle_from(g: &Graph, v: &KernelVars, candidates: &CandidateSet) -> KernelBundle {
    KernelBundle {
        anchor_actions: g.value(v.anchor_action).clone(),
        anchor_log_probs: g.value(v.anchor_log_prob).clone(),
        anchor_embeddings: g.value(v.anchor_embedding).clone(),
        candidates: candidates.clone(),
        similarities: g.value(v.similarities).clone(),
        weights: g.value(v.weights).clone(),
        q_hat: g.value(v.q_hat).clone(),
    }
}

/// Evaluates the bundle without gradients.
pub fn build_bundle(policy: &GaussianPolicy, inputs: &KernelInputs) -> Result<KernelBundle, NumericsError> {
    let mut g = Graph::new();
    let pb = policy.net.bind(&mut g, false);
    let v = kernel_graph(&mut g, policy, &pb, inputs)?;
    Ok(bundle_from(&g, &v, inputs.candidates))
}

/// Records `mean(η·log π(â|s) − Q̂(s, â))`.
pub fn actor_loss_graph(g: &mut Graph, vars: &KernelVars, eta: f64) -> Result<Var, NumericsError> {
    let ent = g.scale(vars.anchor_log_prob, eta);
    let per = g.sub(ent, vars.q_hat)?;
    Ok(g.mean(per))
}

/// Result of one kernel actor-loss evaluation.
#[derive(Debug, Clone)]
pub struct ActorLoss {
    pub loss: f64,
    pub grads: Vec<Tensor>,
    pub mean_log_prob: f64,
    pub bundle: KernelBundle,
}

pub fn actor_loss(policy: &GaussianPolicy, inputs: &KernelInputs, eta: f64) -> Result<ActorLoss, NumericsError> {
    let mut bundle = None;
    let mut mean_log_prob = 0.0;
    let (loss, grads) = gradient(&policy.net, |g, pb| {
        let v = kernel_graph(g, policy, pb, inputs)?;
        let loss = actor_loss_graph(g, &v, eta)?;
        mean_log_prob = g.value(v.anchor_log_prob).mean();
        bundle = Some(bundle_from(g, &v, inputs.candidates));
        Ok(loss)
    })?;
    Ok(ActorLoss { loss, grads, mean_log_prob, bundle: bundle.expect("built") })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rho_schedule_points() {
        let cfg = KernelConfig::default();
        assert_eq!(rho_schedule(0, &cfg), 0.75);
        assert_eq!(rho_schedule(200_000, &cfg), 0.05);
        assert_eq!(rho_schedule(1_000_000, &cfg), 0.05);
        assert!((rho_schedule(100_000, &cfg) - 0.40).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for t in (0..=200_000).step_by(1000) {
            let r = rho_schedule(t, &cfg);
            assert!(r <= prev);
            prev = r;
        }
    }

    #[test]
    fn policy_candidate_count() {
        let cfg = |k, proposal_mix| KernelConfig { k, proposal_mix, ..KernelConfig::default() };
        assert_eq!(cfg(32, 0.2).policy_candidates(), 26);
        assert_eq!(cfg(10, 0.2).policy_candidates(), 8);
        assert_eq!(cfg(5, 0.0).policy_candidates(), 5);
        assert_eq!(cfg(5, 1.0).policy_candidates(), 0);
        assert_eq!(cfg(1, 0.5).policy_candidates(), 1);
    }

    #[test]
    fn weight_cases() {
        let w = kernel_weights(&[0.3, 0.3, 0.3, 0.3], 0.5, 0.0);
        assert!(w.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        let w = kernel_weights(&[1.0, -1.0, 0.2], 0.1, 1.0);
        assert!(w.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        let w = kernel_weights(&[1.0, 0.0], 1.0, 0.0);
        let e = std::f64::consts::E;
        assert!((w[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((w[1] - 1.0 / (e + 1.0)).abs() < 1e-15);
        let w = kernel_weights(&[1.0, 0.9, 0.5, -0.2], 1e-4, 0.0);
        assert!(w[0] >= 1.0 - 1e-6);
    }

    #[test]
    fn value_cases() {
        assert_eq!(kernel_value(&[0.25, 0.75], &[0.0, 4.0]), 3.0);
        assert_eq!(kernel_value(&[0.0, 1.0, 0.0], &[5.0, -2.0, 7.0]), -2.0);
        assert!((kernel_value(&[1.0 / 3.0; 3], &[1.0, 2.0, 6.0]) - 3.0).abs() < 1e-15);
    }

    fn setup(seed: u64, k: usize, mix: f64) -> (GaussianPolicy, Mlp, TwinCritics, Tensor, Tensor, CandidateSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = GaussianPolicy::new(3, &[8], vec![-2.0], vec![2.0], &mut rng).unwrap();
        let enc = Mlp::new(&[4, 8, 5], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let critics = TwinCritics::new(3, 1, &[8], 0.995, &mut rng).unwrap();
        let states = standard_normal(6, 3, &mut rng);
        let noise = standard_normal(6, 1, &mut rng);
        let acts = sample_candidates(&policy, &states, k, mix, &mut rng).unwrap();
        let cands = evaluate_candidates(&enc, &critics, &states, acts, k).unwrap();
        (policy, enc, critics, states, noise, cands)
    }

    #[test]
    fn bundle_endpoints() {
        let (policy, enc, _c, states, noise, cands) = setup(3, 1, 0.2);
        let inputs = KernelInputs { encoder_target: &enc, states: &states, anchor_noise: &noise, candidates: &cands, rho: 0.3, epsilon: 0.0 };
        let b = build_bundle(&policy, &inputs).unwrap();
        assert!(b.weights.data().iter().all(|&w| w == 1.0));
        assert_eq!(b.q_hat, cands.values);

        let (policy, enc, _c, states, noise, cands) = setup(4, 7, 0.2);
        let inputs = KernelInputs { encoder_target: &enc, states: &states, anchor_noise: &noise, candidates: &cands, rho: 0.3, epsilon: 1.0 };
        let b = build_bundle(&policy, &inputs).unwrap();
        for r in 0..6 {
            let q = cands.values.row(r);
            let mean = q.iter().sum::<f64>() / 7.0;
            assert!((b.q_hat.data()[r] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn actor_loss_without_entropy_is_negative_mean_q_hat() {
        let (policy, enc, _c, states, noise, cands) = setup(5, 4, 0.5);
        let inputs = KernelInputs { encoder_target: &enc, states: &states, anchor_noise: &noise, candidates: &cands, rho: 0.2, epsilon: 0.05 };
        let out = actor_loss(&policy, &inputs, 0.0).unwrap();
        assert!((out.loss + out.bundle.q_hat.mean()).abs() < 1e-12);
        let out2 = actor_loss(&policy, &inputs, 0.2).unwrap();
        let expect = 0.2 * out2.bundle.anchor_log_probs.mean() - out2.bundle.q_hat.mean();
        assert!((out2.loss - expect).abs() < 1e-12);
    }

    #[test]
    fn candidates_respect_mix_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let policy = GaussianPolicy::new(2, &[4], vec![-1.0, 0.0], vec![1.0, 3.0], &mut rng).unwrap();
        let states = standard_normal(5, 2, &mut rng);
        let c = sample_candidates(&policy, &states, 9, 0.3, &mut rng).unwrap();
        assert_eq!(c.shape(), &[45, 2]);
        for r in 0..45 {
            let a = c.row(r);
            assert!(a[0] > -1.0 && a[0] < 1.0 && a[1] > 0.0 && a[1] < 3.0);
        }
    }
}
