//! Maximum-entropy actor–critic pieces shared by SAC and SAVGO.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::numerics::{
    gradient, Activation, AdamConfig, AdamState, Graph, Mlp, MlpBinding, NumericsError, TargetPair, Tensor, Var,
};
use crate::replay::Minibatch;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Added inside `log(1 − tanh² + ε)`.
pub const SQUASH_EPS: f64 = 1e-6;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Anything that can propose actions with log-densities for a batch of states.
pub trait ActionSampler {
    /// `([B, action_dim] actions, [B, 1] log-probabilities)`.
    fn sample_actions<R: Rng + ?Sized>(&self, states: &Tensor, rng: &mut R) -> Result<(Tensor, Tensor), NumericsError>;
}

/// `B × dim` standard normal draws, row-major.
pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::matrix(rows, cols, data).expect("sized")
}

/// Tanh-squashed Gaussian policy rescaled into an action box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub net: Mlp,
    low: Vec<f64>,
    high: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        hidden: &[usize],
        low: Vec<f64>,
        high: Vec<f64>,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * low.len());
        let net = Mlp::new(&sizes, Activation::Relu, Activation::Identity, rng)?;
        Self::from_net(net, low, high)
    }

    pub fn from_net(net: Mlp, low: Vec<f64>, high: Vec<f64>) -> Result<Self, NumericsError> {
        if low.len() != high.len() || low.iter().zip(&high).any(|(l, h)| !(l < h)) {
            return Err(NumericsError::Config(format!("invalid action box {low:?} .. {high:?}")));
        }
        if net.output_size() != 2 * low.len() {
            return Err(NumericsError::Config(format!(
                "policy head emits {} values, need 2 × {}",
                net.output_size(),
                low.len()
            )));
        }
        Ok(Self { net, low, high })
    }

    pub fn action_dim(&self) -> usize {
        self.low.len()
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    fn center(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    fn half(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (h - l)).collect()
    }

    /// tanh saturates to ±1 in floating point; keep emitted actions in the open box.
    fn inside(&self, j: usize, a: f64) -> f64 {
        a.clamp(self.low[j].next_up(), self.high[j].next_down())
    }

    fn log_half_sum(&self) -> f64 {
        self.half().iter().map(|h| h.ln()).sum()
    }

    /// Mean and clamped log-std, each `[B, action_dim]`.
    pub fn head(&self, states: &Tensor) -> Result<(Tensor, Tensor), NumericsError> {
        let out = self.net.forward(states)?;
        let ad = self.action_dim();
        let b = out.rows();
        let (mut mean, mut log_std) = (Vec::with_capacity(b * ad), Vec::with_capacity(b * ad));
        for r in 0..b {
            let row = out.row(r);
            mean.extend_from_slice(&row[..ad]);
            log_std.extend(row[ad..].iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)));
        }
        Ok((Tensor::matrix(b, ad, mean)?, Tensor::matrix(b, ad, log_std)?))
    }

    /// Reparameterized sample driven by explicit standard-normal `noise`.
    pub fn sample_with_noise(&self, states: &Tensor, noise: &Tensor) -> Result<(Tensor, Tensor), NumericsError> {
        let (mean, log_std) = self.head(states)?;
        if noise.shape() != mean.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "policy_sample",
                detail: format!("noise {:?} vs {:?}", noise.shape(), mean.shape()),
            });
        }
        let (center, half) = (self.center(), self.half());
        let ad = self.action_dim();
        let b = mean.rows();
        let mut actions = Vec::with_capacity(b * ad);
        let mut logp = Vec::with_capacity(b);
        for r in 0..b {
            let mut lp = -self.log_half_sum();
            for j in 0..ad {
                let xi = noise.get(r, j);
                let ls = log_std.get(r, j);
                let u = mean.get(r, j) + ls.exp() * xi;
                let t = u.tanh();
                actions.push(self.inside(j, center[j] + half[j] * t));
                lp += -0.5 * xi * xi - ls - HALF_LN_2PI - (1.0 - t * t + SQUASH_EPS).ln();
            }
            logp.push(lp);
        }
        Ok((Tensor::matrix(b, ad, actions)?, Tensor::matrix(b, 1, logp)?))
    }

    /// Same computation recorded on a graph; gradients reach the policy
    /// parameters through `binding`.
    pub fn sample_graph(
        &self,
        g: &mut Graph,
        binding: &MlpBinding,
        states: Var,
        noise: &Tensor,
    ) -> Result<(Var, Var), NumericsError> {
        let ad = self.action_dim();
        let out = binding.forward(g, states)?;
        let mean = g.slice_cols(out, 0, ad)?;
        let raw_log_std = g.slice_cols(out, ad, 2 * ad)?;
        let log_std = g.clamp(raw_log_std, LOG_STD_MIN, LOG_STD_MAX);
        let std = g.exp(log_std);
        let xi = g.constant(noise.clone());
        let spread = g.mul(std, xi)?;
        let u = g.add(mean, spread)?;
        let t = g.tanh(u);
        let half = g.constant(Tensor::row_vector(&self.half()));
        let center = g.constant(Tensor::row_vector(&self.center()));
        let scaled = g.mul_row(t, half)?;
        let raw = g.add_row(scaled, center)?;
        // Constant shift onto the open box; nonzero only where tanh' ≈ 0.
        let shift = g.value(raw).map_indexed(|i, a| self.inside(i % ad, a) - a);
        let shift = g.constant(shift);
        let action = g.add(raw, shift)?;

        // log N(ξ) − Σ log σ − Σ log(1 − tanh² + ε) − Σ log half
        let gauss_const: Vec<f64> = (0..noise.rows())
            .map(|r| {
                -0.5 * noise.row(r).iter().map(|x| x * x).sum::<f64>()
                    - ad as f64 * HALF_LN_2PI
                    - self.log_half_sum()
            })
            .collect();
        let gauss_const = g.constant(Tensor::matrix(noise.rows(), 1, gauss_const)?);
        let ls_sum = g.sum_cols(log_std);
        let t2 = g.square(t);
        let one_minus = g.scale(t2, -1.0);
        let one_minus = g.add_scalar(one_minus, 1.0 + SQUASH_EPS);
        let log_jac = g.log(one_minus);
        let jac_sum = g.sum_cols(log_jac);
        let lp = g.sub(gauss_const, ls_sum)?;
        let logp = g.sub(lp, jac_sum)?;
        Ok((action, logp))
    }

    /// `center + half · tanh(mean)`.
    pub fn deterministic(&self, states: &Tensor) -> Result<Tensor, NumericsError> {
        let (mean, _) = self.head(states)?;
        let (center, half) = (self.center(), self.half());
        let ad = self.action_dim();
        Ok(mean.map_indexed(|i, m| center[i % ad] + half[i % ad] * m.tanh()))
    }

    /// Log-density of an arbitrary in-box action at a single state.
    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> Result<f64, NumericsError> {
        let (mean, log_std) = self.head(&Tensor::row_vector(state))?;
        let (center, half) = (self.center(), self.half());
        let mut lp = -self.log_half_sum();
        for j in 0..self.action_dim() {
            let t = (action[j] - center[j]) / half[j];
            let u = t.atanh();
            let ls = log_std.get(0, j);
            let xi = (u - mean.get(0, j)) / ls.exp();
            lp += -0.5 * xi * xi - ls - HALF_LN_2PI - (1.0 - t * t + SQUASH_EPS).ln();
        }
        Ok(lp)
    }
}

impl ActionSampler for GaussianPolicy {
    fn sample_actions<R: Rng + ?Sized>(&self, states: &Tensor, rng: &mut R) -> Result<(Tensor, Tensor), NumericsError> {
        let noise = standard_normal(states.rows(), self.action_dim(), rng);
        self.sample_with_noise(states, &noise)
    }
}

impl Tensor {
    pub(crate) fn map_indexed(&self, f: impl Fn(usize, f64) -> f64) -> Tensor {
        let data = self.data().iter().enumerate().map(|(i, &v)| f(i, v)).collect();
        Tensor::new(self.shape().to_vec(), data).expect("same shape")
    }
}

/// Critic network `Q(s, a)` on concatenated input.
pub fn critic_net<R: Rng + ?Sized>(
    state_dim: usize,
    action_dim: usize,
    hidden: &[usize],
    rng: &mut R,
) -> Result<Mlp, NumericsError> {
    let mut sizes = vec![state_dim + action_dim];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    Mlp::new(&sizes, Activation::Relu, Activation::Identity, rng)
}

/// Two critics, each with a Polyak-averaged target copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinCritics {
    pub pairs: [TargetPair; 2],
}

impl TwinCritics {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        tau: f64,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        let q1 = TargetPair::new(critic_net(state_dim, action_dim, hidden, rng)?, tau)?;
        let q2 = TargetPair::new(critic_net(state_dim, action_dim, hidden, rng)?, tau)?;
        Ok(Self { pairs: [q1, q2] })
    }

    /// `min_m Q_target_m(s, a)`, `[B, 1]`.
    pub fn conservative_q(&self, states: &Tensor, actions: &Tensor) -> Result<Tensor, NumericsError> {
        conservative_q([&self.pairs[0].target, &self.pairs[1].target], states, actions)
    }

    pub fn polyak_update(&mut self) -> Result<(), NumericsError> {
        for p in &mut self.pairs {
            p.polyak_update()?;
        }
        Ok(())
    }
}

pub fn conservative_q(critics: [&Mlp; 2], states: &Tensor, actions: &Tensor) -> Result<Tensor, NumericsError> {
    let input = states.concat_cols(actions)?;
    let q1 = critics[0].forward(&input)?;
    let q2 = critics[1].forward(&input)?;
    q1.zip_map(&q2, f64::min)
}

/// Graph version of [`conservative_q`] with frozen critic parameters; the
/// result stays differentiable in `actions`.
pub fn conservative_q_graph(
    g: &mut Graph,
    critics: [&MlpBinding; 2],
    states: Var,
    actions: Var,
) -> Result<Var, NumericsError> {
    let input = g.concat_cols(states, actions)?;
    let q1 = critics[0].forward(g, input)?;
    let q2 = critics[1].forward(g, input)?;
    g.min(q1, q2)
}

/// `yᵢ = rᵢ + γ·dᵢ·(min Q̃(sᵢ₊₁, aᵢ₊₁) − η·log π(aᵢ₊₁|sᵢ₊₁))` with fresh
/// next actions. Returned as plain values: no gradient flows through it.
pub fn td_target<P: ActionSampler, R: Rng + ?Sized>(
    batch: &Minibatch,
    policy: &P,
    critics: &TwinCritics,
    eta: f64,
    gamma: f64,
    rng: &mut R,
) -> Result<Tensor, NumericsError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(NumericsError::Config(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    let (next_actions, next_logp) = policy.sample_actions(&batch.next_states, rng)?;
    let q_next = critics.conservative_q(&batch.next_states, &next_actions)?;
    let b = batch.len();
    let y = (0..b)
        .map(|i| {
            let soft = q_next.data()[i] - eta * next_logp.data()[i];
            batch.rewards.data()[i] + gamma * batch.continuations.data()[i] * soft
        })
        .collect();
    Tensor::matrix(b, 1, y)
}

/// Records `(1/B)·Σ (Q(sᵢ, aᵢ) − yᵢ)²` on `g` for a bound critic.
pub fn critic_loss_graph(
    g: &mut Graph,
    critic: &MlpBinding,
    states: &Tensor,
    actions: &Tensor,
    targets: &Tensor,
) -> Result<Var, NumericsError> {
    if targets.len() != states.rows() {
        return Err(NumericsError::ShapeMismatch {
            op: "critic_loss",
            detail: format!("{} targets for {} states", targets.len(), states.rows()),
        });
    }
    let x = g.constant(states.concat_cols(actions)?);
    let y = g.constant(targets.clone().reshape(&[states.rows(), 1])?);
    let q = critic.forward(g, x)?;
    let r = g.sub(q, y)?;
    let sq = g.square(r);
    Ok(g.mean(sq))
}

/// Critic loss value and its gradient w.r.t. the critic parameters.
pub fn critic_loss(
    critic: &Mlp,
    states: &Tensor,
    actions: &Tensor,
    targets: &Tensor,
) -> Result<(f64, Vec<Tensor>), NumericsError> {
    gradient(critic, |g, b| critic_loss_graph(g, b, states, actions, targets))
}

/// Records the standard SAC actor objective `mean(η·log π(â|s) − min Q̃(s, â))`
/// with explicit anchor noise. Returns `(loss, log π)`.
pub fn sac_actor_loss_graph(
    g: &mut Graph,
    policy: &GaussianPolicy,
    binding: &MlpBinding,
    critics: &TwinCritics,
    states: &Tensor,
    noise: &Tensor,
    eta: f64,
) -> Result<(Var, Var), NumericsError> {
    let c1 = critics.pairs[0].target.bind(g, false);
    let c2 = critics.pairs[1].target.bind(g, false);
    let s = g.constant(states.clone());
    let (a, logp) = policy.sample_graph(g, binding, s, noise)?;
    let q = conservative_q_graph(g, [&c1, &c2], s, a)?;
    let ent = g.scale(logp, eta);
    let per = g.sub(ent, q)?;
    Ok((g.mean(per), logp))
}

/// `(loss, ∇θ, mean log π)` of the SAC actor objective.
pub fn sac_actor_loss(
    policy: &GaussianPolicy,
    critics: &TwinCritics,
    states: &Tensor,
    noise: &Tensor,
    eta: f64,
) -> Result<(f64, Vec<Tensor>, f64), NumericsError> {
    let mut mean_logp = 0.0;
    let (loss, grads) = gradient(&policy.net, |g, pb| {
        let (loss, logp) = sac_actor_loss_graph(g, policy, pb, critics, states, noise, eta)?;
        mean_logp = g.value(logp).mean();
        Ok(loss)
    })?;
    Ok((loss, grads, mean_logp))
}

/// Automatically tuned entropy temperature `η = exp(log_eta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyTemperature {
    log_eta: Tensor,
    pub target_entropy: f64,
    adam: AdamState,
}

impl EntropyTemperature {
    pub fn new(initial_eta: f64, target_entropy: f64, adam: AdamConfig) -> Result<Self, NumericsError> {
        if !(initial_eta > 0.0 && initial_eta.is_finite()) {
            return Err(NumericsError::Config(format!("initial temperature must be positive, got {initial_eta}")));
        }
        let log_eta = Tensor::new(vec![1], vec![initial_eta.ln()])?;
        let adam = AdamState::new(std::slice::from_ref(&log_eta), adam);
        Ok(Self { log_eta, target_entropy, adam })
    }

    pub fn eta(&self) -> f64 {
        self.log_eta.data()[0].exp()
    }

    pub fn log_eta(&self) -> f64 {
        self.log_eta.data()[0]
    }

    /// Gradient of `−exp(log_eta)·mean(log π + target_entropy)` w.r.t. `log_eta`.
    pub fn gradient(&self, mean_log_prob: f64) -> f64 {
        -self.eta() * (mean_log_prob + self.target_entropy)
    }

    /// One Adam step; returns the loss value before the step.
    pub fn update(&mut self, mean_log_prob: f64) -> Result<f64, NumericsError> {
        let loss = -self.eta() * (mean_log_prob + self.target_entropy);
        let grad = Tensor::new(vec![1], vec![self.gradient(mean_log_prob)])?;
        self.adam.step(std::slice::from_mut(&mut self.log_eta), &[grad])?;
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Transition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// One-row policy whose head is fixed to `(mean, log_std)` regardless of state.
    fn constant_policy(mean: &[f64], log_std: &[f64], low: Vec<f64>, high: Vec<f64>) -> GaussianPolicy {
        let ad = mean.len();
        let mut bias = mean.to_vec();
        bias.extend_from_slice(log_std);
        let net = Mlp::from_params(
            &[1, 2 * ad],
            vec![Tensor::zeros(&[1, 2 * ad]), Tensor::new(vec![2 * ad], bias).unwrap()],
            Activation::Relu,
            Activation::Identity,
        )
        .unwrap();
        GaussianPolicy::from_net(net, low, high).unwrap()
    }

    struct Fixed {
        actions: Tensor,
        logp: Tensor,
    }

    impl ActionSampler for Fixed {
        fn sample_actions<R: Rng + ?Sized>(&self, _: &Tensor, _: &mut R) -> Result<(Tensor, Tensor), NumericsError> {
            Ok((self.actions.clone(), self.logp.clone()))
        }
    }

    fn const_critic(v: f64) -> Mlp {
        Mlp::from_params(
            &[2, 1],
            vec![Tensor::zeros(&[2, 1]), Tensor::new(vec![1], vec![v]).unwrap()],
            Activation::Relu,
            Activation::Identity,
        )
        .unwrap()
    }

    fn twins(a: f64, b: f64) -> TwinCritics {
        TwinCritics {
            pairs: [TargetPair::new(const_critic(a), 0.995).unwrap(), TargetPair::new(const_critic(b), 0.995).unwrap()],
        }
    }

    fn batch(r: f64, d: f64) -> Minibatch {
        let t = Transition { state: vec![0.0], action: vec![0.0], reward: r, next_state: vec![0.0], continuation: d };
        Minibatch::from_transitions([(0, &t)])
    }

    #[test]
    fn floor_std_collapses_to_center() {
        let p = constant_policy(&[0.0], &[-30.0], vec![-2.0], vec![2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (a, lp) = p.sample_actions(&Tensor::row_vector(&[0.3]), &mut rng).unwrap();
        assert!(a.data()[0].abs() < 1e-7);
        assert!(lp.data()[0].is_finite());
    }

    #[test]
    fn samples_stay_strictly_inside_bounds() {
        let p = constant_policy(&[3.0, -4.0], &[1.5, 2.0], vec![-1.0, 0.0], vec![1.0, 5.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let states = Tensor::zeros(&[10_000, 1]);
        let (a, lp) = p.sample_actions(&states, &mut rng).unwrap();
        for r in 0..a.rows() {
            let row = a.row(r);
            assert!(row[0] > -1.0 && row[0] < 1.0);
            assert!(row[1] > 0.0 && row[1] < 5.0);
        }
        assert!(lp.is_finite());
    }

    #[test]
    fn squashed_density_integrates_to_one() {
        // Midpoint rule over the action interval with 10k points.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let mu = rng.random_range(-1.0..1.0);
            let ls = rng.random_range(-1.0..0.5);
            let (lo, hi) = (-2.0, 2.0);
            let p = constant_policy(&[mu], &[ls], vec![lo], vec![hi]);
            let n = 10_000;
            let h = (hi - lo) / n as f64;
            let total: f64 = (0..n)
                .map(|i| {
                    let a = lo + (i as f64 + 0.5) * h;
                    p.log_prob(&[0.0], &[a]).unwrap().exp() * h
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-3, "mu={mu} ls={ls}: {total}");
        }
    }

    #[test]
    fn sampled_log_prob_matches_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sizes = [2, 5, 4];
        let net = Mlp::new(&sizes, Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let p = GaussianPolicy::from_net(net, vec![-1.0, -3.0], vec![1.0, 2.0]).unwrap();
        let s = Tensor::from_rows(&[vec![0.2, -0.4], vec![1.0, 0.5]]).unwrap();
        let (a, lp) = p.sample_actions(&s, &mut rng).unwrap();
        for r in 0..2 {
            let direct = p.log_prob(s.row(r), a.row(r)).unwrap();
            assert!((direct - lp.data()[r]).abs() < 1e-6);
        }
    }

    #[test]
    fn graph_and_plain_sampling_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::new(&[3, 6, 4], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let p = GaussianPolicy::from_net(net, vec![-2.0, -1.0], vec![2.0, 0.5]).unwrap();
        let s = Tensor::matrix(4, 3, (0..12).map(|i| (i as f64).sin()).collect()).unwrap();
        let noise = standard_normal(4, 2, &mut rng);
        let (a, lp) = p.sample_with_noise(&s, &noise).unwrap();
        let mut g = Graph::new();
        let b = p.net.bind(&mut g, true);
        let sv = g.constant(s);
        let (ga, glp) = p.sample_graph(&mut g, &b, sv, &noise).unwrap();
        assert!(g.value(ga).max_abs_diff(&a) < 1e-12);
        assert!(g.value(glp).max_abs_diff(&lp) < 1e-12);
    }

    #[test]
    fn conservative_q_takes_minimum() {
        let c = twins(3.0, 5.0);
        let q = c.conservative_q(&Tensor::row_vector(&[0.1]), &Tensor::row_vector(&[0.2])).unwrap();
        assert_eq!(q.data(), &[3.0]);
        let same = twins(4.0, 4.0);
        assert_eq!(same.conservative_q(&Tensor::row_vector(&[0.0]), &Tensor::row_vector(&[0.0])).unwrap().data(), &[4.0]);
    }

    #[test]
    fn conservative_q_matches_separate_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = TwinCritics::new(3, 2, &[8], 0.995, &mut rng).unwrap();
        let s = standard_normal(32, 3, &mut rng);
        let a = standard_normal(32, 2, &mut rng);
        let q = c.conservative_q(&s, &a).unwrap();
        for r in 0..32 {
            let mut x = s.row(r).to_vec();
            x.extend_from_slice(a.row(r));
            let x = Tensor::row_vector(&x);
            let q1 = c.pairs[0].target.forward(&x).unwrap().data()[0];
            let q2 = c.pairs[1].target.forward(&x).unwrap().data()[0];
            assert_eq!(q.data()[r], q1.min(q2));
        }
    }

    #[test]
    fn td_target_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let fixed = Fixed { actions: Tensor::row_vector(&[0.0]), logp: Tensor::row_vector(&[-1.0]) };
        let c = twins(2.0, 7.0);
        // γ = 0 → y = r
        assert_eq!(td_target(&batch(1.5, 1.0), &fixed, &c, 0.2, 0.0, &mut rng).unwrap().data(), &[1.5]);
        // terminal (d = 0) → y = r
        assert_eq!(td_target(&batch(1.5, 0.0), &fixed, &c, 0.2, 0.9, &mut rng).unwrap().data(), &[1.5]);
        // r=1, γ=0.9, d=1, Q=2, η=0.2, logπ=−1 → 1 + 0.9·(2 + 0.2) = 2.98
        let y = td_target(&batch(1.0, 1.0), &fixed, &c, 0.2, 0.9, &mut rng).unwrap();
        assert!((y.data()[0] - 2.98).abs() < 1e-12);
        assert!(td_target(&batch(1.0, 1.0), &fixed, &c, 0.2, 1.0, &mut rng).is_err());
    }

    #[test]
    fn critic_loss_values() {
        let s = Tensor::from_rows(&[vec![0.0], vec![0.0]]).unwrap();
        let a = Tensor::from_rows(&[vec![0.0], vec![0.0]]).unwrap();
        let two = const_critic(2.0);
        let (l, _) = critic_loss(&two, &s, &a, &Tensor::matrix(2, 1, vec![2.0, 2.0]).unwrap()).unwrap();
        assert_eq!(l, 0.0);
        let (l, _) = critic_loss(&two, &Tensor::row_vector(&[0.0]), &Tensor::row_vector(&[0.0]), &Tensor::scalar(3.0)).unwrap();
        assert_eq!(l, 1.0);
        // residuals (1, −3) → 5
        let (l, _) = critic_loss(&two, &s, &a, &Tensor::matrix(2, 1, vec![1.0, 5.0]).unwrap()).unwrap();
        assert_eq!(l, 5.0);
        assert!(critic_loss(&two, &s, &a, &Tensor::scalar(1.0)).is_err());
    }

    #[test]
    fn temperature_behaviour() {
        let mut t = EntropyTemperature::new(0.5, -1.0, AdamConfig::default()).unwrap();
        // mean log π = −target → stationary
        t.update(1.0).unwrap();
        assert!((t.eta() - 0.5).abs() < 1e-15);
        // entropy below target: mean log π = 3 > 1 → η grows
        let before = t.eta();
        t.update(3.0).unwrap();
        assert!(t.eta() > before);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            t.update(rng.random_range(-50.0..50.0)).unwrap();
            assert!(t.eta() > 0.0);
        }
        assert!(EntropyTemperature::new(0.0, -1.0, AdamConfig::default()).is_err());
    }
}
