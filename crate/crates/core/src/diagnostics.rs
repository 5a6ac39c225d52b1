//! Randomized gradient checks for every trained objective.
//!
//! Each check draws a small random instance, computes the reverse-mode gradient
//! and compares it against central finite differences. Instances whose graph
//! sits within [`MIN_KINK_MARGIN`] of a nondifferentiable point (relu at 0,
//! ties in a min, clamp or Huber thresholds, the embedding norm floor) are
//! redrawn, since finite differences straddling a kink measure nothing useful.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{annotate_pairs, form_pairs, representation_loss_graph, Encoder};
use crate::kernel::{actor_loss_graph, evaluate_candidates, kernel_graph, sample_candidates, KernelInputs};
use crate::numerics::gradcheck::{finite_difference, max_relative_error};
use crate::numerics::{Activation, Graph, Mlp, MlpBinding, NumericsError, Tensor, Var};
use crate::sac::{critic_loss_graph, sac_actor_loss_graph, standard_normal, GaussianPolicy, TwinCritics};

pub const FD_STEP: f64 = 1e-5;
pub const MIN_KINK_MARGIN: f64 = 1e-3;
/// Denominator floor for the relative error of near-zero components.
pub const REL_FLOOR: f64 = 1e-6;
const MAX_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Instances redrawn for lying too close to a kink.
    pub rejected: usize,
}

struct Evaluated {
    loss: f64,
    grads: Vec<Tensor>,
    margin: f64,
}

fn evaluate<F>(net: &Mlp, build: &F) -> Result<Evaluated, NumericsError>
where
    F: Fn(&mut Graph, &MlpBinding) -> Result<Var, NumericsError>,
{
    let mut g = Graph::new();
    let b = net.bind(&mut g, true);
    let loss = build(&mut g, &b)?;
    let grads = g.backward(loss)?;
    Ok(Evaluated { loss: g.value(loss).item()?, grads: b.gradients(&g, &grads), margin: g.kink_margin() })
}

/// Compares analytic and numeric gradients of `build` w.r.t. `net`'s
/// parameters; `None` if the instance is too close to a kink.
fn compare<F>(net: &Mlp, build: F) -> Result<Option<f64>, NumericsError>
where
    F: Fn(&mut Graph, &MlpBinding) -> Result<Var, NumericsError>,
{
    let base = evaluate(net, &build)?;
    if base.margin < MIN_KINK_MARGIN || !base.loss.is_finite() {
        return Ok(None);
    }
    let mut work = net.clone();
    let mut failure = None;
    let numeric = finite_difference(net.params(), FD_STEP, |p| {
        work.params_mut().clone_from_slice(p);
        match evaluate(&work, &build) {
            Ok(e) => e.loss,
            Err(err) => {
                failure = Some(err);
                f64::NAN
            }
        }
    });
    if let Some(err) = failure {
        return Err(err);
    }
    Ok(Some(max_relative_error(&base.grads, &numeric, REL_FLOOR)))
}

fn draw<G>(seed: u64, mut instance: G) -> Result<GradCheck, NumericsError>
where
    G: FnMut(&mut ChaCha8Rng) -> Result<Option<f64>, NumericsError>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for rejected in 0..MAX_DRAWS {
        if let Some(max_rel_error) = instance(&mut rng)? {
            return Ok(GradCheck { max_rel_error, rejected });
        }
    }
    Err(NumericsError::Config(format!("no kink-free instance in {MAX_DRAWS} draws")))
}

fn dims<R: Rng>(rng: &mut R) -> (usize, usize, usize) {
    (rng.random_range(1..=3), rng.random_range(1..=2), rng.random_range(2..=5))
}

fn action_box<R: Rng>(rng: &mut R, ad: usize) -> (Vec<f64>, Vec<f64>) {
    let low: Vec<f64> = (0..ad).map(|_| rng.random_range(-2.0..0.0)).collect();
    let high = low.iter().map(|l| l + rng.random_range(0.5..3.0)).collect();
    (low, high)
}

/// Mean squared TD error w.r.t. one critic's parameters.
pub fn critic_loss_check(seed: u64) -> Result<GradCheck, NumericsError> {
    draw(seed, |rng| {
        let (sd, ad, b) = dims(rng);
        let net = Mlp::new(&[sd + ad, 4, 4, 1], Activation::Relu, Activation::Identity, rng)?;
        let s = standard_normal(b, sd, rng);
        let a = standard_normal(b, ad, rng);
        let y = standard_normal(b, 1, rng);
        compare(&net, |g, nb| critic_loss_graph(g, nb, &s, &a, &y))
    })
}

/// Pairwise cosine regression w.r.t. a 4-unit encoder.
pub fn representation_loss_check(seed: u64) -> Result<GradCheck, NumericsError> {
    draw(seed, |rng| {
        let (sd, ad, b) = dims(rng);
        let d = rng.random_range(2..=4);
        let enc = Encoder::new(sd, ad, &[4], d, 0.995, rng)?;
        let s = standard_normal(b, sd, rng);
        let a = standard_normal(b, ad, rng);
        let q: Vec<f64> = (0..b).map(|_| rng.random_range(-3.0..0.0)).collect();
        let pairs = form_pairs(b, rng).expect("b ≥ 2");
        let lambda = [0.5, 1.0, 2.0][rng.random_range(0..3)];
        let pairs = annotate_pairs(&pairs, &q, rng.random_range(0.5..2.0), lambda)?;
        let delta = [0.1, 0.5, 1.0][rng.random_range(0..3)];
        compare(&enc.nets.online, |g, nb| representation_loss_graph(g, nb, &s, &a, &pairs, delta))
    })
}

struct ActorInstance {
    policy: GaussianPolicy,
    critics: TwinCritics,
    encoder: Encoder,
    states: Tensor,
    noise: Tensor,
    eta: f64,
}

fn actor_instance(rng: &mut ChaCha8Rng) -> Result<ActorInstance, NumericsError> {
    let (sd, ad, b) = dims(rng);
    let (low, high) = action_box(rng, ad);
    let policy = GaussianPolicy::new(sd, &[4], low, high, rng)?;
    let critics = TwinCritics::new(sd, ad, &[4], 0.995, rng)?;
    let encoder = Encoder::new(sd, ad, &[4], 3, 0.995, rng)?;
    let states = standard_normal(b, sd, rng);
    let noise = standard_normal(b, ad, rng);
    let eta = rng.random_range(0.01..1.0);
    Ok(ActorInstance { policy, critics, encoder, states, noise, eta })
}

/// Single-sample maximum-entropy actor objective w.r.t. a 4-unit actor.
pub fn sac_actor_loss_check(seed: u64) -> Result<GradCheck, NumericsError> {
    draw(seed, |rng| {
        let x = actor_instance(rng)?;
        compare(&x.policy.net, |g, pb| {
            Ok(sac_actor_loss_graph(g, &x.policy, pb, &x.critics, &x.states, &x.noise, x.eta)?.0)
        })
    })
}

/// Kernel actor objective through the full bundle w.r.t. a 4-unit actor.
pub fn kernel_actor_loss_check(seed: u64) -> Result<GradCheck, NumericsError> {
    draw(seed, |rng| {
        let x = actor_instance(rng)?;
        let k = rng.random_range(1..=6);
        let mix = [0.0, 0.2, 0.5][rng.random_range(0..3)];
        let acts = sample_candidates(&x.policy, &x.states, k, mix, rng)?;
        let cands = evaluate_candidates(&x.encoder.nets.target, &x.critics, &x.states, acts, k)?;
        let inputs = KernelInputs {
            encoder_target: &x.encoder.nets.target,
            states: &x.states,
            anchor_noise: &x.noise,
            candidates: &cands,
            rho: rng.random_range(0.05..0.75),
            epsilon: [0.0, 0.05, 0.5][rng.random_range(0..3)],
        };
        compare(&x.policy.net, |g, pb| {
            let v = kernel_graph(g, &x.policy, pb, &inputs)?;
            actor_loss_graph(g, &v, x.eta)
        })
    })
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = 0.5 * (i + j) as f64;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Settings for [`geometry_learnability`].
#[derive(Debug, Clone, Copy)]
pub struct LearnabilitySetup {
    pub updates: usize,
    pub batch: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub learning_rate: f64,
    pub held_out_pairs: usize,
    /// Entries of `W` are drawn from `U[−w_scale, w_scale]`.
    pub w_scale: f64,
    pub lambda: f64,
}

impl Default for LearnabilitySetup {
    fn default() -> Self {
        Self { updates: 5000, batch: 256, hidden: 256, embed_dim: 64, learning_rate: 3e-4, held_out_pairs: 2000, w_scale: 1.5, lambda: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnabilityReport {
    /// Spearman correlation between cosines and targets over all held-out pairs.
    pub spearman: f64,
    /// Same, restricted to pairs whose value gap is below β (target > −1).
    pub spearman_unsaturated: f64,
    /// Fraction of held-out pairs with target exactly −1.
    pub saturated_fraction: f64,
}

/// Trains an encoder against the frozen value `Q*(s, a) = −‖a − g(s)‖` with
/// `g(s) = tanh(W·s)` on uniform random data, then returns the Spearman
/// correlation between embedding cosines and target similarities on fresh pairs.
pub fn geometry_learnability(seed: u64, setup: LearnabilitySetup) -> Result<LearnabilityReport, NumericsError> {
    use crate::geometry::{encode, representation_loss, BetaScale, GeometryConfig};
    use crate::numerics::{AdamConfig, AdamState};

    const SD: usize = 3;
    const AD: usize = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..SD * AD).map(|_| rng.random_range(-setup.w_scale..setup.w_scale)).collect();
    let value = |s: &[f64], a: &[f64]| -> f64 {
        (0..AD)
            .map(|j| {
                let gj = (0..SD).map(|i| w[j * SD + i] * s[i]).sum::<f64>().tanh();
                (a[j] - gj).powi(2)
            })
            .sum::<f64>()
            .sqrt()
            * -1.0
    };
    let uniform = |rng: &mut ChaCha8Rng, n: usize, d: usize| {
        Tensor::matrix(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("sized")
    };
    let cfg = GeometryConfig::default();
    let mut beta = BetaScale::from_config(&cfg)?;
    let mut enc = Encoder::new(SD, AD, &[setup.hidden, setup.hidden], setup.embed_dim, 0.995, &mut rng)?;
    let mut adam = AdamState::new(enc.nets.online.params(), AdamConfig::with_lr(setup.learning_rate));
    for _ in 0..setup.updates {
        let s = uniform(&mut rng, setup.batch, SD);
        let a = uniform(&mut rng, setup.batch, AD);
        let q: Vec<f64> = (0..setup.batch).map(|r| value(s.row(r), a.row(r))).collect();
        let idx = form_pairs(setup.batch, &mut rng).expect("batch ≥ 2");
        let gaps: Vec<f64> = idx.iter().map(|&(i, j)| (q[i] - q[j]).abs()).collect();
        beta.update(&gaps)?;
        let pairs = annotate_pairs(&idx, &q, beta.value(), setup.lambda)?;
        let (_, grads) = representation_loss(&enc.nets.online, &s, &a, &pairs, cfg.huber_delta)?;
        adam.step(enc.nets.online.params_mut(), &grads)?;
    }
    let n = 2 * setup.held_out_pairs;
    let s = uniform(&mut rng, n, SD);
    let a = uniform(&mut rng, n, AD);
    let q: Vec<f64> = (0..n).map(|r| value(s.row(r), a.row(r))).collect();
    let z = encode(&enc.nets.online, &s, &a)?;
    let idx: Vec<(usize, usize)> = (0..setup.held_out_pairs).map(|p| (2 * p, 2 * p + 1)).collect();
    let pairs = annotate_pairs(&idx, &q, beta.value(), setup.lambda)?;
    let cos: Vec<f64> = pairs.iter().map(|p| crate::geometry::cosine(z.row(p.i), z.row(p.j))).collect();
    let target: Vec<f64> = pairs.iter().map(|p| p.target_sim).collect();
    let (mut uc, mut ut) = (Vec::new(), Vec::new());
    for (c, t) in cos.iter().zip(&target) {
        if *t > -1.0 {
            uc.push(*c);
            ut.push(*t);
        }
    }
    Ok(LearnabilityReport {
        spearman: spearman(&cos, &target),
        spearman_unsaturated: spearman(&uc, &ut),
        saturated_fraction: 1.0 - ut.len() as f64 / target.len() as f64,
    })
}

/// The optimal linear feedback `u = −k·x` as a sampling policy with zero
/// log-density, so soft targets reduce to plain Bellman targets.
#[derive(Debug, Clone, Copy)]
pub struct LinearFeedback {
    pub gain: f64,
}

impl crate::sac::ActionSampler for LinearFeedback {
    fn sample_actions<R: Rng + ?Sized>(&self, states: &Tensor, _rng: &mut R) -> Result<(Tensor, Tensor), NumericsError> {
        let b = states.rows();
        Ok((states.map(|x| -self.gain * x), Tensor::zeros(&[b, 1])))
    }
}

/// Settings for [`lqr_critic_validation`].
#[derive(Debug, Clone)]
pub struct LqrSetup {
    /// Discount 0.95 by default: at 0.99 the 100-step horizon multiplies the
    /// network's small fitting bias near the origin into an offset above 1.
    pub params: crate::envs::LqrParams,
    pub updates: usize,
    pub batch: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub tau: f64,
    pub transitions: usize,
    /// Behaviour states are drawn from `U[−state_range, state_range]`.
    pub state_range: f64,
    /// Standard deviation of the exploration noise added to `−k·x`.
    pub action_noise: f64,
    pub grid_points: usize,
    pub grid_range: f64,
}

impl Default for LqrSetup {
    fn default() -> Self {
        Self {
            params: crate::envs::LqrParams { gamma: 0.95, ..Default::default() },
            updates: 20_000,
            batch: 64,
            hidden: vec![64, 64],
            learning_rate: 3e-4,
            tau: 0.995,
            transitions: 20_000,
            state_range: 2.5,
            action_noise: 0.5,
            grid_points: 21,
            grid_range: 2.0,
        }
    }
}

/// Trains twin critics by TD under the optimal LQR gain and returns, per
/// critic, the mean absolute error of `Q(x, −k·x)` against `−P·x²` on an
/// evenly spaced state grid.
pub fn lqr_critic_validation(seed: u64, setup: &LqrSetup) -> Result<[f64; 2], NumericsError> {
    use crate::envs::{Env, Lqr1d, Transition};
    use crate::numerics::{AdamConfig, AdamState};
    use crate::replay::Minibatch;
    use crate::sac::{critic_loss, td_target};
    use rand_distr::{Distribution, Normal};

    let params = setup.params;
    let policy = LinearFeedback { gain: params.optimal_gain() };
    let mut env = Lqr1d::new(params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, setup.action_noise).map_err(|e| NumericsError::Config(e.to_string()))?;
    let mut data = Vec::with_capacity(setup.transitions);
    for _ in 0..setup.transitions {
        let x = rng.random_range(-setup.state_range..setup.state_range);
        env.reset_to(x);
        let u = -policy.gain * x + noise.sample(&mut rng);
        let out = env.step(&[u]).map_err(|e| NumericsError::Config(e.to_string()))?;
        // Stored unclipped; the task's box is wide enough that nothing clips.
        data.push(Transition { state: vec![x], action: vec![u], reward: out.reward, next_state: out.observation, continuation: 1.0 });
    }

    let mut critics = crate::sac::TwinCritics::new(1, 1, &setup.hidden, setup.tau, &mut rng)?;
    let mut opts = [
        AdamState::new(critics.pairs[0].online.params(), AdamConfig::with_lr(setup.learning_rate)),
        AdamState::new(critics.pairs[1].online.params(), AdamConfig::with_lr(setup.learning_rate)),
    ];
    for _ in 0..setup.updates {
        let batch = Minibatch::from_transitions((0..setup.batch).map(|_| {
            let i = rng.random_range(0..data.len());
            (i, &data[i])
        }));
        let y = td_target(&batch, &policy, &critics, 0.0, params.gamma, &mut rng)?;
        for (pair, opt) in critics.pairs.iter_mut().zip(opts.iter_mut()) {
            let (_, g) = critic_loss(&pair.online, &batch.states, &batch.actions, &y)?;
            opt.step(pair.online.params_mut(), &g)?;
        }
        critics.polyak_update()?;
    }

    let n = setup.grid_points;
    let xs: Vec<f64> = (0..n).map(|i| -setup.grid_range + 2.0 * setup.grid_range * i as f64 / (n - 1) as f64).collect();
    let states = Tensor::matrix(n, 1, xs.clone())?;
    let actions = states.map(|x| -policy.gain * x);
    let mut mae = [0.0; 2];
    for (m, pair) in critics.pairs.iter().enumerate() {
        let q = pair.online.forward(&states.concat_cols(&actions)?)?;
        mae[m] = xs.iter().zip(q.data()).map(|(x, q)| (q - params.optimal_value(*x)).abs()).sum::<f64>() / n as f64;
    }
    Ok(mae)
}
