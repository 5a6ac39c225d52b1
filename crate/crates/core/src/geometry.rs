//! Value-aware state–action embeddings: an encoder whose pairwise cosine
//! similarities are regressed onto a curvature-mapped, scale-normalized value
//! gap between the pair.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{
    gradient, huber, Activation, Graph, Mlp, MlpBinding, NumericsError, TargetPair, Tensor, Var,
};

/// Embeddings shorter than this are replaced by the first basis vector.
pub const NORM_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    pub lambda: f64,
    pub huber_delta: f64,
    pub embed_dim: usize,
    pub beta_init: f64,
    pub beta_decay: f64,
    pub beta_floor: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { lambda: 1.0, huber_delta: 1.0, embed_dim: 64, beta_init: 1.0, beta_decay: 0.99, beta_floor: 1e-3 }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<(), NumericsError> {
        let bad = |m: String| Err(NumericsError::Config(m));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.huber_delta > 0.0) {
            return bad(format!("huber_delta must be positive, got {}", self.huber_delta));
        }
        if self.embed_dim == 0 {
            return bad("embed_dim must be positive".into());
        }
        BetaScale::new(self.beta_init, self.beta_decay, self.beta_floor).map(|_| ())
    }
}

/// Encoder `z(s, a) -> ℝ^d` and its target copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub nets: TargetPair,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        embed_dim: usize,
        tau: f64,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(embed_dim);
        let net = Mlp::new(&sizes, Activation::Relu, Activation::Identity, rng)?;
        Ok(Self { nets: TargetPair::new(net, tau)? })
    }

    pub fn embed_dim(&self) -> usize {
        self.nets.online.output_size()
    }
}

/// Row-wise embeddings `[B, d]` with the norm floor applied.
pub fn encode(net: &Mlp, states: &Tensor, actions: &Tensor) -> Result<Tensor, NumericsError> {
    let mut z = net.forward(&states.concat_cols(actions)?)?;
    crate::numerics::apply_norm_floor(&mut z, NORM_FLOOR);
    Ok(z)
}

/// Graph version of [`encode`].
pub fn encode_graph(g: &mut Graph, net: &MlpBinding, states: Var, actions: Var) -> Result<Var, NumericsError> {
    let x = g.concat_cols(states, actions)?;
    let z = net.forward(g, x)?;
    Ok(g.norm_floor(z, NORM_FLOOR))
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    crate::numerics::cosine(a, b)
}

/// `clip(|qᵢ − qⱼ| / β, 0, 1)`.
pub fn value_gap(q_i: f64, q_j: f64, beta: f64) -> f64 {
    ((q_i - q_j).abs() / beta).clamp(0.0, 1.0)
}

/// `1 − 2·Δ^λ`.
pub fn target_similarity(delta: f64, lambda: f64) -> Result<f64, NumericsError> {
    if !(lambda > 0.0) {
        return Err(NumericsError::Config(format!("lambda must be positive, got {lambda}")));
    }
    Ok(1.0 - 2.0 * delta.clamp(0.0, 1.0).powf(lambda))
}

/// Running scale of observed value differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaScale {
    value: f64,
    decay: f64,
    floor: f64,
}

impl BetaScale {
    pub fn new(value: f64, decay: f64, floor: f64) -> Result<Self, NumericsError> {
        if !(floor > 0.0) || !(0.0 < decay && decay < 1.0) || !(value >= floor) {
            return Err(NumericsError::Config(format!(
                "beta scale needs value ≥ floor > 0 and decay in (0, 1); got value={value} decay={decay} floor={floor}"
            )));
        }
        Ok(Self { value, decay, floor })
    }

    pub fn from_config(cfg: &GeometryConfig) -> Result<Self, NumericsError> {
        Self::new(cfg.beta_init, cfg.beta_decay, cfg.beta_floor)
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// `max(floor, decay·β + (1 − decay)·mean(gaps))`.
    pub fn update(&mut self, abs_gaps: &[f64]) -> Result<f64, NumericsError> {
        if abs_gaps.is_empty() {
            return Err(NumericsError::Config("beta update needs at least one gap".into()));
        }
        let mean = abs_gaps.iter().map(|g| g.abs()).sum::<f64>() / abs_gaps.len() as f64;
        self.value = (self.decay * self.value + (1.0 - self.decay) * mean).max(self.floor);
        Ok(self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryPair {
    pub i: usize,
    pub j: usize,
    pub q_i: f64,
    pub q_j: f64,
    pub delta: f64,
    pub target_sim: f64,
}

/// Pairs each of `b` indices with a partner under a uniformly random
/// derangement (permutations with a fixed point are redrawn). `None` if `b < 2`.
pub fn form_pairs<R: Rng + ?Sized>(b: usize, rng: &mut R) -> Option<Vec<(usize, usize)>> {
    if b < 2 {
        return None;
    }
    let mut perm: Vec<usize> = (0..b).collect();
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return Some(perm.into_iter().enumerate().collect());
        }
    }
}

/// Attaches value gaps and target similarities to index pairs.
pub fn annotate_pairs(
    pairs: &[(usize, usize)],
    q: &[f64],
    beta: f64,
    lambda: f64,
) -> Result<Vec<GeometryPair>, NumericsError> {
    pairs
        .iter()
        .map(|&(i, j)| {
            let delta = value_gap(q[i], q[j], beta);
            Ok(GeometryPair { i, j, q_i: q[i], q_j: q[j], delta, target_sim: target_similarity(delta, lambda)? })
        })
        .collect()
}

/// Mean Huber residual between embedding cosines and pair targets, recorded on `g`.
pub fn representation_loss_graph(
    g: &mut Graph,
    encoder: &MlpBinding,
    states: &Tensor,
    actions: &Tensor,
    pairs: &[GeometryPair],
    huber_delta: f64,
) -> Result<Var, NumericsError> {
    let s = g.constant(states.clone());
    let a = g.constant(actions.clone());
    let z = encode_graph(g, encoder, s, a)?;
    let left: Vec<usize> = pairs.iter().map(|p| p.i).collect();
    let right: Vec<usize> = pairs.iter().map(|p| p.j).collect();
    let zi = g.gather_rows(z, &left)?;
    let zj = g.gather_rows(z, &right)?;
    let c = g.row_cosine(zi, zj)?;
    let y = Tensor::matrix(pairs.len(), 1, pairs.iter().map(|p| p.target_sim).collect())?;
    let y = g.constant(y);
    let r = g.sub(c, y)?;
    let h = g.huber(r, huber_delta);
    Ok(g.mean(h))
}

/// Loss value and gradient w.r.t. the online encoder parameters.
pub fn representation_loss(
    encoder: &Mlp,
    states: &Tensor,
    actions: &Tensor,
    pairs: &[GeometryPair],
    huber_delta: f64,
) -> Result<(f64, Vec<Tensor>), NumericsError> {
    gradient(encoder, |g, b| representation_loss_graph(g, b, states, actions, pairs, huber_delta))
}

/// Loss value from precomputed embeddings; used where no gradient is needed.
pub fn representation_loss_value(z: &Tensor, pairs: &[GeometryPair], huber_delta: f64) -> f64 {
    let total: f64 = pairs
        .iter()
        .map(|p| huber(cosine(z.row(p.i), z.row(p.j)) - p.target_sim, huber_delta))
        .sum();
    total / pairs.len() as f64
}
