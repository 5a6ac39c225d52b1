use crate::envs::{Env, EnvError, ObservationNormalizer};
use crate::numerics::Tensor;
use crate::sac::GaussianPolicy;

/// Maps an observation to an action without sampling.
pub trait DeterministicPolicy {
    fn act(&self, observation: &[f64]) -> Vec<f64>;
}

impl<F: Fn(&[f64]) -> Vec<f64>> DeterministicPolicy for F {
    fn act(&self, observation: &[f64]) -> Vec<f64> {
        self(observation)
    }
}

/// `tanh(mean)` of a trained policy behind a frozen observation normalizer.
pub struct GreedyPolicy<'a> {
    pub policy: &'a GaussianPolicy,
    pub normalizer: &'a ObservationNormalizer,
}

impl DeterministicPolicy for GreedyPolicy<'_> {
    fn act(&self, observation: &[f64]) -> Vec<f64> {
        let x = Tensor::row_vector(&self.normalizer.normalize(observation));
        self.policy.deterministic(&x).expect("observation width matches the policy").into_data()
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const EVAL_BIT: u64 = 1 << 63;

/// Reset seed for training episode `n`; the top bit is always clear.
pub fn train_reset_seed(seed: u64, n: u64) -> u64 {
    splitmix(seed ^ splitmix(n)) & !EVAL_BIT
}

/// Reset seed for evaluation episode `n`; the top bit is always set, so the
/// evaluation and training seed sets are disjoint.
pub fn eval_reset_seed(seed: u64, n: u64) -> u64 {
    splitmix(seed ^ splitmix(n)) | EVAL_BIT
}

/// Undiscounted return mean and population standard deviation over
/// `episodes` deterministic rollouts.
pub fn evaluate<P, E>(policy: &P, env: &mut E, episodes: usize, seed: u64) -> Result<(f64, f64), EnvError>
where
    P: DeterministicPolicy + ?Sized,
    E: Env + ?Sized,
{
    let mut returns = Vec::with_capacity(episodes);
    for n in 0..episodes {
        let mut obs = env.reset(eval_reset_seed(seed, n as u64));
        let mut total = 0.0;
        loop {
            let out = env.step(&policy.act(&obs))?;
            total += out.reward;
            if out.done() {
                break;
            }
            obs = out.observation;
        }
        returns.push(total);
    }
    let n = returns.len().max(1) as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}
