use serde::{Deserialize, Serialize};

const CLIP: f64 = 10.0;

/// Running per-dimension mean/variance (Welford). Updated while collecting
/// experience; evaluation only calls [`ObservationNormalizer::normalize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationNormalizer {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    enabled: bool,
}

impl ObservationNormalizer {
    pub fn new(dim: usize, enabled: bool) -> Self {
        Self { count: 0, mean: vec![0.0; dim], m2: vec![0.0; dim], enabled }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn update(&mut self, obs: &[f64]) {
        if !self.enabled {
            return;
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(obs) {
            let d = x - *m;
            *m += d / n;
            *s += d * (x - *m);
        }
    }

    fn variance(&self, i: usize) -> f64 {
        if self.count < 2 {
            1.0
        } else {
            self.m2[i] / self.count as f64
        }
    }

    /// `clip((x − mean)/√(var + 1e-8), ±10)`; identity when disabled.
    pub fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        if !self.enabled {
            return obs.to_vec();
        }
        obs.iter()
            .enumerate()
            .map(|(i, &x)| ((x - self.mean[i]) / (self.variance(i) + 1e-8).sqrt()).clamp(-CLIP, CLIP))
            .collect()
    }
}
