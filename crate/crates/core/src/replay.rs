//! Fixed-capacity FIFO replay buffer with uniform minibatch sampling.

use rand::Rng;
use thiserror::Error;

use crate::envs::Transition;
use crate::numerics::Tensor;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplayError {
    #[error("buffer holds {size} transitions, minibatch needs {requested}")]
    NotReady { size: usize, requested: usize },
    #[error("replay capacity must be positive")]
    ZeroCapacity,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
}

/// `B` transitions stacked row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub indices: Vec<usize>,
    pub states: Tensor,
    pub actions: Tensor,
    pub rewards: Tensor,
    pub next_states: Tensor,
    pub continuations: Tensor,
}

impl Minibatch {
    pub fn from_transitions<'a, I>(items: I) -> Self
    where
        I: IntoIterator<Item = (usize, &'a Transition)>,
    {
        let (mut indices, mut s, mut a, mut r, mut s2, mut d) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let (mut sd, mut ad) = (0, 0);
        for (i, t) in items {
            indices.push(i);
            sd = t.state.len();
            ad = t.action.len();
            s.extend_from_slice(&t.state);
            a.extend_from_slice(&t.action);
            r.push(t.reward);
            s2.extend_from_slice(&t.next_state);
            d.push(t.continuation);
        }
        let b = indices.len();
        Self {
            indices,
            states: Tensor::matrix(b, sd, s).expect("uniform state width"),
            actions: Tensor::matrix(b, ad, a).expect("uniform action width"),
            rewards: Tensor::matrix(b, 1, r).expect("rewards"),
            next_states: Tensor::matrix(b, sd, s2).expect("uniform state width"),
            continuations: Tensor::matrix(b, 1, d).expect("continuations"),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Applies `f` to every state and next-state row (observation normalization).
    pub fn map_states(mut self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let apply = |t: &Tensor| {
            let rows: Vec<Vec<f64>> = (0..t.rows()).map(|r| f(t.row(r))).collect();
            Tensor::from_rows(&rows).expect("map_states keeps widths")
        };
        if !self.is_empty() {
            self.states = apply(&self.states);
            self.next_states = apply(&self.next_states);
        }
        self
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self, ReplayError> {
        if capacity == 0 {
            return Err(ReplayError::ZeroCapacity);
        }
        Ok(Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), cursor: 0 })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Next slot to be written.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// `batch` distinct indices drawn uniformly, in random order.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>, ReplayError> {
        if self.items.len() < batch {
            return Err(ReplayError::NotReady { size: self.items.len(), requested: batch });
        }
        Ok(rand::seq::index::sample(rng, self.items.len(), batch).into_vec())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Minibatch, ReplayError> {
        let idx = self.sample_indices(batch, rng)?;
        Ok(Minibatch::from_transitions(idx.into_iter().map(|i| (i, &self.items[i]))))
    }
}
