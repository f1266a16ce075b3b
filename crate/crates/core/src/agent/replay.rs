//! FIFO experience replay.
//!
//! Observations are stored quantized to 8 bits and shared between consecutive
//! transitions (the `next_obs` of one step is the `obs` of the next), which
//! keeps a full 3×10⁴ buffer of 16×64×64 stacks around 2 GB.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;

use crate::optics::export::quantize;
use crate::optics::Observation;
use crate::scalar::Real;

pub const DEFAULT_CAPACITY: usize = 30_000;

#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Arc<[u8]>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Arc<[u8]>,
    pub done: bool,
}

#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
    pushed: u64,
}

/// A sampled minibatch with observations expanded to `T`.
#[derive(Debug, Clone, Default)]
pub struct Batch<T> {
    pub size: usize,
    pub obs: Vec<T>,
    pub actions: Vec<usize>,
    pub rewards: Vec<T>,
    pub next_obs: Vec<T>,
    pub dones: Vec<bool>,
}

pub fn quantize_observation<T: Real>(obs: &Observation<T>) -> Arc<[u8]> {
    obs.data.iter().map(|&v| quantize(v)).collect()
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            pushed: 0,
        }
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

    /// Total transitions ever pushed.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn push<T: Real>(
        &mut self,
        obs: &Observation<T>,
        action: usize,
        reward: f64,
        next_obs: &Observation<T>,
        done: bool,
    ) {
        let obs_q = quantize_observation(obs);
        // Reuse the previous transition's successor frame when it is the same image.
        let obs_q = match self.items.back() {
            Some(prev) if prev.next_obs[..] == obs_q[..] => Arc::clone(&prev.next_obs),
            _ => obs_q,
        };
        self.push_quantized(obs_q, action, reward, quantize_observation(next_obs), done);
    }

    pub fn push_quantized(&mut self, obs: Arc<[u8]>, action: usize, reward: f64, next_obs: Arc<[u8]>, done: bool) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(Transition { obs, action, reward, next_obs, done });
        self.pushed += 1;
    }

    /// Uniformly samples `size` distinct transitions.
    pub fn sample<T: Real, R: Rng + ?Sized>(&self, rng: &mut R, size: usize, out: &mut Batch<T>) {
        assert!(size > 0 && size <= self.len(), "cannot sample {size} of {}", self.len());
        let lut: Vec<T> = (0..=255u8).map(|b| T::lit(b as f64 / 255.0)).collect();
        let obs_len = self.items[0].obs.len();
        out.size = size;
        out.obs.clear();
        out.next_obs.clear();
        out.actions.clear();
        out.rewards.clear();
        out.dones.clear();
        out.obs.reserve(size * obs_len);
        out.next_obs.reserve(size * obs_len);
        for i in index::sample(rng, self.len(), size) {
            let t = &self.items[i];
            out.obs.extend(t.obs.iter().map(|&b| lut[b as usize]));
            out.next_obs.extend(t.next_obs.iter().map(|&b| lut[b as usize]));
            out.actions.push(t.action);
            out.rewards.push(T::lit(t.reward));
            out.dones.push(t.done);
        }
    }
}
