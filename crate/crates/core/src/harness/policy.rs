use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{argmax, select_action, QNetwork, Tape};
use crate::env::ACTION_COUNT;
use crate::optics::Observation;

/// Anything that maps observations to action ids.
pub trait Policy {
    fn name(&self) -> &str;

    /// Called before the first action of every episode.
    fn begin_episode(&mut self, _seed: u64) {}

    fn act(&mut self, obs: &Observation<f32>) -> usize;
}

/// Greedy (ε = 0) policy of a trained network.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    net: QNetwork<f32>,
    tape: Tape<f32>,
}

impl GreedyPolicy {
    pub fn new(net: QNetwork<f32>) -> Self {
        Self { net, tape: Tape::new() }
    }
}

impl Policy for GreedyPolicy {
    fn name(&self) -> &str {
        "greedy"
    }

    fn act(&mut self, obs: &Observation<f32>) -> usize {
        self.net.forward(&obs.data, 1, &mut self.tape);
        argmax(self.tape.q())
    }
}

/// ε-greedy around a network; reseeded from the episode seed so runs repeat.
#[derive(Debug, Clone)]
pub struct EpsilonGreedyPolicy {
    net: QNetwork<f32>,
    tape: Tape<f32>,
    epsilon: f64,
    rng: ChaCha8Rng,
}

impl EpsilonGreedyPolicy {
    pub fn new(net: QNetwork<f32>, epsilon: f64) -> Self {
        Self {
            net,
            tape: Tape::new(),
            epsilon,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl Policy for EpsilonGreedyPolicy {
    fn name(&self) -> &str {
        "epsilon-greedy"
    }

    fn begin_episode(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe951_1071);
    }

    fn act(&mut self, obs: &Observation<f32>) -> usize {
        self.net.forward(&obs.data, 1, &mut self.tape);
        select_action(self.tape.q(), self.epsilon, &mut self.rng)
    }
}

/// Uniform over all 25 actions.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new() -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(0) }
    }
}

impl Default for RandomPolicy {
    fn default() -> Self {
        Self::new()
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn begin_episode(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0a4d_0a4d);
    }

    fn act(&mut self, _obs: &Observation<f32>) -> usize {
        self.rng.gen_range(0..ACTION_COUNT)
    }
}

/// Always the same action (no-op by default).
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantPolicy(pub usize);

impl Policy for ConstantPolicy {
    fn name(&self) -> &str {
        "constant"
    }

    fn act(&mut self, _obs: &Observation<f32>) -> usize {
        self.0
    }
}
