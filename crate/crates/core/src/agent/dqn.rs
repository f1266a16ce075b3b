//! Double dueling DQN: behavior policy, TD targets, the gradient step and the
//! training loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::nn::{NetSpec, QNetwork, Tape};
use super::replay::{Batch, ReplayBuffer, DEFAULT_CAPACITY};
use crate::env::{Env, StepInfo, ACTION_COUNT};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub total_steps: u64,
    /// Environment steps per gradient update.
    pub update_every: u64,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    /// Gradient updates between target-network syncs.
    pub target_sync_period: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Steps of linear ε decay; `None` means the first 10% of `total_steps`.
    pub epsilon_decay_steps: Option<u64>,
    /// Updates start once the buffer holds `max(batch_size, warmup_transitions)`.
    pub warmup_transitions: usize,
    pub replay_capacity: usize,
    pub huber_delta: f64,
    pub seed: u64,
    pub network: NetSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            total_steps: 5_000_000,
            update_every: 4,
            batch_size: 32,
            optimizer: AdamConfig::default(),
            target_sync_period: 2000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: None,
            warmup_transitions: 1000,
            replay_capacity: DEFAULT_CAPACITY,
            huber_delta: 1.0,
            seed: 0,
            network: NetSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must be in (0, 1), got {}", self.gamma));
        }
        if self.update_every == 0 {
            return bad("update_every must be at least 1".into());
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return bad(format!(
                "batch_size must be in [1, replay_capacity = {}], got {}",
                self.replay_capacity, self.batch_size
            ));
        }
        if self.target_sync_period == 0 {
            return bad("target_sync_period must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon bounds must lie in [0, 1]".into());
        }
        if !(self.huber_delta > 0.0) {
            return bad("huber_delta must be positive".into());
        }
        self.network.validate()
    }

    pub fn warmup(&self) -> usize {
        self.batch_size.max(self.warmup_transitions)
    }

    pub fn epsilon_at(&self, step: u64) -> f64 {
        let decay = self
            .epsilon_decay_steps
            .unwrap_or(self.total_steps / 10)
            .max(1);
        if step >= decay {
            return self.epsilon_end;
        }
        let frac = step as f64 / decay as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: Real>(q: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy: uniform random action with probability `epsilon`, else greedy.
pub fn select_action<T: Real, R: Rng + ?Sized>(q: &[T], epsilon: f64, rng: &mut R) -> usize {
    let explore = rng.gen::<f64>() < epsilon;
    if explore {
        rng.gen_range(0..q.len())
    } else {
        argmax(q)
    }
}

/// `y = r + γ·(1 − done)·Q_target(s′, argmax_a Q_online(s′, a))`.
pub fn td_target_from_q<T: Real>(reward: T, done: bool, online_next: &[T], target_next: &[T], gamma: T) -> T {
    if done {
        reward
    } else {
        reward + gamma * target_next[argmax(online_next)]
    }
}

/// Double-DQN targets for a batch of successor observations.
pub fn td_target_double<T: Real>(
    rewards: &[T],
    dones: &[bool],
    next_obs: &[T],
    online: &QNetwork<T>,
    target: &QNetwork<T>,
    gamma: T,
) -> Vec<T> {
    let batch = rewards.len();
    let mut online_tape = Tape::new();
    let mut target_tape = Tape::new();
    online.forward(next_obs, batch, &mut online_tape);
    target.forward(next_obs, batch, &mut target_tape);
    double_targets(rewards, dones, &online_tape, &target_tape, online.spec().n_actions, gamma)
}

fn double_targets<T: Real>(rewards: &[T], dones: &[bool], online: &Tape<T>, target: &Tape<T>, a: usize, gamma: T) -> Vec<T> {
    (0..rewards.len())
        .map(|b| {
            let range = b * a..(b + 1) * a;
            td_target_from_q(rewards[b], dones[b], &online.q()[range.clone()], &target.q()[range], gamma)
        })
        .collect()
}

/// Mean Huber loss and its derivative with respect to each prediction.
pub fn huber<T: Real>(pred: &[T], target: &[T], delta: T) -> (T, Vec<T>) {
    let n = T::from_usize_lossy(pred.len());
    let half = T::lit(0.5);
    let mut loss = T::zero();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let d = p - y;
            if d.abs() <= delta {
                loss += half * d * d;
                d / n
            } else {
                loss += delta * (d.abs() - half * delta);
                delta * d.signum() / n
            }
        })
        .collect();
    (loss / n, grad)
}

/// Scratch space for [`train_step`].
#[derive(Debug, Default)]
pub struct StepScratch<T> {
    online: Tape<T>,
    online_next: Tape<T>,
    target_next: Tape<T>,
    grads: Vec<T>,
}

impl<T: Real> StepScratch<T> {
    pub fn new() -> Self {
        Self {
            online: Tape::new(),
            online_next: Tape::new(),
            target_next: Tape::new(),
            grads: Vec::new(),
        }
    }

    /// Gradient of the last step.
    pub fn grads(&self) -> &[T] {
        &self.grads
    }
}

/// Loss and gradient of the Huber TD objective; does not touch parameters.
pub fn td_loss_and_grad<T: Real>(
    batch: &Batch<T>,
    online: &QNetwork<T>,
    target: &QNetwork<T>,
    gamma: T,
    huber_delta: T,
    scratch: &mut StepScratch<T>,
) -> T {
    let a = online.spec().n_actions;
    let n = batch.size;
    online.forward(&batch.next_obs, n, &mut scratch.online_next);
    target.forward(&batch.next_obs, n, &mut scratch.target_next);
    let y = double_targets(&batch.rewards, &batch.dones, &scratch.online_next, &scratch.target_next, a, gamma);

    online.forward(&batch.obs, n, &mut scratch.online);
    let pred: Vec<T> = (0..n).map(|b| scratch.online.q()[b * a + batch.actions[b]]).collect();
    let (loss, d_pred) = huber(&pred, &y, huber_delta);

    let mut d_q = vec![T::zero(); n * a];
    for b in 0..n {
        d_q[b * a + batch.actions[b]] = d_pred[b];
    }
    scratch.grads.clear();
    scratch.grads.resize(online.param_count(), T::zero());
    online.backward(&batch.obs, &scratch.online, &d_q, &mut scratch.grads);
    loss
}

/// One optimizer step on the online network. Gradients never reach `target`.
pub fn train_step<T: Real>(
    batch: &Batch<T>,
    online: &mut QNetwork<T>,
    target: &QNetwork<T>,
    optimizer: &mut Adam<T>,
    gamma: T,
    huber_delta: T,
    scratch: &mut StepScratch<T>,
) -> Result<T> {
    if batch.size == 0 {
        return Err(Error::contract("empty batch"));
    }
    let loss = td_loss_and_grad(batch, online, target, gamma, huber_delta, scratch);
    if !loss.is_finite() {
        let max_abs = |v: &[T]| v.iter().map(|x| x.abs().as_f64()).fold(0.0, f64::max);
        return Err(Error::NonFiniteLoss {
            update: optimizer.steps() as usize,
            loss: loss.as_f64(),
            max_abs_q: max_abs(scratch.online.q()),
            max_abs_target: max_abs(scratch.target_next.q()),
        });
    }
    optimizer.step(online.params_mut(), &scratch.grads);
    Ok(loss)
}

/// Per-episode training statistics (the final-step values are after the
/// 100th action).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub final_visibility: f64,
    pub final_distance_mm: f64,
    pub final_angle_mrad: f64,
    pub epsilon: f64,
    /// Environment steps taken so far in the run.
    pub steps: u64,
    pub updates: u64,
    pub mean_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: QNetwork<f32>,
    pub metrics: Vec<EpisodeMetrics>,
    pub steps: u64,
    pub updates: u64,
}

/// SplitMix64 scramble so training seeds never coincide with small
/// evaluation seeds.
pub fn training_episode_seed(run_seed: u64, episode: usize) -> u64 {
    let mut z = run_seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(episode as u64 + 1))
        .wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `config.total_steps` environment steps of double dueling DQN.
///
/// `on_episode` sees each finished episode's metrics as they happen.
pub fn train(env: &Env, config: &TrainConfig, mut on_episode: impl FnMut(&EpisodeMetrics)) -> Result<TrainOutcome> {
    config.validate()?;
    let spec = &config.network;
    let (f, h, w) = env.observation_shape();
    if (spec.in_channels, spec.height, spec.width) != (f, h, w) || spec.n_actions != ACTION_COUNT {
        return Err(Error::Config(format!(
            "network expects {}×{}×{} inputs and {} actions, environment gives {f}×{h}×{w} and {ACTION_COUNT}",
            spec.in_channels, spec.height, spec.width, spec.n_actions
        )));
    }

    let mut online = QNetwork::<f32>::new(spec.clone(), config.seed)?;
    let mut target = online.clone();
    let mut optimizer = Adam::new(config.optimizer, online.param_count());
    let mut replay = ReplayBuffer::new(config.replay_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_ac70);
    let mut scratch = StepScratch::new();
    let mut act_tape = Tape::new();
    let mut batch = Batch::default();
    let gamma = config.gamma as f32;
    let delta = config.huber_delta as f32;

    let mut metrics = Vec::new();
    let mut updates = 0u64;
    let mut episode = 0usize;
    let (mut state, mut obs) = env.reset(training_episode_seed(config.seed, episode));
    let mut episode_return = 0.0;
    let mut loss_sum = 0.0;
    let mut loss_count = 0u64;

    for step in 0..config.total_steps {
        let epsilon = config.epsilon_at(step);
        online.forward(&obs.data, 1, &mut act_tape);
        let action = select_action(act_tape.q(), epsilon, &mut rng);
        let result = env.step(&mut state, action)?;
        episode_return += result.reward;
        replay.push(&obs, action, result.reward, &result.observation, result.done);

        if (step + 1) % config.update_every == 0 && replay.len() >= config.warmup() {
            replay.sample(&mut rng, config.batch_size, &mut batch);
            let loss = train_step(&batch, &mut online, &target, &mut optimizer, gamma, delta, &mut scratch)?;
            loss_sum += loss as f64;
            loss_count += 1;
            updates += 1;
            if updates % config.target_sync_period == 0 {
                target.copy_params_from(&online);
            }
        }

        if result.done {
            let info: StepInfo = result.info;
            let m = EpisodeMetrics {
                episode,
                episode_return,
                final_visibility: info.visibility,
                final_distance_mm: info.distance_mm,
                final_angle_mrad: info.angle_mrad,
                epsilon,
                steps: step + 1,
                updates,
                mean_loss: (loss_count > 0).then(|| loss_sum / loss_count as f64),
            };
            on_episode(&m);
            metrics.push(m);
            episode += 1;
            episode_return = 0.0;
            loss_sum = 0.0;
            loss_count = 0;
            let (s, o) = env.reset(training_episode_seed(config.seed, episode));
            state = s;
            obs = o;
        } else {
            obs = result.observation;
        }
    }

    Ok(TrainOutcome {
        network: online,
        metrics,
        steps: config.total_steps,
        updates,
    })
}
