//! Episode records and their aggregate statistics.
//!
//! Summaries are computed from [`StepRecord`]s alone, so re-reading the JSONL
//! trace of an evaluation reproduces its summary bit for bit.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::policy::Policy;
use crate::env::{Env, EnvState, StepInfo, StepResult};
use crate::error::{Error, Result};
use crate::optics::MirrorAngles;

/// Steps averaged for the late-episode visibility statistic.
pub const LAST_STEPS: usize = 20;

/// One line of an episode trace. `t = 0` is the reset, with no action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: usize,
    pub seed: u64,
    pub t: usize,
    pub action_id: Option<usize>,
    pub reward: Option<f64>,
    pub visibility: f64,
    pub distance_mm: f64,
    pub angle_mrad: f64,
    pub action_magnitude: f64,
}

impl StepRecord {
    pub fn reset(episode: usize, seed: u64, info: &StepInfo) -> Self {
        Self {
            episode,
            seed,
            t: 0,
            action_id: None,
            reward: None,
            visibility: info.visibility,
            distance_mm: info.distance_mm,
            angle_mrad: info.angle_mrad,
            action_magnitude: 0.0,
        }
    }

    pub fn step(episode: usize, seed: u64, t: usize, action_id: usize, result: &StepResult) -> Self {
        Self {
            episode,
            seed,
            t,
            action_id: Some(action_id),
            reward: Some(result.reward),
            visibility: result.info.visibility,
            distance_mm: result.info.distance_mm,
            angle_mrad: result.info.angle_mrad,
            action_magnitude: result.info.action_magnitude,
        }
    }
}

/// A full episode: the reset record followed by one record per action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
}

impl EpisodeRecord {
    pub fn new(episode: usize, seed: u64) -> Self {
        Self { episode, seed, steps: Vec::new() }
    }

    fn actions(&self) -> impl Iterator<Item = &StepRecord> {
        self.steps.iter().filter(|s| s.action_id.is_some())
    }

    /// Highest visibility seen, the reset state included.
    pub fn best_visibility(&self) -> f64 {
        self.steps.iter().map(|s| s.visibility).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn final_visibility(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.visibility)
    }

    pub fn episode_return(&self) -> f64 {
        self.actions().filter_map(|s| s.reward).sum()
    }

    /// Mean visibility over the last [`LAST_STEPS`] actions.
    pub fn late_visibility(&self) -> f64 {
        let acted: Vec<f64> = self.actions().map(|s| s.visibility).collect();
        let tail = &acted[acted.len().saturating_sub(LAST_STEPS)..];
        mean(tail)
    }

    pub fn write_jsonl(&self, out: &mut impl Write) -> Result<()> {
        for s in &self.steps {
            write_jsonl_line(out, s)?;
        }
        Ok(())
    }
}

/// Serializes `value` and writes it with its newline in a single call, so
/// concurrent appenders never interleave partial lines.
pub fn write_jsonl_line<T: Serialize>(out: &mut impl Write, value: &T) -> Result<()> {
    let mut line = serde_json::to_vec(value)?;
    line.push(b'\n');
    out.write_all(&line)?;
    Ok(())
}

/// Groups trace lines back into episodes, in order of appearance.
pub fn read_episode_records(input: impl BufRead) -> Result<Vec<EpisodeRecord>> {
    let mut episodes: Vec<EpisodeRecord> = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StepRecord = serde_json::from_str(&line)?;
        match episodes.last_mut() {
            Some(ep) if ep.episode == rec.episode && ep.seed == rec.seed => ep.steps.push(rec),
            _ => {
                let mut ep = EpisodeRecord::new(rec.episode, rec.seed);
                ep.steps.push(rec);
                episodes.push(ep);
            }
        }
    }
    Ok(episodes)
}

/// Plays one full episode. `start` overrides the random reset angles.
pub fn run_episode(
    policy: &mut dyn Policy,
    env: &Env,
    episode: usize,
    seed: u64,
    start: Option<MirrorAngles<f64>>,
) -> Result<EpisodeRecord> {
    let (mut state, mut obs) = match start {
        Some(angles) => env.reset_with_angles(seed, angles),
        None => env.reset(seed),
    };
    policy.begin_episode(seed);
    let mut record = EpisodeRecord::new(episode, seed);
    record.steps.push(StepRecord::reset(episode, seed, &env.info(&state, 0.0)));
    while !episode_done(env, &state) {
        let action = policy.act(&obs);
        let result = env.step(&mut state, action)?;
        record.steps.push(StepRecord::step(episode, seed, state.step_index, action, &result));
        obs = result.observation;
    }
    Ok(record)
}

fn episode_done(env: &Env, state: &EnvState) -> bool {
    state.step_index >= env.config().episode_length
}

/// Seed of evaluation episode `i` of a run seeded with `seed`.
pub fn eval_episode_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(i as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub policy: String,
    pub episodes: usize,
    pub best_visibility: Vec<f64>,
    pub mean_best_visibility: f64,
    pub std_best_visibility: f64,
    /// Per-episode mean visibility over the last 20 steps.
    pub late_visibility: Vec<f64>,
    pub mean_late_visibility: f64,
    pub std_late_visibility: f64,
    pub final_visibility: Vec<f64>,
    pub mean_final_visibility: f64,
    pub returns: Vec<f64>,
    pub mean_return: f64,
    pub std_return: f64,
    /// Mean visibility after each action, one entry per step.
    pub visibility_curve: Vec<f64>,
    /// Mean step size (fraction of the angle range) per step.
    pub action_magnitude_curve: Vec<f64>,
    pub mean_final_distance_mm: f64,
    pub mean_final_angle_mrad: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

impl EvalSummary {
    pub fn from_records(policy: &str, records: &[EpisodeRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::contract("no episodes to summarize"));
        }
        let per = |f: fn(&EpisodeRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
        let best = per(EpisodeRecord::best_visibility);
        let late = per(EpisodeRecord::late_visibility);
        let finals = per(EpisodeRecord::final_visibility);
        let returns = per(EpisodeRecord::episode_return);

        let len = records.iter().map(|r| r.actions().count()).max().unwrap_or(0);
        let curve = |f: fn(&StepRecord) -> f64| {
            (0..len)
                .map(|i| {
                    let vals: Vec<f64> = records.iter().filter_map(|r| r.actions().nth(i)).map(f).collect();
                    mean(&vals)
                })
                .collect::<Vec<_>>()
        };
        let last = |f: fn(&StepRecord) -> f64| {
            let vals: Vec<f64> = records.iter().filter_map(|r| r.steps.last()).map(f).collect();
            mean(&vals)
        };

        Ok(Self {
            policy: policy.to_string(),
            episodes: records.len(),
            mean_best_visibility: mean(&best),
            std_best_visibility: std_dev(&best),
            best_visibility: best,
            mean_late_visibility: mean(&late),
            std_late_visibility: std_dev(&late),
            late_visibility: late,
            mean_final_visibility: mean(&finals),
            final_visibility: finals,
            mean_return: mean(&returns),
            std_return: std_dev(&returns),
            returns,
            visibility_curve: curve(|s| s.visibility),
            action_magnitude_curve: curve(|s| s.action_magnitude),
            mean_final_distance_mm: last(|s| s.distance_mm),
            mean_final_angle_mrad: last(|s| s.angle_mrad),
        })
    }

    /// Mean step size over the first and last tenth of the episode.
    pub fn magnitude_trend(&self) -> (f64, f64) {
        let c = &self.action_magnitude_curve;
        let d = (c.len() / 10).max(1);
        (mean(&c[..d]), mean(&c[c.len() - d..]))
    }
}

/// Runs `n_episodes` episodes with seeds [`eval_episode_seed`]`(seed, i)`,
/// handing each record to `sink` as it completes.
pub fn evaluate(
    policy: &mut dyn Policy,
    env: &Env,
    n_episodes: usize,
    seed: u64,
    mut sink: impl FnMut(&EpisodeRecord) -> Result<()>,
) -> Result<EvalSummary> {
    let mut records = Vec::with_capacity(n_episodes);
    for i in 0..n_episodes {
        let rec = run_episode(policy, env, i, eval_episode_seed(seed, i), None)?;
        sink(&rec)?;
        records.push(rec);
    }
    EvalSummary::from_records(policy.name(), &records)
}
