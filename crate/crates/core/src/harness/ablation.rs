use std::io::Write;

use serde::{Deserialize, Serialize};

use super::eval::{evaluate, EvalSummary};
use super::policy::GreedyPolicy;
use crate::agent::{train, EpisodeMetrics, TrainConfig};
use crate::env::{Env, EnvConfig, RandomizationConfig};
use crate::error::Result;

/// Training-time randomization settings compared in the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationVariant {
    AllOn,
    MinusRadius,
    MinusBrightness,
    MinusNoise,
    MinusPhaseTiming,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 5] = [
        Self::AllOn,
        Self::MinusRadius,
        Self::MinusBrightness,
        Self::MinusNoise,
        Self::MinusPhaseTiming,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::AllOn => "all-on",
            Self::MinusRadius => "minus-radius",
            Self::MinusBrightness => "minus-brightness",
            Self::MinusNoise => "minus-noise",
            Self::MinusPhaseTiming => "minus-phase-timing",
        }
    }

    /// `base` with this variant's randomization switched off.
    pub fn apply(self, base: RandomizationConfig) -> RandomizationConfig {
        let mut c = base;
        match self {
            Self::AllOn => {}
            Self::MinusRadius => c.radius_enabled = false,
            Self::MinusBrightness => c.brightness_enabled = false,
            Self::MinusNoise => c.noise_enabled = false,
            Self::MinusPhaseTiming => c.phase_timing_enabled = false,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub visibility_mean: f64,
    pub visibility_std: f64,
    pub return_mean: f64,
    pub return_std: f64,
}

impl AblationRow {
    pub fn from_summary(variant: AblationVariant, s: &EvalSummary) -> Self {
        Self {
            variant: variant.name().to_string(),
            visibility_mean: s.mean_late_visibility,
            visibility_std: s.std_late_visibility,
            return_mean: s.mean_return,
            return_std: s.std_return,
        }
    }
}

pub const ABLATION_CSV_HEADER: &str = "variant,visibility_mean,visibility_std,return_mean,return_std";

pub fn write_ablation_csv(out: &mut impl Write, rows: &[AblationRow]) -> Result<()> {
    writeln!(out, "{ABLATION_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.variant, r.visibility_mean, r.visibility_std, r.return_mean, r.return_std
        )?;
    }
    Ok(())
}

/// Progress events emitted while an ablation runs.
pub enum AblationEvent<'a> {
    Episode(AblationVariant, &'a EpisodeMetrics),
    Row(AblationVariant, &'a EvalSummary),
}

/// Trains one agent per variant and evaluates each greedily on `eval_env`
/// (normally everything randomized).
///
/// Every row shares the training seed of `train_config` and the evaluation
/// seeds, so rows differ only in the training-time randomizations.
pub fn ablate(
    variants: &[AblationVariant],
    base_env: &EnvConfig,
    train_config: &TrainConfig,
    eval_env: &Env,
    eval_episodes: usize,
    eval_seed: u64,
    mut on_event: impl FnMut(AblationEvent<'_>),
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let env = Env::new(EnvConfig {
            randomization: variant.apply(base_env.randomization),
            ..base_env.clone()
        })?;
        let outcome = train(&env, train_config, |m| on_event(AblationEvent::Episode(variant, m)))?;
        let mut policy = GreedyPolicy::new(outcome.network);
        let summary = evaluate(&mut policy, eval_env, eval_episodes, eval_seed, |_| Ok(()))?;
        on_event(AblationEvent::Row(variant, &summary));
        rows.push(AblationRow::from_summary(variant, &summary));
    }
    Ok(rows)
}
