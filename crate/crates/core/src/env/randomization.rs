//! Domain randomizations: per-episode beam radius, and per-step brightness,
//! additive pixel noise and piezo timing (duty cycle and trigger shift).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::Observation;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomizationConfig {
    pub radius_enabled: bool,
    pub brightness_enabled: bool,
    pub noise_enabled: bool,
    pub phase_timing_enabled: bool,
    /// Beam radius varies within `r·(1 ± radius_span)`.
    pub radius_span: f64,
    /// Brightness factor within `1 ± brightness_span`.
    pub brightness_span: f64,
    /// Peak-to-peak width of the zero-mean uniform pixel noise.
    pub noise_level: f64,
    /// Fewest frames acquired on the forward piezo sweep.
    pub min_forward_frames: usize,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        Self::all_on()
    }
}

impl RandomizationConfig {
    pub fn all_on() -> Self {
        Self {
            radius_enabled: true,
            brightness_enabled: true,
            noise_enabled: true,
            phase_timing_enabled: true,
            radius_span: 0.2,
            brightness_span: 0.3,
            noise_level: 0.2,
            min_forward_frames: 9,
        }
    }

    pub fn all_off() -> Self {
        Self {
            radius_enabled: false,
            brightness_enabled: false,
            noise_enabled: false,
            phase_timing_enabled: false,
            ..Self::all_on()
        }
    }

    pub fn validate(&self, n_frames: usize) -> Result<()> {
        for (name, v) in [
            ("radius_span", self.radius_span),
            ("brightness_span", self.brightness_span),
            ("noise_level", self.noise_level),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("randomization.{name} must be in [0, 1), got {v}")));
            }
        }
        if self.min_forward_frames * 2 <= n_frames || self.min_forward_frames >= n_frames {
            return Err(Error::Config(format!(
                "randomization.min_forward_frames must be in [{}, {}], got {}",
                n_frames / 2 + 1,
                n_frames - 1,
                self.min_forward_frames
            )));
        }
        Ok(())
    }
}

/// Piezo phases for one period of `n_frames` acquisitions: a forward ramp of
/// `n_forward` frames from 0 towards 2π, a backward ramp of the remaining
/// frames back towards 0, then rotated left by `shift`.
pub fn phase_schedule<T: Real>(n_frames: usize, n_forward: usize, shift: usize) -> Result<Vec<T>> {
    if n_forward == 0 || n_forward >= n_frames {
        return Err(Error::contract(format!(
            "n_forward must be in [1, {}), got {n_forward}",
            n_frames
        )));
    }
    if shift >= n_frames {
        return Err(Error::contract(format!("shift must be in [0, {n_frames}), got {shift}")));
    }
    let tau = T::TAU();
    let n_backward = n_frames - n_forward;
    let fw = T::from_usize_lossy(n_forward);
    let bw = T::from_usize_lossy(n_backward);
    let mut phases: Vec<T> = (0..n_forward)
        .map(|j| tau * T::from_usize_lossy(j) / fw)
        .chain((0..n_backward).map(|m| tau * (T::one() - T::from_usize_lossy(m + 1) / bw)))
        .collect();
    phases.rotate_left(shift);
    Ok(phases)
}

/// Draws fixed for a whole episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeDraws {
    pub radius_factor: f64,
}

/// Draws made once per observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDraws {
    pub brightness: f64,
    /// Half-width of the uniform noise; 0 disables it.
    pub noise_amplitude: f64,
    pub noise_seed: u64,
    pub n_forward: usize,
    pub shift: usize,
}

impl StepDraws {
    pub fn identity(min_forward_frames: usize) -> Self {
        Self {
            brightness: 1.0,
            noise_amplitude: 0.0,
            noise_seed: 0,
            n_forward: min_forward_frames,
            shift: 0,
        }
    }
}

// Every draw consumes the generator the same way whether or not its
// randomization is enabled, so toggling one flag never perturbs the others.

pub fn sample_episode_draws<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomizationConfig) -> EpisodeDraws {
    let u: f64 = rng.gen_range(-1.0..=1.0);
    EpisodeDraws {
        radius_factor: if cfg.radius_enabled { 1.0 + cfg.radius_span * u } else { 1.0 },
    }
}

pub fn sample_step_draws<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &RandomizationConfig,
    n_frames: usize,
) -> StepDraws {
    let u: f64 = rng.gen_range(-1.0..=1.0);
    let n_forward = rng.gen_range(cfg.min_forward_frames..n_frames);
    let shift = rng.gen_range(0..n_frames);
    let noise_seed: u64 = rng.gen();
    let mut d = StepDraws::identity(cfg.min_forward_frames);
    if cfg.brightness_enabled {
        d.brightness = 1.0 + cfg.brightness_span * u;
    }
    if cfg.noise_enabled {
        d.noise_amplitude = cfg.noise_level / 2.0;
        d.noise_seed = noise_seed;
    }
    if cfg.phase_timing_enabled {
        d.n_forward = n_forward;
        d.shift = shift;
    }
    d
}

/// `pixel ← clip(brightness·pixel + η, 0, 1)` with i.i.d. `η ~ U[−a, a]`.
pub fn apply_image_randomizations<T: Real>(obs: &mut Observation<T>, draws: &StepDraws) {
    let b = T::lit(draws.brightness);
    let (zero, one) = (T::zero(), T::one());
    if draws.noise_amplitude > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(draws.noise_seed);
        let a = draws.noise_amplitude;
        for v in obs.data.iter_mut() {
            let eta = T::lit(rng.gen_range(-a..a));
            *v = (b * *v + eta).max(zero).min(one);
        }
    } else {
        for v in obs.data.iter_mut() {
            *v = (b * *v).max(zero).min(one);
        }
    }
}
