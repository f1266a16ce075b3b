//! Reset/step semantics of the alignment task.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::actions::{action_spec, ACTION_COUNT};
use super::randomization::{
    apply_image_randomizations, phase_schedule, sample_episode_draws, sample_step_draws,
    RandomizationConfig, StepDraws,
};
use crate::error::{Error, Result};
use crate::optics::{
    beam_state_from_angles, misalignment_metrics, observation_visibility,
    render_observation_into, visibility_analytic, BeamState, Camera, Control, Geometry,
    MirrorAngles, Observation,
};

pub const EPISODE_LENGTH: usize = 100;

/// Visibility is capped here before the logarithm in the reward.
pub const VISIBILITY_CAP: f64 = 1.0 - 1e-6;

/// `R = V − ln(1 − V) − 1`: −1 at zero visibility, diverging as `V → 1`.
pub fn reward_from_visibility(v: f64) -> f64 {
    let v = v.clamp(0.0, VISIBILITY_CAP);
    v - (-v).ln_1p() - 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub geometry: Geometry<f64>,
    pub camera: Camera<f64>,
    pub randomization: RandomizationConfig,
    pub episode_length: usize,
    /// Seed of the first episode; later episodes use consecutive seeds.
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            geometry: Geometry::default(),
            camera: Camera::default(),
            randomization: RandomizationConfig::all_on(),
            episode_length: EPISODE_LENGTH,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.camera.validate()?;
        self.randomization.validate(self.camera.phase_count)?;
        if self.episode_length == 0 {
            return Err(Error::Config("episode_length must be positive".into()));
        }
        Ok(())
    }
}

/// Mutable per-episode state. Owned by one caller; clone it to branch.
#[derive(Debug, Clone)]
pub struct EnvState {
    pub seed: u64,
    pub angles: MirrorAngles<f64>,
    pub radius: f64,
    pub step_index: usize,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Closed-form visibility of the hidden state; drives the reward.
    pub visibility: f64,
    pub distance_mm: f64,
    pub angle_mrad: f64,
    /// Step size of the action taken, in units of the angle range.
    pub action_magnitude: f64,
    /// Visibility measured from the randomized frames, when defined.
    pub measured_visibility: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Observation<f32>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// The simulated interferometer. Immutable; all episode state lives in
/// [`EnvState`], so one `Env` can drive any number of episodes.
#[derive(Debug, Clone)]
pub struct Env {
    config: EnvConfig,
    camera: Camera<f32>,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            camera: config.camera.cast(),
            config,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn observation_shape(&self) -> (usize, usize, usize) {
        let c = &self.config.camera;
        (c.phase_count, c.n_pixels, c.n_pixels)
    }

    /// Starts an episode with every angle uniform in its `±α_max`.
    pub fn reset(&self, seed: u64) -> (EnvState, Observation<f32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lim = self.config.geometry.angle_limits;
        let mut angles = MirrorAngles::zero();
        for c in Control::ALL {
            let l = lim.get(c);
            *angles.get_mut(c) = rng.gen_range(-l..=l);
        }
        self.start(seed, angles, rng)
    }

    /// Starts an episode from given angles (clamped), with the same
    /// randomization stream `reset(seed)` would use.
    pub fn reset_with_angles(&self, seed: u64, angles: MirrorAngles<f64>) -> (EnvState, Observation<f32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in Control::ALL {
            let _: f64 = rng.gen();
        }
        self.start(seed, angles.clamped(&self.config.geometry.angle_limits), rng)
    }

    fn start(&self, seed: u64, angles: MirrorAngles<f64>, mut rng: ChaCha8Rng) -> (EnvState, Observation<f32>) {
        let episode = sample_episode_draws(&mut rng, &self.config.randomization);
        let mut state = EnvState {
            seed,
            angles,
            radius: self.config.geometry.beam_radius * episode.radius_factor,
            step_index: 0,
            rng,
        };
        let obs = self.observe(&mut state);
        (state, obs)
    }

    pub fn beam_state(&self, state: &EnvState) -> BeamState<f64> {
        beam_state_from_angles(&state.angles, &self.config.geometry, state.radius)
    }

    /// Diagnostics for the current hidden state (no action taken).
    pub fn info(&self, state: &EnvState, action_magnitude: f64) -> StepInfo {
        let beam = self.beam_state(state);
        let m = misalignment_metrics(&beam, self.config.geometry.wavenumber());
        StepInfo {
            visibility: visibility_analytic(&beam),
            distance_mm: m.distance_mm,
            angle_mrad: m.angle_mrad,
            action_magnitude,
            measured_visibility: None,
        }
    }

    pub fn step(&self, state: &mut EnvState, action_id: usize) -> Result<StepResult> {
        if state.step_index >= self.config.episode_length {
            return Err(Error::EpisodeDone(state.step_index));
        }
        if action_id >= ACTION_COUNT {
            return Err(Error::InvalidAction(action_id));
        }
        let spec = action_spec(action_id)?;
        let lim = &self.config.geometry.angle_limits;
        let d = spec.delta(lim);
        let mut angles = state.angles;
        for c in Control::ALL {
            *angles.get_mut(c) += d.get(c);
        }
        state.angles = angles.clamped(lim);
        state.step_index += 1;

        let observation = self.observe(state);
        let mut info = self.info(state, spec.magnitude());
        info.measured_visibility = observation_visibility(&observation).ok().map(f64::from);
        Ok(StepResult {
            observation,
            reward: reward_from_visibility(info.visibility),
            done: state.step_index >= self.config.episode_length,
            info,
        })
    }

    fn observe(&self, state: &mut EnvState) -> Observation<f32> {
        let n_frames = self.config.camera.phase_count;
        let draws = sample_step_draws(&mut state.rng, &self.config.randomization, n_frames);
        self.render_with(state, &draws)
    }

    /// Renders the current state under explicit randomization draws.
    pub fn render_with(&self, state: &EnvState, draws: &StepDraws) -> Observation<f32> {
        let n_frames = self.config.camera.phase_count;
        let phases = phase_schedule::<f32>(n_frames, draws.n_forward, draws.shift)
            .expect("draws respect the validated schedule bounds");
        let mut obs = Observation::zeros(n_frames, self.camera.n_pixels);
        render_observation_into(&self.beam_state(state).cast(), &phases, &self.camera, &mut obs)
            .expect("phase count matches camera");
        apply_image_randomizations(&mut obs, draws);
        obs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::actions::{action_id, Axis, Sign, Target, NOOP};

    fn small_env(randomization: RandomizationConfig) -> Env {
        Env::new(EnvConfig {
            camera: Camera { n_pixels: 16, ..Default::default() },
            randomization,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn reward_examples() {
        assert_eq!(reward_from_visibility(0.0), -1.0);
        assert!((reward_from_visibility(0.5) - 0.1931).abs() < 1e-4);
        assert!((reward_from_visibility(0.99) - 4.5952).abs() < 1e-4);
        assert!(reward_from_visibility(1.0).is_finite());
        assert_eq!(reward_from_visibility(1.0), reward_from_visibility(VISIBILITY_CAP));
    }

    #[test]
    fn same_seed_same_episode() {
        let env = small_env(RandomizationConfig::all_on());
        let (s1, o1) = env.reset(7);
        let (s2, o2) = env.reset(7);
        assert_eq!(s1.angles, s2.angles);
        assert_eq!(s1.radius, s2.radius);
        assert_eq!(o1, o2);
        let (s3, _) = env.reset(8);
        assert_ne!(s1.angles, s3.angles);
    }

    #[test]
    fn noop_keeps_beam_state() {
        let env = small_env(RandomizationConfig::all_on());
        let (mut s, _) = env.reset(3);
        let before = env.beam_state(&s);
        let r = env.step(&mut s, NOOP).unwrap();
        assert_eq!(env.beam_state(&s), before);
        assert_eq!(r.info.visibility, visibility_analytic(&before));
        assert_eq!(r.info.action_magnitude, 0.0);
    }

    #[test]
    fn opposite_actions_restore_angles() {
        let env = small_env(RandomizationConfig::all_off());
        let (mut s, _) = env.reset_with_angles(1, MirrorAngles::zero());
        let plus = action_id(Target::Mirror1, Axis::X, Sign::Plus, 0).unwrap();
        let minus = action_id(Target::Mirror1, Axis::X, Sign::Minus, 0).unwrap();
        env.step(&mut s, plus).unwrap();
        assert!(s.angles.a1x > 0.0);
        env.step(&mut s, minus).unwrap();
        assert_eq!(s.angles, MirrorAngles::zero());
    }

    #[test]
    fn episode_ends_at_exactly_100_steps() {
        let env = small_env(RandomizationConfig::all_on());
        let (mut s, _) = env.reset(5);
        for t in 1..=EPISODE_LENGTH {
            let r = env.step(&mut s, NOOP).unwrap();
            assert_eq!(r.done, t == EPISODE_LENGTH);
        }
        assert!(matches!(env.step(&mut s, NOOP), Err(Error::EpisodeDone(100))));
    }

    #[test]
    fn invalid_action_leaves_state() {
        let env = small_env(RandomizationConfig::all_on());
        let (mut s, _) = env.reset(5);
        let angles = s.angles;
        assert!(matches!(env.step(&mut s, 25), Err(Error::InvalidAction(25))));
        assert_eq!(s.angles, angles);
        assert_eq!(s.step_index, 0);
    }

    #[test]
    fn angles_saturate_at_limits() {
        let env = small_env(RandomizationConfig::all_off());
        let (mut s, _) = env.reset(9);
        let push = action_id(Target::Bs2, Axis::Y, Sign::Minus, 2).unwrap();
        for _ in 0..30 {
            env.step(&mut s, push).unwrap();
        }
        assert_eq!(s.angles.a2y, -1.8e-3);
    }

    #[test]
    fn brightness_does_not_touch_reported_visibility() {
        let bright = small_env(RandomizationConfig { brightness_enabled: true, ..RandomizationConfig::all_off() });
        let plain = small_env(RandomizationConfig::all_off());
        let (mut a, oa) = bright.reset(4);
        let (mut b, ob) = plain.reset(4);
        assert_ne!(oa, ob);
        for id in [1, 7, 0, 13] {
            let ra = bright.step(&mut a, id).unwrap();
            let rb = plain.step(&mut b, id).unwrap();
            assert_eq!(ra.info.visibility, rb.info.visibility);
            assert_eq!(ra.reward, rb.reward);
        }
    }

    #[test]
    fn config_json_roundtrip() {
        let cfg = EnvConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: EnvConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: EnvConfig = serde_json::from_str(r#"{"seed": 12}"#).unwrap();
        assert_eq!(partial.seed, 12);
        assert_eq!(partial.camera.n_pixels, 64);
    }
}
