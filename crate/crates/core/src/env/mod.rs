//! The alignment task as a partially observable MDP.

pub mod actions;
pub mod mdp;
pub mod randomization;

pub use actions::{action_id, action_spec, action_table, ActionSpec, Axis, Sign, Target, ACTION_COUNT, MAGNITUDES, NOOP};
pub use mdp::{reward_from_visibility, Env, EnvConfig, EnvState, StepInfo, StepResult, EPISODE_LENGTH, VISIBILITY_CAP};
pub use randomization::{
    apply_image_randomizations, phase_schedule, sample_episode_draws, sample_step_draws,
    EpisodeDraws, RandomizationConfig, StepDraws,
};
