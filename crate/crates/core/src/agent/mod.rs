//! Double dueling DQN agent.

pub mod adam;
pub mod checkpoint;
pub mod dqn;
pub mod nn;
pub mod replay;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, load_checkpoint_for, read_manifest, save_checkpoint, Manifest};
pub use dqn::{
    argmax, huber, select_action, td_loss_and_grad, td_target_double, td_target_from_q, train,
    train_step, training_episode_seed, EpisodeMetrics, StepScratch, TrainConfig, TrainOutcome,
};
pub use nn::{dueling_combine, ConvSpec, NetSpec, ParamSlot, QNetwork, Tape};
pub use replay::{Batch, ReplayBuffer, Transition};
