//! Simulated Mach-Zehnder interferometer alignment.
//!
//! * [`optics`]: beam geometry, fringe rendering and visibility.
//! * [`env`]: the alignment task with its domain randomizations.
//! * [`agent`]: double dueling DQN built on a small generic network library.
//! * [`harness`]: episodes, evaluation, ablation and throughput benchmarks.

pub mod agent;
pub mod env;
pub mod error;
pub mod harness;
pub mod optics;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// Frames as produced by the environment.
pub type Obs = optics::Observation<f32>;
/// Single-precision network used for training and acting.
pub type QNet = agent::QNetwork<f32>;
/// Double-precision network, handy for numerical checks.
pub type QNet64 = agent::QNetwork<f64>;
pub type Beam = optics::BeamState<f64>;
pub type Angles = optics::MirrorAngles<f64>;
