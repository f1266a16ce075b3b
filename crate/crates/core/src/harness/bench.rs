use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{sample_step_draws, Env, EnvConfig};
use crate::error::{Error, Result};
use crate::optics::Camera;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub observations: u64,
    pub seconds: f64,
    pub obs_per_sec: f64,
    pub n_pixels: usize,
    pub n_frames: usize,
}

/// Renders randomized observations of random reset states back to back for
/// at least `duration` and reports the sustained rate.
pub fn bench_throughput(duration: Duration, camera: Camera<f64>) -> Result<Throughput> {
    if duration < Duration::from_secs(1) {
        return Err(Error::Config("benchmark duration must be at least 1 s".into()));
    }
    let env = Env::new(EnvConfig { camera, ..EnvConfig::default() })?;
    let cfg = env.config().randomization;
    let mut rng = ChaCha8Rng::seed_from_u64(0xbe9c);
    let mut observations = 0u64;
    let mut checksum = 0.0f32;
    let start = Instant::now();
    let mut episode = 0;
    while start.elapsed() < duration {
        // A fresh state every few renders so the pixel work varies.
        let (state, _) = env.reset(episode);
        episode += 1;
        for _ in 0..20 {
            let draws = sample_step_draws(&mut rng, &cfg, camera.phase_count);
            let obs = env.render_with(&state, &draws);
            checksum += obs.data[obs.data.len() / 2];
            observations += 1;
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    std::hint::black_box(checksum);
    Ok(Throughput {
        observations,
        seconds,
        obs_per_sec: observations as f64 / seconds,
        n_pixels: camera.n_pixels,
        n_frames: camera.phase_count,
    })
}
