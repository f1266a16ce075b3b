use mzi_core::env::*;
use mzi_core::optics::{observation_visibility, MirrorAngles};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn env_with(randomization: RandomizationConfig) -> Env {
    Env::new(EnvConfig { randomization, ..EnvConfig::default() }).unwrap()
}

#[test]
fn reward_reference_values() {
    assert_eq!(reward_from_visibility(0.0), -1.0);
    assert!((reward_from_visibility(0.5) - 0.193_147).abs() < 1e-6);
    assert!((reward_from_visibility(0.99) - 4.595_17).abs() < 1e-4);
    assert!(reward_from_visibility(1.0).is_finite());
    assert_eq!(reward_from_visibility(1.0), reward_from_visibility(VISIBILITY_CAP));
}

#[test]
fn reward_is_strictly_increasing_on_a_grid() {
    let n = 10_000;
    let mut prev = f64::NEG_INFINITY;
    for i in 0..=n {
        let v = VISIBILITY_CAP * i as f64 / n as f64;
        let r = reward_from_visibility(v);
        assert!(r > prev, "not increasing at {v}");
        prev = r;
    }
}

#[test]
fn step_draw_distributions() {
    let cfg = RandomizationConfig::all_on();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 100_000;
    let mut sum_b = 0.0;
    let mut forward_seen = [false; 16];
    let mut shift_seen = [false; 16];
    for _ in 0..n {
        let d = sample_step_draws(&mut rng, &cfg, 16);
        assert!((0.7..=1.3).contains(&d.brightness));
        assert!((9..16).contains(&d.n_forward));
        assert!(d.shift < 16);
        forward_seen[d.n_forward] = true;
        shift_seen[d.shift] = true;
        sum_b += d.brightness;
    }
    assert!((sum_b / n as f64 - 1.0).abs() < 0.01);
    assert!((9..16).all(|f| forward_seen[f]));
    assert!(shift_seen.iter().all(|&s| s));
}

#[test]
fn reset_radius_and_angle_ranges() {
    let env = env_with(RandomizationConfig::all_on());
    let lim = env.config().geometry.angle_limits;
    let mut sum = [0.0; 4];
    let n = 10_000;
    let mut below = 0usize;
    for seed in 0..n {
        let (s, _) = env.reset(seed);
        assert!((0.76..=1.14).contains(&s.radius), "{}", s.radius);
        let a = [s.angles.a1x / lim.a1x, s.angles.a1y / lim.a1y, s.angles.a2x / lim.a2x, s.angles.a2y / lim.a2y];
        for (acc, v) in sum.iter_mut().zip(a) {
            assert!((-1.0..=1.0).contains(&v));
            *acc += v;
        }
        if a[0] < 0.0 {
            below += 1;
        }
    }
    for acc in sum {
        assert!((acc / n as f64).abs() < 0.03);
    }
    assert!((below as f64 / n as f64 - 0.5).abs() < 0.02);
}

#[test]
fn episodes_last_exactly_one_hundred_steps() {
    let env = env_with(RandomizationConfig::all_on());
    let (mut s, _) = env.reset(3);
    for t in 1..=EPISODE_LENGTH {
        let r = env.step(&mut s, NOOP).unwrap();
        assert_eq!(r.done, t == EPISODE_LENGTH);
    }
    assert!(matches!(env.step(&mut s, NOOP), Err(mzi_core::Error::EpisodeDone(_))));
}

#[test]
fn aligned_start_keeps_perfect_visibility_under_noop() {
    let env = env_with(RandomizationConfig::all_off());
    let (mut s, obs) = env.reset_with_angles(0, MirrorAngles::zero());
    // Nine forward frames never land exactly on π, so the measured contrast stays just below 1.
    let measured = observation_visibility(&obs).unwrap();
    assert!(measured > 0.9 && measured < 1.0, "{measured}");
    for _ in 0..EPISODE_LENGTH {
        let r = env.step(&mut s, NOOP).unwrap();
        assert_eq!(r.info.visibility, 1.0);
        assert_eq!(r.info.distance_mm, 0.0);
    }
}

#[test]
fn noise_realizations_are_zero_mean() {
    let env = env_with(RandomizationConfig {
        brightness_enabled: false,
        radius_enabled: false,
        phase_timing_enabled: false,
        ..RandomizationConfig::all_on()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = sample_step_draws(&mut rng, &env.config().randomization, 16);
    let mut obs = mzi_core::optics::Observation::<f32>::zeros(16, 64);
    obs.data.iter_mut().for_each(|v| *v = 0.5);
    apply_image_randomizations(&mut obs, &draws);
    let mean = obs.data.iter().map(|&v| v as f64).sum::<f64>() / obs.data.len() as f64;
    assert!((mean - 0.5).abs() < 0.002);
    assert!(obs.data.iter().all(|&v| (0.4..=0.6).contains(&v)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn angles_never_leave_their_range(seed in any::<u64>(), actions in prop::collection::vec(0usize..25, 1..100)) {
        let env = env_with(RandomizationConfig::all_off());
        let lim = env.config().geometry.angle_limits;
        let (mut s, _) = env.reset(seed);
        for a in actions {
            env.step(&mut s, a).unwrap();
            let g = s.angles;
            prop_assert!(g.a1x.abs() <= lim.a1x && g.a1y.abs() <= lim.a1y);
            prop_assert!(g.a2x.abs() <= lim.a2x && g.a2y.abs() <= lim.a2y);
        }
    }

    #[test]
    fn seed_and_actions_determine_everything(seed in any::<u64>(), actions in prop::collection::vec(0usize..25, 1..12)) {
        let env = env_with(RandomizationConfig::all_on());
        let run = || {
            let (mut s, first) = env.reset(seed);
            let mut trace = vec![first.data];
            let mut rewards = vec![];
            for &a in &actions {
                let r = env.step(&mut s, a).unwrap();
                trace.push(r.observation.data);
                rewards.push(r.reward.to_bits());
            }
            (trace, rewards)
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn disabled_draws_never_change(seed in any::<u64>()) {
        let cfg = RandomizationConfig::all_off();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let first = sample_step_draws(&mut rng, &cfg, 16);
        for _ in 0..10 {
            prop_assert_eq!(sample_step_draws(&mut rng, &cfg, 16), first);
        }
        prop_assert_eq!(first, StepDraws::identity(9));
    }

    #[test]
    fn schedules_are_rotations(n_forward in 9usize..16, shift in 0usize..16) {
        let base: Vec<f64> = phase_schedule(16, n_forward, 0).unwrap();
        let shifted: Vec<f64> = phase_schedule(16, n_forward, shift).unwrap();
        let mut expect = base.clone();
        expect.rotate_left(shift);
        prop_assert_eq!(shifted, expect);
        let rising = base.windows(2).take(n_forward - 1).all(|w| w[1] > w[0]);
        prop_assert!(rising);
    }
}
