//! Episodes, evaluation summaries, the randomization ablation and the
//! renderer benchmark.

pub mod ablation;
pub mod bench;
pub mod eval;
pub mod policy;

pub use ablation::{
    ablate, write_ablation_csv, AblationEvent, AblationRow, AblationVariant, ABLATION_CSV_HEADER,
};
pub use bench::{bench_throughput, Throughput};
pub use eval::{
    eval_episode_seed, evaluate, read_episode_records, run_episode, write_jsonl_line, EpisodeRecord,
    EvalSummary, StepRecord, LAST_STEPS,
};
pub use policy::{ConstantPolicy, EpsilonGreedyPolicy, GreedyPolicy, Policy, RandomPolicy};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Env, EnvConfig, RandomizationConfig, NOOP};
    use crate::optics::{Camera, MirrorAngles};

    fn small_env() -> Env {
        Env::new(EnvConfig {
            camera: Camera { n_pixels: 16, ..Default::default() },
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn noop_from_aligned_start_stays_perfect() {
        let env = small_env();
        let rec = run_episode(&mut ConstantPolicy(NOOP), &env, 0, 9, Some(MirrorAngles::zero())).unwrap();
        assert_eq!(rec.steps.len(), 101);
        assert!(rec.steps.iter().all(|s| s.visibility == 1.0));
        assert_eq!(rec.best_visibility(), 1.0);
        assert_eq!(rec.late_visibility(), 1.0);
    }

    #[test]
    fn single_episode_summary_is_that_episode() {
        let env = small_env();
        let mut p = RandomPolicy::new();
        let mut seen = Vec::new();
        let s = evaluate(&mut p, &env, 1, 4, |r| {
            seen.push(r.clone());
            Ok(())
        })
        .unwrap();
        let r = &seen[0];
        assert_eq!(s.episodes, 1);
        assert_eq!(s.mean_best_visibility, r.best_visibility());
        assert_eq!(s.std_best_visibility, 0.0);
        assert_eq!(s.mean_return, r.episode_return());
        assert_eq!(s.mean_late_visibility, r.late_visibility());
        assert_eq!(s.visibility_curve.len(), 100);
        assert_eq!(s.action_magnitude_curve.len(), 100);
        let acted: Vec<f64> = r.steps[1..].iter().map(|s| s.visibility).collect();
        assert_eq!(s.visibility_curve, acted);
    }

    #[test]
    fn summary_survives_a_jsonl_round_trip() {
        let env = small_env();
        let mut p = RandomPolicy::new();
        let mut buf = Vec::new();
        let s = evaluate(&mut p, &env, 3, 10, |r| r.write_jsonl(&mut buf)).unwrap();
        let back = read_episode_records(&buf[..]).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(EvalSummary::from_records("random", &back).unwrap(), s);
    }

    #[test]
    fn random_policy_repeats_per_seed() {
        let env = small_env();
        let a = run_episode(&mut RandomPolicy::new(), &env, 0, 5, None).unwrap();
        let b = run_episode(&mut RandomPolicy::new(), &env, 0, 5, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn max_action_pins_angles_at_the_limit() {
        let env = Env::new(EnvConfig {
            camera: Camera { n_pixels: 16, ..Default::default() },
            randomization: RandomizationConfig::all_off(),
            ..Default::default()
        })
        .unwrap();
        // Id 3 is the largest positive step of mirror 1 along x.
        let rec = run_episode(&mut ConstantPolicy(3), &env, 0, 1, None).unwrap();
        let g = env.config().geometry;
        let mut pinned = MirrorAngles::zero();
        pinned.a1x = g.angle_limits.a1x;
        let (state, _) = env.reset(1);
        let mut expected_angles = state.angles;
        expected_angles.a1x = pinned.a1x;
        let beam = crate::optics::beam_state_from_angles(&expected_angles, &g, g.beam_radius);
        let v = crate::optics::visibility_analytic(&beam);
        assert!((rec.final_visibility() - v).abs() < 1e-12);
    }

    #[test]
    fn ablation_variants_and_csv() {
        assert_eq!(AblationVariant::ALL.len(), 5);
        let base = RandomizationConfig::all_on();
        assert_eq!(AblationVariant::AllOn.apply(base), base);
        assert!(!AblationVariant::MinusNoise.apply(base).noise_enabled);
        let rows: Vec<AblationRow> = AblationVariant::ALL
            .iter()
            .map(|v| AblationRow {
                variant: v.name().into(),
                visibility_mean: 0.5,
                visibility_std: 0.1,
                return_mean: -3.0,
                return_std: 1.0,
            })
            .collect();
        let mut out = Vec::new();
        write_ablation_csv(&mut out, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], ABLATION_CSV_HEADER);
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[5], "minus-phase-timing,0.5,0.1,-3,1");
    }
}
