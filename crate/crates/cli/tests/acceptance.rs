//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Includes a full 10⁵-step training run and the five-variant
//! ablation, so expect it to take a few hours on one core.
//!
//! Set `MZI_ACCEPTANCE_ONLY=<substring>` to run a subset.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mzi_cli::{run_ablation, run_eval, run_training, PolicyKind, RunConfig};
use mzi_core::agent::{
    td_target_double, td_loss_and_grad, Batch, ConvSpec, NetSpec, QNetwork, StepScratch, Tape,
};
use mzi_core::env::{
    apply_image_randomizations, reward_from_visibility, sample_episode_draws, sample_step_draws,
    RandomizationConfig, VISIBILITY_CAP,
};
use mzi_core::harness::{bench_throughput, AblationVariant};
use mzi_core::optics::{
    beam_state_from_angles, observation_visibility, render_observation_into, visibility_analytic, BeamState, Camera,
    Geometry, MirrorAngles, Observation,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn visibility_oracle() -> Outcome {
    let g = Geometry::<f64>::default();
    let r = g.beam_radius;
    let k_max = g.wavenumber() * (g.angle_limits.a1x + g.angle_limits.a2x);
    let camera = Camera { n_pixels: 256, side_length: 8.0 * r, phase_count: 64 };
    let phases: Vec<f64> = (0..64).map(|j| 2.0 * PI * j as f64 / 64.0).collect();
    let mut obs = Observation::zeros(64, 256);
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        // Three in four states have tilts small enough for visible fringes;
        // the rest span every reachable tilt.
        let k_span = if rng.gen_bool(0.75) { 4.0 / r } else { k_max };
        let state = BeamState {
            x0: rng.gen_range(-r..=r),
            y0: rng.gen_range(-r..=r),
            kx: rng.gen_range(-k_span..=k_span),
            ky: rng.gen_range(-k_span..=k_span),
            radius: r,
        };
        render_observation_into(&state, &phases, &camera, &mut obs).map_err(|e| e.to_string())?;
        let numeric = observation_visibility(&obs).map_err(|e| e.to_string())?;
        worst = worst.max((numeric - visibility_analytic(&state)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 0.02 && secs < 60.0,
        format!("1000 states, max |numeric - analytic| = {worst:.5} (limit 0.02), {secs:.1} s (limit 60 s)"),
    )
}

fn geometry() -> Outcome {
    let g = Geometry::<f64>::default();
    let k = g.wavenumber();
    // Hand-evaluated with a = 200 mm, c = 100 mm: x = α₂·c + α₁·(a + c), k_x/k = α₁ + α₂.
    // (angles, x0 mm, y0 mm, kx/k, ky/k)
    let cases: [([f64; 4], f64, f64, f64, f64); 7] = [
        ([5.2e-3, 0.0, 0.0, 0.0], 1.56, 0.0, 5.2e-3, 0.0),
        ([0.0, 3.7e-3, 0.0, 0.0], 0.0, 1.11, 0.0, 3.7e-3),
        ([0.0, 0.0, 2.6e-3, 0.0], 0.26, 0.0, 2.6e-3, 0.0),
        ([0.0, 0.0, 0.0, 1.8e-3], 0.0, 0.18, 0.0, 1.8e-3),
        ([5.2e-3, 3.7e-3, 2.6e-3, 1.8e-3], 1.82, 1.29, 7.8e-3, 5.5e-3),
        ([-5.2e-3, 3.7e-3, 2.6e-3, -1.8e-3], -1.3, 0.93, -2.6e-3, 1.9e-3),
        ([1e-3, 0.0, -1e-3, 0.0], 0.2, 0.0, 0.0, 0.0),
    ];
    let mut cases = cases.to_vec();
    // Every corner of the angle box, from the per-control contributions above.
    for corner in 0..16 {
        let s = |bit: usize| if corner >> bit & 1 == 1 { -1.0 } else { 1.0 };
        cases.push((
            [s(0) * 5.2e-3, s(1) * 3.7e-3, s(2) * 2.6e-3, s(3) * 1.8e-3],
            s(0) * 1.56 + s(2) * 0.26,
            s(1) * 1.11 + s(3) * 0.18,
            s(0) * 5.2e-3 + s(2) * 2.6e-3,
            s(1) * 3.7e-3 + s(3) * 1.8e-3,
        ));
    }
    let close = |got: f64, want: f64| (got - want).abs() <= 1e-12 * want.abs().max(1e-300) || got == want;
    let mut bad = Vec::new();
    for &(a, x0, y0, kx, ky) in &cases {
        let s = beam_state_from_angles(&MirrorAngles::new(a[0], a[1], a[2], a[3]), &g, g.beam_radius);
        if !(close(s.x0, x0) && close(s.y0, y0) && close(s.kx / k, kx) && close(s.ky / k, ky)) {
            bad.push(format!("{a:?} -> ({}, {}, {}, {})", s.x0, s.y0, s.kx / k, s.ky / k));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let mut linear_fail = 0;
    let lim = g.angle_limits;
    for _ in 0..10_000 {
        let a = MirrorAngles::new(
            rng.gen_range(-lim.a1x..=lim.a1x),
            rng.gen_range(-lim.a1y..=lim.a1y),
            rng.gen_range(-lim.a2x..=lim.a2x),
            rng.gen_range(-lim.a2y..=lim.a2y),
        );
        let s: f64 = rng.gen_range(-3.0..3.0);
        let scaled = MirrorAngles::new(s * a.a1x, s * a.a1y, s * a.a2x, s * a.a2y);
        let base = beam_state_from_angles(&a, &g, g.beam_radius);
        let lhs = beam_state_from_angles(&scaled, &g, g.beam_radius);
        let ok = [(lhs.x0, base.x0), (lhs.y0, base.y0), (lhs.kx, base.kx), (lhs.ky, base.ky)]
            .iter()
            .all(|&(l, b)| (l - s * b).abs() <= 1e-12 * (s * b).abs().max(1e-9));
        if !ok {
            linear_fail += 1;
        }
    }
    check(
        bad.is_empty() && linear_fail == 0,
        format!(
            "{} extreme/reference angle sets to 12 significant digits ({} off); linearity 10000 draws ({} off)",
            cases.len(),
            bad.len(),
            linear_fail
        ) + &bad.iter().map(|b| format!("; {b}")).collect::<String>(),
    )
}

fn reward() -> Outcome {
    let r0 = reward_from_visibility(0.0);
    let r99 = reward_from_visibility(0.99);
    let n = 10_000;
    let mut monotone = true;
    let mut prev = f64::NEG_INFINITY;
    for i in 0..=n {
        let r = reward_from_visibility(VISIBILITY_CAP * i as f64 / n as f64);
        monotone &= r > prev;
        prev = r;
    }
    check(
        r0 == -1.0 && monotone && (r99 - 4.5952).abs() <= 1e-4,
        format!("R(0) = {r0}, strictly increasing on {} points: {monotone}, R(0.99) = {r99:.6}", n + 1),
    )
}

fn throughput() -> Outcome {
    let t = bench_throughput(Duration::from_secs(5), Camera::default()).map_err(|e| e.to_string())?;
    check(
        t.obs_per_sec >= 200.0 && t.seconds >= 5.0,
        format!(
            "{:.0} obs/s at ({}, {}, {}) over {:.1} s, all randomizations on",
            t.obs_per_sec, t.n_frames, t.n_pixels, t.n_pixels, t.seconds
        ),
    )
}

fn randomization() -> Outcome {
    let cfg = RandomizationConfig::all_on();
    let g = Geometry::<f64>::default();
    let mut rng = ChaCha8Rng::seed_from_u64(550);
    let n = 100_000;
    let (mut r_lo, mut r_hi) = (f64::MAX, f64::MIN);
    let (mut b_lo, mut b_hi) = (f64::MAX, f64::MIN);
    let mut min_forward = usize::MAX;
    for _ in 0..n {
        let r = g.beam_radius * sample_episode_draws(&mut rng, &cfg).radius_factor;
        r_lo = r_lo.min(r);
        r_hi = r_hi.max(r);
        let d = sample_step_draws(&mut rng, &cfg, 16);
        b_lo = b_lo.min(d.brightness);
        b_hi = b_hi.max(d.brightness);
        min_forward = min_forward.min(d.n_forward);
    }
    // Noise alone, on a mid-grey stack so clipping never engages.
    let noise_only = RandomizationConfig {
        brightness_enabled: false,
        ..cfg
    };
    let mut sum = 0.0;
    let mut count = 0usize;
    for _ in 0..100 {
        let d = sample_step_draws(&mut rng, &noise_only, 16);
        let mut obs = Observation::<f64>::zeros(16, 64);
        obs.data.iter_mut().for_each(|v| *v = 0.5);
        apply_image_randomizations(&mut obs, &d);
        sum += obs.data.iter().map(|v| v - 0.5).sum::<f64>();
        count += obs.data.len();
    }
    let noise_mean = sum / count as f64;
    check(
        r_lo >= 0.76 && r_hi <= 1.14 && b_lo >= 0.7 && b_hi <= 1.3 && min_forward >= 9 && noise_mean.abs() <= 0.002,
        format!(
            "{n} draws: radius [{r_lo:.4}, {r_hi:.4}] mm, brightness [{b_lo:.4}, {b_hi:.4}], min forward frames {min_forward}, noise mean {noise_mean:.2e} over {count} pixels"
        ),
    )
}

fn agent_math() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(551);

    // Dueling mean-centering on the full-size network.
    let spec = NetSpec::default();
    let net = QNetwork::<f64>::new(spec.clone(), 1).map_err(|e| e.to_string())?;
    let input: Vec<f64> = (0..2 * spec.input_len()).map(|_| rng.gen()).collect();
    let mut tape = Tape::new();
    net.forward(&input, 2, &mut tape);
    let a = spec.n_actions;
    let mut centering = 0.0f64;
    for b in 0..2 {
        let v = tape.value()[b];
        let mean = tape.q()[b * a..(b + 1) * a].iter().map(|q| q - v).sum::<f64>() / a as f64;
        centering = centering.max(mean.abs() / (1.0 + v.abs()));
    }

    // Double-DQN targets against a hand-written evaluation of two tiny nets.
    let tiny = NetSpec { in_channels: 1, height: 1, width: 3, convs: vec![], hidden: 3, n_actions: 2 };
    let mut target_err = 0.0f64;
    for case in 0..1000u64 {
        let online = QNetwork::<f64>::new(tiny.clone(), 2 * case).map_err(|e| e.to_string())?;
        let target = QNetwork::<f64>::new(tiny.clone(), 2 * case + 1).map_err(|e| e.to_string())?;
        let next: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let reward = rng.gen_range(-5.0..5.0);
        let done = rng.gen_bool(0.2);
        let gamma = rng.gen_range(0.5..1.0);
        let qo = tiny_q(&online, &next);
        let qt = tiny_q(&target, &next);
        let pick = usize::from(qo[1] > qo[0]);
        let want = if done { reward } else { reward + gamma * qt[pick] };
        let got = td_target_double(&[reward], &[done], &next, &online, &target, gamma)[0];
        target_err = target_err.max((got - want).abs());
    }

    // Backprop through the TD loss against central differences.
    let small = NetSpec {
        in_channels: 2,
        height: 6,
        width: 6,
        convs: vec![ConvSpec { filters: 2, kernel: 3, stride: 1 }, ConvSpec { filters: 2, kernel: 2, stride: 2 }],
        hidden: 4,
        n_actions: 3,
    };
    let online = QNetwork::<f64>::new(small.clone(), 5).map_err(|e| e.to_string())?;
    let target = QNetwork::<f64>::new(small.clone(), 6).map_err(|e| e.to_string())?;
    let n = 4;
    let batch = Batch {
        size: n,
        obs: (0..n * small.input_len()).map(|_| rng.gen()).collect(),
        actions: (0..n).map(|_| rng.gen_range(0..small.n_actions)).collect(),
        rewards: vec![-1.0, 0.3, 4.0, -0.2],
        next_obs: (0..n * small.input_len()).map(|_| rng.gen()).collect(),
        dones: vec![false, true, false, false],
    };
    let mut scratch = StepScratch::new();
    td_loss_and_grad(&batch, &online, &target, 0.99, 1.0, &mut scratch);
    let analytic = scratch.grads().to_vec();
    let h = 1e-5;
    let mut p = online.params().to_vec();
    let loss_at = |params: &[f64]| {
        let net = QNetwork::from_params(small.clone(), params.to_vec()).unwrap();
        td_loss_and_grad(&batch, &net, &target, 0.99, 1.0, &mut StepScratch::new())
    };
    let mut grad_err = 0.0f64;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = loss_at(&p);
        p[i] = orig - h;
        let down = loss_at(&p);
        p[i] = orig;
        let num = (up - down) / (2.0 * h);
        grad_err = grad_err.max((analytic[i] - num).abs() / analytic[i].abs().max(num.abs()).max(1e-7));
    }

    check(
        centering < 1e-12 && target_err < 1e-12 && grad_err < 1e-4,
        format!(
            "dueling mean(Q - V) {centering:.1e}; double target vs brute force over 1000 cases max err {target_err:.1e}; \
             TD-loss gradient vs central differences on {} parameters max rel err {grad_err:.2e}",
            p.len()
        ),
    )
}

/// Forward pass of a conv-free dueling net written out from its parameters.
fn tiny_q(net: &QNetwork<f64>, x: &[f64]) -> Vec<f64> {
    let slot = |name: &str| {
        let s = net.layout().iter().find(|s| s.name == name).unwrap();
        &net.params()[s.offset..s.offset + s.len]
    };
    let spec = net.spec();
    let (wh, bh) = (slot("hidden.weight"), slot("hidden.bias"));
    let hidden: Vec<f64> = (0..spec.hidden)
        .map(|j| (bh[j] + (0..x.len()).map(|i| x[i] * wh[i * spec.hidden + j]).sum::<f64>()).max(0.0))
        .collect();
    let (wv, bv) = (slot("value.weight"), slot("value.bias"));
    let v = bv[0] + hidden.iter().zip(wv).map(|(h, w)| h * w).sum::<f64>();
    let (wa, ba) = (slot("advantage.weight"), slot("advantage.bias"));
    let adv: Vec<f64> = (0..spec.n_actions)
        .map(|a| ba[a] + (0..spec.hidden).map(|j| hidden[j] * wa[j * spec.n_actions + a]).sum::<f64>())
        .collect();
    let mean = adv.iter().sum::<f64>() / adv.len() as f64;
    adv.iter().map(|a| v + a - mean).collect()
}

fn training_smoke(dir: &Path) -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.train.total_steps = 100_000;
    let start = Instant::now();
    let summary = run_training(&cfg, &dir.join("train"), false).map_err(|e| format!("{e:#}"))?;
    let secs = start.elapsed().as_secs_f64();
    let baseline = run_eval(&cfg, PolicyKind::Random, None, &dir.join("random")).map_err(|e| format!("{e:#}"))?;
    let agent = summary.mean_final_visibility_last50;
    let base = baseline.mean_final_visibility;
    let returns: Vec<f64> = std::fs::read_to_string(dir.join("train/metrics.jsonl"))
        .map_err(|e| e.to_string())?
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).map(|v| v["return"].as_f64().unwrap_or(f64::NAN)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let decile = (returns.len() / 10).max(1);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (first, last) = (mean(&returns[..decile]), mean(&returns[returns.len() - decile..]));
    check(
        secs < 7200.0 && agent >= 2.0 * base,
        format!(
            "{} steps in {:.0} s (limit 7200 s); last-50 mean final visibility {agent:.5} vs random baseline {base:.5} over {} episodes (need >= {:.5}); mean return first decile {first:.2}, last decile {last:.2}",
            summary.steps,
            secs,
            baseline.episodes,
            2.0 * base
        ),
    )
}

fn ablation(dir: &Path) -> Outcome {
    let cfg = RunConfig::default();
    let out = dir.join("ablation");
    let rows = run_ablation(&cfg, &AblationVariant::ALL, &out).map_err(|e| format!("{e:#}"))?;
    let csv = std::fs::read_to_string(out.join("ablation.csv")).map_err(|e| e.to_string())?;
    let names: Vec<&str> = rows.iter().map(|r| r.variant.as_str()).collect();
    let expected = ["all-on", "minus-radius", "minus-brightness", "minus-noise", "minus-phase-timing"];
    let get = |n: &str| rows.iter().find(|r| r.variant == n).map(|r| r.visibility_mean);
    let (all_on, minus_noise) = (get("all-on").unwrap_or(f64::NAN), get("minus-noise").unwrap_or(f64::NAN));
    check(
        names == expected && csv.lines().count() == 6 && all_on >= minus_noise,
        format!(
            "variants {names:?}; {} steps each; last-20 visibility all-on {all_on:.5} vs minus-noise {minus_noise:.5}",
            cfg.ablation.train_steps
        ),
    )
}

fn e2e_determinism(dir: &Path) -> Outcome {
    let bin = env!("CARGO_BIN_EXE_mzi");
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.join(format!("eval_{run}"));
        let status = Command::new(bin)
            .args(["eval", "--policy", "random", "--episodes", "5", "--seed", "31337", "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        outputs.push(std::fs::read(out.join("metrics.jsonl")).map_err(|e| e.to_string())?);
    }
    check(
        !outputs[0].is_empty() && outputs[0] == outputs[1],
        format!("two `mzi eval --seed 31337` runs: {} and {} bytes, identical: {}", outputs[0].len(), outputs[1].len(), outputs[0] == outputs[1]),
    )
}

fn main() {
    let work = tempfile::tempdir().expect("temporary directory");
    let dir = work.path();
    let only = std::env::var("MZI_ACCEPTANCE_ONLY").ok();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("visibility oracle", Box::new(visibility_oracle)),
        ("geometry", Box::new(geometry)),
        ("reward", Box::new(reward)),
        ("renderer throughput", Box::new(throughput)),
        ("randomization distributions", Box::new(randomization)),
        ("agent math", Box::new(agent_math)),
        ("end-to-end determinism", Box::new(|| e2e_determinism(dir))),
        ("training smoke", Box::new(|| training_smoke(dir))),
        ("ablation protocol", Box::new(|| ablation(dir))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        if only.as_deref().is_some_and(|o| !name.contains(o)) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS  {name}: {d} [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
