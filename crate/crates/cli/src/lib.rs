//! The `mzi` command: train, evaluate, ablate, benchmark, render and serve.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mzi_core::agent::{load_checkpoint, save_checkpoint, train, EpisodeMetrics, TrainConfig};
use mzi_core::env::{Env, EnvConfig, RandomizationConfig};
use mzi_core::harness::{
    ablate, bench_throughput, evaluate, write_ablation_csv, write_jsonl_line, AblationEvent, AblationVariant,
    ConstantPolicy, EvalSummary, GreedyPolicy, Policy, RandomPolicy,
};
use mzi_core::env::phase_schedule;
use mzi_core::optics::export::{write_observation_dump, write_pgm};
use mzi_core::optics::{beam_state_from_angles, render_frame, render_observation, Camera, MirrorAngles};

/// Everything a run needs; every field has a default, so a config file
/// only lists what it changes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub ablation: AblationConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { episodes: 100, seed: 1_000_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    /// Environment steps of training per variant.
    pub train_steps: u64,
    pub eval_episodes: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self { train_steps: 20_000, eval_episodes: 50 }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mzi", version, about = "Interferometer alignment simulator and DQN agent")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyKind {
    Greedy,
    Random,
    Noop,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an agent; writes metrics.jsonl, summary.json and checkpoint/.
    Train {
        #[command(flatten)]
        common: Common,
        /// Total environment steps.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Run evaluation episodes; writes metrics.jsonl and summary.json.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episodes: Option<usize>,
        /// Checkpoint directory (required for the greedy policy).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "greedy")]
        policy: PolicyKind,
    },
    /// Train and evaluate one agent per randomization variant; writes ablation.csv.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Training steps per variant.
        #[arg(long)]
        steps: Option<u64>,
        /// Evaluation episodes per variant.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Measure renderer throughput with all randomizations on.
    Bench {
        #[arg(long, default_value_t = 5.0)]
        seconds: f64,
        #[arg(long, default_value_t = 64)]
        pixels: usize,
    },
    /// Dump frames of one state as PGM images plus a float dump.
    Render {
        #[command(flatten)]
        common: Common,
        /// Perfectly aligned beams.
        #[arg(long, conflicts_with = "angles")]
        aligned: bool,
        /// Mount angles in rad: a1x,a1y,a2x,a2y.
        #[arg(long, value_parser = parse_angles, allow_hyphen_values = true)]
        angles: Option<[f64; 4]>,
        /// Single piezo phase in rad, or `pi`; default renders the 16-frame sweep.
        #[arg(long, allow_negative_numbers = true)]
        phase: Option<String>,
    },
    /// Serve the environment to a browser over WebSocket.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = 64)]
        session_cap: usize,
        #[arg(long, default_value_t = 600)]
        idle_timeout_s: u64,
        /// Directory with the web client, served at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        /// Directory for per-session episode traces.
        #[arg(long)]
        records: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, steps } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            if let Some(s) = common.seed {
                cfg.train.seed = s;
            }
            if let Some(s) = steps {
                cfg.train.total_steps = s;
            }
            let summary = run_training(&cfg, &common.out, true)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Eval { common, episodes, checkpoint, policy } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            if let Some(s) = common.seed {
                cfg.eval.seed = s;
            }
            if let Some(n) = episodes {
                cfg.eval.episodes = n;
            }
            let summary = run_eval(&cfg, policy, checkpoint.as_deref(), &common.out)?;
            println!(
                "{} episodes, mean best visibility {:.4}, last-20 visibility {:.4} ± {:.4}, return {:.2} ± {:.2}",
                summary.episodes,
                summary.mean_best_visibility,
                summary.mean_late_visibility,
                summary.std_late_visibility,
                summary.mean_return,
                summary.std_return
            );
        }
        Command::Ablate { common, steps, episodes } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            if let Some(s) = common.seed {
                cfg.train.seed = s;
            }
            if let Some(s) = steps {
                cfg.ablation.train_steps = s;
            }
            if let Some(n) = episodes {
                cfg.ablation.eval_episodes = n;
            }
            run_ablation(&cfg, &AblationVariant::ALL, &common.out)?;
            print!("{}", fs::read_to_string(common.out.join("ablation.csv"))?);
        }
        Command::Bench { seconds, pixels } => {
            if !(seconds >= 1.0) {
                bail!("--seconds must be at least 1");
            }
            let camera = Camera { n_pixels: pixels, ..Camera::default() };
            let t = bench_throughput(Duration::from_secs_f64(seconds), camera)?;
            println!(
                "{:.1} obs/s ({} observations of {}x{}x{} in {:.2} s)",
                t.obs_per_sec, t.observations, t.n_frames, t.n_pixels, t.n_pixels, t.seconds
            );
        }
        Command::Render { common, aligned, angles, phase } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let angles = match (aligned, angles) {
                (true, _) => MirrorAngles::zero(),
                (false, Some(a)) => MirrorAngles::new(a[0], a[1], a[2], a[3]),
                (false, None) => {
                    let env = Env::new(cfg.env.clone())?;
                    env.reset(common.seed.unwrap_or(cfg.env.seed)).0.angles
                }
            };
            let phase = phase.as_deref().map(parse_phase).transpose()?;
            let written = run_render(&cfg.env, angles, phase, &common.out)?;
            for p in written {
                println!("{}", p.display());
            }
        }
        Command::Serve { config, port, session_cap, idle_timeout_s, static_dir, records } => {
            let cfg = RunConfig::load(config.as_deref())?;
            let server = mzi_play::ServerConfig {
                port,
                session_cap,
                idle_timeout: Duration::from_secs(idle_timeout_s),
                static_dir,
                records_dir: records,
                env: cfg.env,
            };
            tokio::runtime::Runtime::new()?.block_on(mzi_play::serve(server))?;
        }
    }
    Ok(())
}

fn parse_phase(s: &str) -> Result<f64> {
    let lower = s.trim().to_ascii_lowercase();
    let (factor, rest) = match lower.strip_suffix("pi") {
        Some(r) => (std::f64::consts::PI, r.trim_end_matches('*').trim()),
        None => (1.0, lower.as_str()),
    };
    let coeff = match rest {
        "" => 1.0,
        "-" => -1.0,
        r => r.parse::<f64>().with_context(|| format!("bad phase `{s}`"))?,
    };
    Ok(coeff * factor)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: u64,
    pub updates: u64,
    pub episodes: usize,
    pub seconds: f64,
    /// Mean final-step visibility over the last 50 episodes (fewer if the run is shorter).
    pub mean_final_visibility_last50: f64,
    pub checkpoint: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

fn parse_angles(s: &str) -> std::result::Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected 4 comma-separated angles, got {}", v.len()))
}

/// Trains per `cfg.train`; writes `metrics.jsonl`, `config.json`,
/// `summary.json` and `checkpoint/` under `out`.
pub fn run_training(cfg: &RunConfig, out: &Path, progress: bool) -> Result<TrainSummary> {
    fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), cfg)?;
    let env = Env::new(cfg.env.clone())?;
    let mut metrics = create(&out.join("metrics.jsonl"))?;
    let start = Instant::now();
    let mut write_err = None;
    let outcome = train(&env, &cfg.train, |m: &EpisodeMetrics| {
        if let Err(e) = write_jsonl_line(&mut metrics, m).and_then(|_| Ok(metrics.flush()?)) {
            write_err.get_or_insert(e);
        }
        if progress && (m.episode + 1) % 10 == 0 {
            eprintln!(
                "episode {:>5}  steps {:>8}  return {:>8.2}  final V {:.4}  eps {:.3}  loss {:.4}  {:.0} s",
                m.episode + 1,
                m.steps,
                m.episode_return,
                m.final_visibility,
                m.epsilon,
                m.mean_loss.unwrap_or(f64::NAN),
                start.elapsed().as_secs_f64()
            );
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    let ckpt = out.join("checkpoint");
    save_checkpoint(&outcome.network, &ckpt, outcome.steps)?;
    let tail = &outcome.metrics[outcome.metrics.len().saturating_sub(50)..];
    let summary = TrainSummary {
        steps: outcome.steps,
        updates: outcome.updates,
        episodes: outcome.metrics.len(),
        seconds: start.elapsed().as_secs_f64(),
        mean_final_visibility_last50: tail.iter().map(|m| m.final_visibility).sum::<f64>() / tail.len().max(1) as f64,
        checkpoint: ckpt,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Evaluates a policy per `cfg.eval`; writes the step trace to
/// `metrics.jsonl` and the aggregate to `summary.json`.
pub fn run_eval(cfg: &RunConfig, kind: PolicyKind, checkpoint: Option<&Path>, out: &Path) -> Result<EvalSummary> {
    let env = Env::new(cfg.env.clone())?;
    let mut policy: Box<dyn Policy> = match kind {
        PolicyKind::Greedy => {
            let dir = checkpoint.context("--checkpoint is required for the greedy policy")?;
            let dir = if dir.join("checkpoint").is_dir() { dir.join("checkpoint") } else { dir.to_path_buf() };
            let (net, _) = load_checkpoint::<f32>(&dir)?;
            let spec = net.spec();
            if (spec.in_channels, spec.height, spec.width) != env.observation_shape() {
                bail!("checkpoint expects {}x{}x{} observations", spec.in_channels, spec.height, spec.width);
            }
            Box::new(GreedyPolicy::new(net))
        }
        PolicyKind::Random => Box::new(RandomPolicy::new()),
        PolicyKind::Noop => Box::new(ConstantPolicy(mzi_core::env::NOOP)),
    };
    fs::create_dir_all(out)?;
    let mut trace = create(&out.join("metrics.jsonl"))?;
    let summary = evaluate(policy.as_mut(), &env, cfg.eval.episodes, cfg.eval.seed, |r| r.write_jsonl(&mut trace))?;
    trace.flush()?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Trains and evaluates every variant; writes `ablation.csv`, per-variant
/// training metrics and `summary.json` (the full evaluation summaries).
pub fn run_ablation(cfg: &RunConfig, variants: &[AblationVariant], out: &Path) -> Result<Vec<mzi_core::harness::AblationRow>> {
    fs::create_dir_all(out)?;
    let train_cfg = TrainConfig { total_steps: cfg.ablation.train_steps, ..cfg.train.clone() };
    // Evaluation always sees every randomization, as a stand-in for the real rig.
    let eval_env = Env::new(EnvConfig { randomization: RandomizationConfig::all_on(), ..cfg.env.clone() })?;
    let mut metrics = create(&out.join("metrics.jsonl"))?;
    let mut summaries = Vec::new();
    let mut io_err = None;
    let rows = ablate(
        variants,
        &cfg.env,
        &train_cfg,
        &eval_env,
        cfg.ablation.eval_episodes,
        cfg.eval.seed,
        |event| match event {
            AblationEvent::Episode(v, m) => {
                #[derive(Serialize)]
                struct Line<'a> {
                    variant: &'a str,
                    #[serde(flatten)]
                    metrics: &'a EpisodeMetrics,
                }
                if let Err(e) = write_jsonl_line(&mut metrics, &Line { variant: v.name(), metrics: m }) {
                    io_err.get_or_insert(e);
                }
            }
            AblationEvent::Row(v, s) => {
                eprintln!("{}: last-20 visibility {:.4} ± {:.4}", v.name(), s.mean_late_visibility, s.std_late_visibility);
                summaries.push((v.name(), s.clone()));
            }
        },
    )?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    metrics.flush()?;
    let mut csv = create(&out.join("ablation.csv"))?;
    write_ablation_csv(&mut csv, &rows)?;
    csv.flush()?;
    let summaries: std::collections::BTreeMap<_, _> = summaries.into_iter().collect();
    write_json(&out.join("summary.json"), &summaries)?;
    Ok(rows)
}

/// Renders one state without randomizations: a single frame when `phase` is
/// given, else the 16-frame sweep. Returns the files written.
pub fn run_render(env: &EnvConfig, angles: MirrorAngles<f64>, phase: Option<f64>, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let g = &env.geometry;
    let state = beam_state_from_angles(&angles.clamped(&g.angle_limits), g, g.beam_radius);
    let camera: Camera<f64> = env.camera;
    let n = camera.n_pixels;
    let mut written = Vec::new();
    match phase {
        Some(p) => {
            let frame = render_frame(&state, p, &camera);
            let path = out.join("frame.pgm");
            write_pgm(&path, &frame.pixels, n)?;
            written.push(path);
        }
        None => {
            let min_fwd = env.randomization.min_forward_frames;
            let phases = phase_schedule::<f64>(camera.phase_count, min_fwd, 0)?;
            let obs = render_observation(&state, &phases, &camera)?;
            for t in 0..obs.n_frames {
                let path = out.join(format!("frame_{t:02}.pgm"));
                write_pgm(&path, obs.frame(t), n)?;
                written.push(path);
            }
            let stem = out.join("observation");
            let (raw, sidecar) = write_observation_dump(&stem, &obs, &state, &phases, &camera)?;
            written.push(raw);
            written.push(sidecar);
        }
    }
    Ok(written)
}
