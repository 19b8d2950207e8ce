use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use orsense::bench::{run_all, trace_name, BenchmarkManifest, ModePair};
use orsense::executor::{run_episode, EpisodeConfig, FailureReason, SensingMode};
use orsense::mcts::PlannerMode;
use orsense::metrics::{aggregate, to_csv};
use orsense::scene::{generate_scene_with, GroundTruthScene, SizeClass};
use orsense::snapshot::{render_top_down, replay_trace, save_png};
use orsense::trace::Trace;
use orsense::Error;

#[derive(Parser)]
#[command(name = "orsense", version, about = "Active sensing and object retrieval benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scene of a manifest under every mode pair.
    Bench(BenchArgs),
    /// Run a single episode.
    Run(RunArgs),
    /// Render a scene file or a trace replayed up to a viewpoint.
    Snapshot(SnapshotArgs),
    /// Generate a scene file.
    Gen(GenArgs),
}

/// Parameters shared by every command that builds an episode configuration.
/// Values from `--config` are applied first, flags override them.
#[derive(Args, Clone)]
struct Params {
    /// TOML file with any subset of the episode configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Per-search wall-clock limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    branching: Option<usize>,
    #[arg(long)]
    exploration: Option<f64>,
    #[arg(long)]
    max_attempts: Option<usize>,
    #[arg(long)]
    max_viewpoints: Option<usize>,
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long)]
    dias_threshold: Option<f64>,
    #[arg(long)]
    voxel_size: Option<f64>,
}

impl Params {
    fn episode_config(&self) -> Result<EpisodeConfig, Error> {
        let mut cfg: EpisodeConfig = match &self.config {
            Some(p) => toml::from_str(&fs::read_to_string(p)?).map_err(|e| Error::Format(e.to_string()))?,
            None => EpisodeConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($field:tt)+) => {
                if let Some(v) = self.$flag {
                    cfg.$($field)+ = v;
                }
            };
        }
        set!(max_iterations => mcts.max_iterations);
        set!(time_limit => mcts.time_limit);
        set!(branching => mcts.branching);
        set!(exploration => mcts.exploration_c);
        set!(max_attempts => max_attempts);
        set!(max_viewpoints => sensing.budget.max_viewpoints);
        set!(candidates => sensing.budget.candidates);
        set!(dias_threshold => dias_threshold);
        set!(voxel_size => generator.voxel_size);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct BenchArgs {
    /// Manifest TOML; defaults to the standard seeds and mode pairs.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Number of seeds for the default manifest.
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    /// Comma-separated mode pairs such as `MAS/OR,IAS/OR`.
    #[arg(long, value_delimiter = ',')]
    modes: Vec<ModePair>,
    #[arg(long, default_value = "bench_out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[command(flatten)]
    params: Params,
}

#[derive(Args)]
struct RunArgs {
    /// Scene file to run on instead of generating one.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "small")]
    size: SizeClass,
    #[arg(long, default_value_t = 5)]
    obstacles: usize,
    #[arg(long, default_value = "MAS")]
    mode: SensingMode,
    #[arg(long, default_value = "OR")]
    planner: PlannerMode,
    /// Write the episode trace (JSON Lines).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write a top-down rendering of the final belief.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    #[command(flatten)]
    params: Params,
}

#[derive(Args)]
struct SnapshotArgs {
    /// Scene file (.toml) or episode trace (.jsonl).
    input: PathBuf,
    /// Number of trace viewpoints to replay; all of them when omitted.
    #[arg(long)]
    step: Option<usize>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "small")]
    size: SizeClass,
    #[arg(long, default_value_t = 5)]
    obstacles: usize,
    /// Output path; standard output when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    params: Params,
}

/// Failure carried to `main` with its exit code.
struct Exit(u8, String);

impl From<Error> for Exit {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidSpec(_) => 1,
            Error::Io(_) | Error::Format(_) => 2,
            _ => 3,
        };
        Exit(code, e.to_string())
    }
}

impl From<std::io::Error> for Exit {
    fn from(e: std::io::Error) -> Self {
        Exit(2, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Bench(a) => bench(a),
        Command::Run(a) => run(a),
        Command::Snapshot(a) => snapshot(a),
        Command::Gen(a) => gen(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Exit(code, msg)) => {
            eprintln!("orsense: {msg}");
            ExitCode::from(code)
        }
    }
}

fn bench(a: BenchArgs) -> Result<(), Exit> {
    let base = a.params.episode_config()?;
    let mut manifest = match &a.manifest {
        Some(p) => BenchmarkManifest::load(p)?,
        None => BenchmarkManifest::with_seeds(a.seeds),
    };
    if !a.modes.is_empty() {
        manifest.configs = a.modes.clone();
    }
    manifest.validate()?;
    let configs = manifest.expand(&base);
    eprintln!("running {} episodes", configs.len());
    let results = run_all(&configs, a.workers)?;

    let traces = a.out.join("traces");
    fs::create_dir_all(&traces)?;
    fs::write(a.out.join("manifest.toml"), manifest.to_toml()?)?;
    fs::write(a.out.join("config.toml"), toml::to_string(&base).map_err(|e| Error::Format(e.to_string()))?)?;
    let mut summary = String::new();
    for r in &results {
        r.trace.save(traces.join(format!("{}.jsonl", trace_name(r))))?;
        summary.push_str(&serde_json::to_string(r).map_err(|e| Error::Format(e.to_string()))?);
        summary.push('\n');
    }
    fs::write(a.out.join("results.jsonl"), summary)?;
    let table = to_csv(&aggregate(&results));
    fs::write(a.out.join("metrics.csv"), &table)?;
    print!("{table}");
    let bad = results.iter().filter(|r| r.failure == Some(FailureReason::ReplayInvalid)).count();
    if bad > 0 {
        eprintln!("warning: {bad} plans failed ground-truth replay");
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<(), Exit> {
    let mut cfg = a.params.episode_config()?;
    cfg.seed = a.seed;
    cfg.size_class = a.size;
    cfg.n_obstacles = a.obstacles;
    cfg.sensing_mode = a.mode;
    cfg.planner_mode = a.planner;
    let gt = match &a.scene {
        Some(p) => GroundTruthScene::load(p)?,
        None => generate_scene_with(cfg.seed, cfg.size_class, cfg.n_obstacles, &cfg.generator)?,
    };
    let result = run_episode(&gt, &cfg);
    if let Some(p) = &a.trace {
        result.trace.save(p)?;
    }
    if let Some(p) = &a.snapshot {
        let steps = result.trace.viewpoint_count();
        let (_, belief, sweep) = replay_trace(&result.trace, steps)?;
        save_png(&render_top_down(&belief, Some(gt.target_id.0), sweep.as_ref()), p)?;
    }
    println!("{}", serde_json::to_string(&result).map_err(|e| Error::Format(e.to_string()))?);
    if result.failure == Some(FailureReason::ReplayInvalid) {
        return Err(Exit(3, "plan failed ground-truth replay".into()));
    }
    Ok(())
}

fn snapshot(a: SnapshotArgs) -> Result<(), Exit> {
    let img = if is_scene(&a.input) {
        if a.step.is_some_and(|s| s > 0) {
            return Err(Exit(1, "a scene file has no viewpoints to replay".into()));
        }
        let gt = GroundTruthScene::load(&a.input)?;
        render_top_down(&gt, Some(gt.target_id.0), None)
    } else {
        let trace = Trace::load(&a.input)?;
        let step = a.step.unwrap_or_else(|| trace.viewpoint_count());
        let (gt, belief, sweep) = replay_trace(&trace, step)?;
        render_top_down(&belief, Some(gt.target_id.0), sweep.as_ref())
    };
    save_png(&img, &a.out)?;
    Ok(())
}

fn is_scene(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "toml")
}

fn gen(a: GenArgs) -> Result<(), Exit> {
    let cfg = a.params.episode_config()?;
    let gt = generate_scene_with(a.seed, a.size, a.obstacles, &cfg.generator)?;
    let text = gt.to_file().to_toml()?;
    match &a.out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}
