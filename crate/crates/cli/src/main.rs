use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use push_core::env::{make_scenario, Action, Point};
use push_core::explore::PotentialField;
use push_core::neural::load_checkpoint;
use push_core::observe::render;
use push_core::session::SessionManager;
use push_core::trainer::{evaluate, ActingNetwork, TrainConfig, Trainer};

/// Every flag can also be set through the environment variable named in its help text.
#[derive(Parser, Debug)]
#[command(name = "push", version, about = "Learned nonprehensile pushing: train, evaluate, serve, debug")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON training config; missing keys take their defaults.
    #[arg(long, env = "PUSH_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "PUSH_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "PUSH_OBSTACLES")]
    obstacles: Option<usize>,
    #[arg(long, env = "PUSH_RESOLUTION")]
    resolution: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a Q-network and write metrics, episode logs and checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "PUSH_EPISODES")]
        episodes: Option<u64>,
        /// Resume from this checkpoint.
        #[arg(long, env = "PUSH_CHECKPOINT")]
        checkpoint: Option<PathBuf>,
        #[arg(long, env = "PUSH_OUT", default_value = "runs/latest")]
        out: PathBuf,
    },
    /// Greedy evaluation of a checkpoint on fresh scenes.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "PUSH_CHECKPOINT")]
        checkpoint: PathBuf,
        #[arg(long, env = "PUSH_SCENES", default_value_t = 300)]
        scenes: usize,
        #[arg(long, value_enum, default_value_t = Net::Target)]
        network: Net,
    },
    /// Run the WebSocket session service; static assets are served on the same port.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "PUSH_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "PUSH_ASSETS")]
        assets: Option<PathBuf>,
        /// JSONL file receiving finished session episodes.
        #[arg(long, env = "PUSH_LOG", default_value = "sessions.jsonl")]
        log: PathBuf,
        #[arg(long, value_enum, default_value_t = Net::Target)]
        network: Net,
    },
    /// Print the exploration distribution over the five actions.
    SampleDebug {
        #[command(flatten)]
        common: Common,
        /// Tool position in cm; defaults to the scene's start pose.
        #[arg(long, requires = "y")]
        x: Option<f64>,
        #[arg(long, requires = "x")]
        y: Option<f64>,
    },
    /// Render a scene observation to PNG.
    ExportPng {
        #[command(flatten)]
        common: Common,
        /// Comma-separated actions (1-5) applied before rendering.
        #[arg(long, default_value = "")]
        actions: String,
        #[arg(long, default_value = "scene.png")]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Net {
    Target,
    Primary,
}

impl From<Net> for ActingNetwork {
    fn from(n: Net) -> Self {
        match n {
            Net::Target => ActingNetwork::Target,
            Net::Primary => ActingNetwork::Primary,
        }
    }
}

fn load_config(common: &Common) -> Result<TrainConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(n) = common.obstacles {
        cfg.n_obstacles_train = n;
    }
    if let Some(r) = common.resolution {
        cfg.resolution = r;
    }
    Ok(cfg)
}

/// Shrink the exploration schedule proportionally when a run is shorter than its ramp.
fn fit_schedule(cfg: &mut TrainConfig, episodes: u64) {
    if episodes < cfg.k2 {
        let scale = episodes as f64 / cfg.total_episodes as f64;
        cfg.k1 = (cfg.k1 as f64 * scale).floor() as u64;
        cfg.k2 = ((cfg.k2 as f64 * scale).ceil() as u64).clamp(cfg.k1 + 1, episodes.max(cfg.k1 + 1));
        log::warn!("schedule scaled to k1 = {}, k2 = {} for {episodes} episodes", cfg.k1, cfg.k2);
    }
    cfg.total_episodes = episodes;
}

fn jsonl(path: &Path, append: bool) -> Result<BufWriter<File>> {
    let f = File::options()
        .create(true)
        .append(append)
        .write(true)
        .truncate(!append)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn train(common: Common, episodes: Option<u64>, checkpoint: Option<PathBuf>, out: PathBuf) -> Result<()> {
    let mut cfg = load_config(&common)?;
    if let Some(n) = episodes {
        fit_schedule(&mut cfg, n);
    }
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
    let trainer = match &checkpoint {
        Some(path) => {
            let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            Trainer::resume(cfg, &bytes)?
        }
        None => Trainer::new(cfg)?,
    };
    let append = checkpoint.is_some();
    let mut trainer = trainer
        .with_metrics(jsonl(&out.join("metrics.jsonl"), append)?)
        .with_episode_log(jsonl(&out.join("episodes.jsonl"), append)?)
        .with_checkpoint_dir(out.join("checkpoints"));
    log::info!("training from episode {} to {}", trainer.episode() + 1, trainer.config().total_episodes);
    let report = trainer.train()?;
    std::fs::write(out.join("final.bin"), trainer.checkpoint_bytes())?;
    for e in &report.evals {
        println!("episode {:>6}  success {:.3}  ({} scenes, {} obstacles)", e.episode, e.success_rate, e.n_scenes, e.n_obstacles);
    }
    println!("final checkpoint: {}", out.join("final.bin").display());
    Ok(())
}

fn eval(common: Common, checkpoint: PathBuf, scenes: usize, network: Net) -> Result<()> {
    let mut cfg = load_config(&common)?;
    let bytes = std::fs::read(&checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    let loaded = load_checkpoint(&bytes, Some(&cfg.geometry.config_hash()))?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let net = match ActingNetwork::from(network) {
        ActingNetwork::Target => loaded.pair.target,
        ActingNetwork::Primary => loaded.pair.primary,
    };
    cfg.resolution = net.arch.input[1];
    let n_obstacles = common.obstacles.unwrap_or(cfg.n_obstacles_train);
    let seed = common.seed.unwrap_or_else(|| push_core::trainer::eval_seed(cfg.seed));
    let metrics = evaluate(&net, scenes, n_obstacles, &cfg, seed)?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    Ok(())
}

fn serve(common: Common, port: u16, assets: Option<PathBuf>, log: PathBuf, network: Net) -> Result<()> {
    let cfg = load_config(&common)?;
    let mgr = SessionManager::new(cfg.geometry).with_log(jsonl(&log, true)?).with_acting_network(network.into());
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(push_serve::serve(addr, Arc::new(mgr), assets))?;
    Ok(())
}

fn sample_debug(common: Common, x: Option<f64>, y: Option<f64>) -> Result<()> {
    let cfg = load_config(&common)?;
    let n = common.obstacles.unwrap_or(cfg.n_obstacles_train);
    let world = make_scenario(cfg.seed, n, &cfg.geometry)?;
    let p = match (x, y) {
        (Some(x), Some(y)) => Point::new(x, y),
        _ => world.tool_pose,
    };
    let field = PotentialField::from_obstacles(&world.obstacles, &cfg.field);
    let dist = field.action_distribution(p);
    let deltas = field.sector_deltas(p);
    println!("scene seed {} with {n} obstacles, tool at ({:.3}, {:.3})", cfg.seed, p.x, p.y);
    for (i, o) in world.obstacles.iter().enumerate() {
        println!("  obstacle {i} at ({:.3}, {:.3})", o.x, o.y);
    }
    println!("action  delta          probability");
    for a in Action::ALL {
        println!("{a:>6}  {:>+12.6e}  {:.6}", deltas[a.slot()], dist.prob(a));
    }
    Ok(())
}

fn export_png(common: Common, actions: String, out: PathBuf) -> Result<()> {
    let cfg = load_config(&common)?;
    let n = common.obstacles.unwrap_or(cfg.n_obstacles_train);
    let mut world = make_scenario(cfg.seed, n, &cfg.geometry)?;
    for tok in actions.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let a = Action::new(tok.parse().with_context(|| format!("bad action {tok:?}"))?)?;
        if world.status(&cfg.geometry).is_terminal() {
            bail!("episode ended before action {a}");
        }
        world.step_mut(a, &cfg.geometry)?;
    }
    render(&world, &cfg.geometry, cfg.resolution)?.save_png(&out)?;
    println!("{} ({}x{}, status {})", out.display(), cfg.resolution, cfg.resolution, world.status(&cfg.geometry));
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train { common, episodes, checkpoint, out } => train(common, episodes, checkpoint, out),
        Command::Eval { common, checkpoint, scenes, network } => eval(common, checkpoint, scenes, network),
        Command::Serve { common, port, assets, log, network } => serve(common, port, assets, log, network),
        Command::SampleDebug { common, x, y } => sample_debug(common, x, y),
        Command::ExportPng { common, actions, out } => export_png(common, actions, out),
    }
}
