//! Training loop: three-phase epsilon-greedy rollouts, balanced replay, DQN updates with soft
//! target tracking, periodic greedy evaluation and checkpoints.

mod config;
mod episode;
mod eval;

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, ScenarioSpec, Status};
use crate::neural::{
    adam_step, clip_global_norm, load_checkpoint, save_checkpoint, AdamState, Architecture, CheckpointError,
    CheckpointMeta, NeuralError, TdBatch,
};
use crate::observe::ObserveError;
use crate::replay::{update_count, ReplayBuffer, ReplayError};
use crate::{Adam, Network, Pair, Real};

pub use config::{exploit_probability, ActingNetwork, TrainConfig};
pub use episode::{
    greedy_rollout, parse_episode_line, run_episode, run_episode_from, Episode, EpisodeMode, EpisodeRecord,
    FixedPolicy, Policy, SchemaError,
};
pub use eval::{eval_scene_seeds, evaluate, EvalMetrics, OutcomeCounts};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Observe(#[from] ObserveError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Per-episode training metrics line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: u64,
    pub outcome: Status,
    pub length: u32,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub buffer_ratio: f64,
    pub p_exploit: f64,
    pub grad_steps: u32,
    pub loss_mean: Option<f64>,
}

/// Periodic evaluation line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub episode: u64,
    pub success_rate: f64,
    pub mean_actions: Option<f64>,
    pub n_obstacles: usize,
    pub n_scenes: usize,
    pub outcomes: OutcomeCounts,
}

impl EvalRecord {
    fn new(episode: u64, m: &EvalMetrics) -> Self {
        Self {
            episode,
            success_rate: m.success_rate,
            mean_actions: m.mean_actions_on_success,
            n_obstacles: m.n_obstacles,
            n_scenes: m.n_scenes,
            outcomes: m.outcomes,
        }
    }
}

/// One line of the metrics JSONL stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricsRecord {
    Episode(EpisodeMetrics),
    Eval(EvalRecord),
}

/// Result of [`Trainer::train`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// `(episode, buffer success ratio)` after every episode.
    pub ratios: Vec<(u64, f64)>,
    pub evals: Vec<EvalRecord>,
}

/// Stream offsets of the trainer's generators, all seeded from [`TrainConfig::seed`].
const INIT_STREAM: u64 = 3;
const TRAIN_STREAM: u64 = 0;

/// Mutable training state.
pub struct Trainer {
    cfg: TrainConfig,
    pair: Pair,
    adam: Adam,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    episode: u64,
    metrics: Option<Box<dyn Write + Send>>,
    episode_log: Option<Box<dyn Write + Send>>,
    checkpoint_dir: Option<PathBuf>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
        init.set_stream(INIT_STREAM);
        let pair = Pair::new(Architecture::desk(cfg.resolution), &mut init)?;
        let adam = AdamState::new(&pair.primary.params, cfg.adam);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(TRAIN_STREAM);
        Ok(Self {
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            cfg,
            pair,
            adam,
            rng,
            episode: 0,
            metrics: None,
            episode_log: None,
            checkpoint_dir: None,
        })
    }

    /// Continue from a checkpoint written by [`Trainer::checkpoint_bytes`].
    ///
    /// Networks, optimizer moments, the episode counter and the training generator are restored.
    /// The replay buffer is not part of a checkpoint and starts empty.
    pub fn resume(cfg: TrainConfig, bytes: &[u8]) -> Result<Self, TrainError> {
        let mut t = Self::new(cfg)?;
        let loaded = load_checkpoint(bytes, Some(&t.cfg.geometry.config_hash()))?;
        if loaded.pair.primary.arch != t.pair.primary.arch {
            return Err(TrainError::Config(format!(
                "checkpoint architecture {} does not match resolution {}",
                loaded.pair.primary.arch_id(),
                t.cfg.resolution
            )));
        }
        t.pair = loaded.pair;
        t.adam = loaded.adam;
        t.adam.config = t.cfg.adam;
        t.episode = loaded.meta.episode;
        if let Some(state) = loaded.meta.rng_state {
            t.rng = serde_json::from_value(state)?;
        }
        Ok(t)
    }

    pub fn with_metrics(mut self, sink: impl Write + Send + 'static) -> Self {
        self.metrics = Some(Box::new(sink));
        self
    }

    pub fn with_episode_log(mut self, sink: impl Write + Send + 'static) -> Self {
        self.episode_log = Some(Box::new(sink));
        self
    }

    /// Directory receiving `checkpoint_<episode>.bin` at every evaluation.
    pub fn with_checkpoint_dir(mut self, dir: impl AsRef<Path>) -> Self {
        self.checkpoint_dir = Some(dir.as_ref().to_path_buf());
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn pair(&self) -> &Pair {
        &self.pair
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Network used for greedy actions.
    pub fn acting_network(&self) -> &Network {
        match self.cfg.act_with {
            ActingNetwork::Target => &self.pair.target,
            ActingNetwork::Primary => &self.pair.primary,
        }
    }

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        let meta = CheckpointMeta {
            episode: self.episode,
            config_hash: self.cfg.geometry.config_hash(),
            rng_state: Some(serde_json::to_value(&self.rng).expect("rng state serializes")),
            extra: serde_json::json!({ "train_config": self.cfg }),
        };
        save_checkpoint(&self.pair, &self.adam, &meta)
    }

    /// Run one training episode and the updates that follow it.
    pub fn train_episode(&mut self) -> Result<EpisodeMetrics, TrainError> {
        let k = self.episode + 1;
        let p_exploit = exploit_probability(k, &self.cfg);
        let spec = ScenarioSpec { seed: self.rng.gen(), n_obstacles: self.cfg.n_obstacles_train };
        let acting = match self.cfg.act_with {
            ActingNetwork::Target => &self.pair.target,
            ActingNetwork::Primary => &self.pair.primary,
        };
        let mut ep = run_episode(spec, p_exploit, acting, &self.cfg, &mut self.rng)?;
        ep.record.episode = Some(k);
        self.buffer.push_episode(ep.experiences, &self.cfg.buffer_policy, &mut self.rng)?;

        let mut grad_steps = 0;
        let mut loss_sum = 0.0;
        if self.buffer.len() >= self.cfg.buffer_policy.min_fill.max(self.cfg.batch_size) {
            let n = update_count(self.buffer.success_ratio(), &self.cfg.buffer_policy, &mut self.rng);
            for _ in 0..n {
                loss_sum += self.gradient_step()?;
                grad_steps += 1;
            }
        }
        self.episode = k;
        let metrics = EpisodeMetrics {
            episode: k,
            outcome: ep.record.outcome,
            length: ep.record.length,
            episode_return: ep.record.episode_return(),
            buffer_ratio: self.buffer.success_ratio(),
            p_exploit,
            grad_steps,
            loss_mean: (grad_steps > 0).then(|| loss_sum / grad_steps as f64),
        };
        if let Some(log) = self.episode_log.as_mut() {
            serde_json::to_writer(&mut *log, &ep.record)?;
            log.write_all(b"\n")?;
        }
        self.emit(&MetricsRecord::Episode(metrics.clone()))?;
        Ok(metrics)
    }

    /// One Adam step on a fresh uniform batch, followed by a soft target update. Returns the loss.
    pub fn gradient_step(&mut self) -> Result<f64, TrainError> {
        let batch = self.buffer.sample_batch(self.cfg.batch_size, &mut self.rng)?;
        let td = TdBatch::<Real>::from_experiences(&batch);
        let mut out = self.pair.td_loss_and_grads(&td, self.cfg.gamma as Real)?;
        if let Some(c) = self.cfg.grad_clip {
            clip_global_norm(&mut out.grads, c as Real);
        }
        adam_step(&mut self.pair.primary.params, &out.grads, &mut self.adam)?;
        self.pair.soft_update(self.cfg.soft_update_rate as Real)?;
        Ok(out.loss as f64)
    }

    /// Greedy evaluation of the acting network on the held-out scene stream.
    pub fn evaluate(&self, n_scenes: usize, n_obstacles: usize) -> Result<EvalMetrics, TrainError> {
        evaluate(self.acting_network(), n_scenes, n_obstacles, &self.cfg, eval_seed(self.cfg.seed))
    }

    /// Train until `episode` episodes have run in total, evaluating and checkpointing on cadence.
    pub fn run_until(&mut self, episode: u64) -> Result<TrainReport, TrainError> {
        let mut report = TrainReport::default();
        while self.episode < episode {
            let m = self.train_episode()?;
            report.ratios.push((m.episode, m.buffer_ratio));
            if self.cfg.eval_every > 0 && self.episode.is_multiple_of(self.cfg.eval_every) {
                let n_obs = self.cfg.eval_obstacle_count();
                let metrics = self.evaluate(self.cfg.eval_scenes, n_obs)?;
                let rec = EvalRecord::new(self.episode, &metrics);
                log::info!(
                    "episode {}: success rate {:.3} on {} scenes",
                    self.episode,
                    rec.success_rate,
                    rec.n_scenes
                );
                self.emit(&MetricsRecord::Eval(rec.clone()))?;
                report.evals.push(rec);
                self.write_checkpoint()?;
            }
        }
        Ok(report)
    }

    /// Run the remaining episodes up to `total_episodes`.
    pub fn train(&mut self) -> Result<TrainReport, TrainError> {
        self.run_until(self.cfg.total_episodes)
    }

    fn write_checkpoint(&self) -> Result<(), TrainError> {
        if let Some(dir) = &self.checkpoint_dir {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(format!("checkpoint_{:06}.bin", self.episode)), self.checkpoint_bytes())?;
        }
        Ok(())
    }

    fn emit(&mut self, rec: &MetricsRecord) -> Result<(), TrainError> {
        if let Some(out) = self.metrics.as_mut() {
            serde_json::to_writer(&mut *out, rec)?;
            out.write_all(b"\n")?;
            out.flush()?;
        }
        Ok(())
    }
}

/// Evaluation seed paired with a training seed.
pub fn eval_seed(train_seed: u64) -> u64 {
    train_seed ^ 0x5eed_e7a1_0000_0000
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::BufferPolicy;

    fn small() -> TrainConfig {
        TrainConfig {
            k1: 2,
            k2: 4,
            total_episodes: 6,
            resolution: 32,
            eval_every: 0,
            buffer_policy: BufferPolicy { min_fill: 50, ..BufferPolicy::default() },
            n_obstacles_train: 1,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn min_fill_gates_updates() {
        let cfg = TrainConfig {
            total_episodes: 1,
            k1: 0,
            k2: 1,
            resolution: 32,
            eval_every: 0,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(cfg).unwrap();
        let before = t.pair().clone();
        let m = t.train_episode().unwrap();
        assert_eq!(m.grad_steps, 0);
        assert_eq!(m.loss_mean, None);
        assert_eq!(t.pair(), &before);
    }

    #[test]
    fn metrics_stream_has_one_line_per_episode() {
        let buf = std::sync::Arc::new(std::sync::Mutex::new(Vec::<u8>::new()));
        struct Sink(std::sync::Arc<std::sync::Mutex<Vec<u8>>>);
        impl Write for Sink {
            fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
                self.0.lock().unwrap().write(b)
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let mut t = Trainer::new(small()).unwrap().with_metrics(Sink(buf.clone()));
        t.train().unwrap();
        let text = String::from_utf8(buf.lock().unwrap().clone()).unwrap();
        let lines: Vec<MetricsRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 6);
        for (i, rec) in lines.iter().enumerate() {
            let MetricsRecord::Episode(m) = rec else { panic!("unexpected eval record") };
            assert_eq!(m.episode, i as u64 + 1);
        }
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["episode", "outcome", "length", "return", "buffer_ratio", "p_exploit", "grad_steps", "loss_mean"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn resume_continues_the_rng_stream() {
        let mut full = Trainer::new(small()).unwrap();
        full.run_until(3).unwrap();
        let bytes = full.checkpoint_bytes();
        let resumed = Trainer::resume(small(), &bytes).unwrap();
        assert_eq!(resumed.episode(), 3);
        assert_eq!(resumed.rng, full.rng);
        assert_eq!(resumed.pair(), full.pair());
        assert_eq!(resumed.adam, full.adam);
    }
}
