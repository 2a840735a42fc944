use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::episode::{greedy_rollout, Policy};
use super::{TrainConfig, TrainError};
use crate::env::{make_scenario, Status};

/// Stream reserved for evaluation scene seeds.
const EVAL_STREAM: u64 = 7;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub success: usize,
    pub collision: usize,
    pub out_of_surface: usize,
    pub timeout: usize,
}

impl OutcomeCounts {
    pub fn add(&mut self, status: Status) {
        match status {
            Status::Success => self.success += 1,
            Status::FailCollision => self.collision += 1,
            Status::FailOutOfSurface => self.out_of_surface += 1,
            Status::FailTimeout => self.timeout += 1,
            Status::Running => {}
        }
    }

    pub fn total(&self) -> usize {
        self.success + self.collision + self.out_of_surface + self.timeout
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub n_scenes: usize,
    pub n_obstacles: usize,
    pub success_rate: f64,
    /// Mean episode length over successful scenes; `None` when nothing succeeded.
    pub mean_actions_on_success: Option<f64>,
    pub outcomes: OutcomeCounts,
}

/// Scenario seed of evaluation scene `i` under `seed`. Drawn from a stream that training never uses.
pub fn eval_scene_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(EVAL_STREAM);
    (0..n).map(|_| rng.gen()).collect()
}

/// Greedy rollouts on `n_scenes` fresh scenes. Timeouts count as failures.
pub fn evaluate<P: Policy>(
    policy: &P,
    n_scenes: usize,
    n_obstacles: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<EvalMetrics, TrainError> {
    if n_scenes == 0 {
        return Err(TrainError::Config("evaluation needs at least one scene".into()));
    }
    let mut outcomes = OutcomeCounts::default();
    let mut success_steps = 0usize;
    for scene_seed in eval_scene_seeds(seed, n_scenes) {
        let world = make_scenario(scene_seed, n_obstacles, &cfg.geometry)?;
        let (status, actions) = greedy_rollout(world, policy, cfg)?;
        outcomes.add(status);
        if status == Status::Success {
            success_steps += actions.len();
        }
    }
    Ok(EvalMetrics {
        n_scenes,
        n_obstacles,
        success_rate: outcomes.success as f64 / n_scenes as f64,
        mean_actions_on_success: (outcomes.success > 0).then(|| success_steps as f64 / outcomes.success as f64),
        outcomes,
    })
}
