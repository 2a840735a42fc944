use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainError};
use crate::env::{Action, ScenarioSpec, Status, WorldState};
use crate::explore::{ActionDistribution, PotentialField};
use crate::neural::{NeuralError, QNetwork};
use crate::observe::{render, Frame, Observation};
use crate::replay::Experience;
use crate::reward::reward_total;
use crate::scalar::Scalar;

/// Greedy action selection from an observation.
pub trait Policy {
    fn greedy(&self, obs: &Observation) -> Result<Action, NeuralError>;
}

impl<T: Scalar> Policy for QNetwork<T> {
    fn greedy(&self, obs: &Observation) -> Result<Action, NeuralError> {
        let mut input = vec![T::zero(); obs.pixels.len()];
        obs.write_normalized(&mut input);
        Ok(Action::from_slot(self.greedy_slot(&input)?))
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn greedy(&self, obs: &Observation) -> Result<Action, NeuralError> {
        (**self).greedy(obs)
    }
}

/// Always returns the same action.
#[derive(Debug, Clone, Copy)]
pub struct FixedPolicy(pub Action);

impl Policy for FixedPolicy {
    fn greedy(&self, _obs: &Observation) -> Result<Action, NeuralError> {
        Ok(self.0)
    }
}

/// Who produced an episode log line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeMode {
    Train,
    Eval,
    Human,
    Agent,
}

/// One finished episode. This is also the line format of every episode JSONL log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub mode: EpisodeMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode: Option<u64>,
    /// Scenario seed.
    pub seed: u64,
    pub n_obstacles: usize,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub outcome: Status,
    pub length: u32,
    /// Wall-clock time per step in milliseconds (interactive sessions).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_latency_ms: Option<Vec<f64>>,
    /// Number of mid-episode scene edits; a perturbed episode does not replay from its seed.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub perturbations: u32,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SchemaError {
    #[error("malformed episode line: {0}")]
    Parse(String),
    #[error("episode invariant violated: {0}")]
    Invariant(String),
}

impl EpisodeRecord {
    pub fn episode_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Structural checks shared by every producer of episode logs.
    pub fn validate(&self, n_steps: u32) -> Result<(), SchemaError> {
        let fail = |m: String| Err(SchemaError::Invariant(m));
        let n = self.length as usize;
        if self.actions.len() != n || self.rewards.len() != n {
            return fail(format!(
                "length {} but {} actions and {} rewards",
                self.length,
                self.actions.len(),
                self.rewards.len()
            ));
        }
        if self.length > n_steps {
            return fail(format!("length {} exceeds step limit {n_steps}", self.length));
        }
        if !self.outcome.is_terminal() {
            return fail("outcome is not terminal".into());
        }
        if self.outcome == Status::FailTimeout && self.length != n_steps {
            return fail(format!("timeout after {} of {n_steps} steps", self.length));
        }
        if self.rewards.iter().any(|r| !r.is_finite()) {
            return fail("non-finite reward".into());
        }
        if let Some(lat) = &self.step_latency_ms {
            if lat.len() != n || lat.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return fail("step_latency_ms must hold one non-negative value per step".into());
            }
        }
        Ok(())
    }
}

/// Parse and validate one JSONL episode line.
pub fn parse_episode_line(line: &str, n_steps: u32) -> Result<EpisodeRecord, SchemaError> {
    let rec: EpisodeRecord = serde_json::from_str(line).map_err(|e| SchemaError::Parse(e.to_string()))?;
    rec.validate(n_steps)?;
    Ok(rec)
}

/// A rollout together with the experiences it produced.
#[derive(Debug, Clone)]
pub struct Episode {
    pub record: EpisodeRecord,
    pub experiences: Vec<Experience>,
    pub final_world: WorldState,
}

/// Generate the scenario and roll it out. See [`run_episode_from`].
pub fn run_episode<P: Policy, R: Rng + ?Sized>(
    spec: ScenarioSpec,
    p_exploit: f64,
    policy: &P,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Episode, TrainError> {
    let world = crate::env::make_scenario(spec.seed, spec.n_obstacles, &cfg.geometry)?;
    run_episode_from(world, spec, p_exploit, policy, cfg, rng)
}

/// Roll out one episode from `world`.
///
/// Every step draws a coin from `rng`; with probability `p_exploit` the policy acts greedily on
/// the rendered observation, otherwise an action is sampled from the potential field at the tool
/// (or uniformly when informed sampling is off).
pub fn run_episode_from<P: Policy, R: Rng + ?Sized>(
    mut world: WorldState,
    spec: ScenarioSpec,
    p_exploit: f64,
    policy: &P,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Episode, TrainError> {
    let geo = &cfg.geometry;
    let mut status = world.status(geo);
    let mut obs = render(&world, geo, cfg.resolution)?;
    let mut frame = Frame::pack(&obs);
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut experiences = Vec::new();
    while !status.is_terminal() {
        let exploit = rng.gen::<f64>() < p_exploit;
        let action = if exploit {
            policy.greedy(&obs)?
        } else if cfg.informed_sampling {
            PotentialField::from_obstacles(&world.obstacles, &cfg.field).sample_action(world.tool_pose, rng)
        } else {
            ActionDistribution::<f64>::uniform().sample(rng)
        };
        let prev = world.clone();
        status = world.step_mut(action, geo)?;
        let reward = reward_total(&prev, &world, status, &cfg.weights, geo.d_a);
        obs = render(&world, geo, cfg.resolution)?;
        let next_frame = Frame::pack(&obs);
        experiences.push(Experience {
            obs: frame,
            action,
            reward,
            next_obs: next_frame.clone(),
            terminal: status.is_terminal(),
            episode_success: false,
        });
        frame = next_frame;
        actions.push(action);
        rewards.push(reward);
    }
    let success = status == Status::Success;
    experiences.iter_mut().for_each(|e| e.episode_success = success);
    let record = EpisodeRecord {
        mode: EpisodeMode::Train,
        episode: None,
        seed: spec.seed,
        n_obstacles: spec.n_obstacles,
        length: actions.len() as u32,
        actions,
        rewards,
        outcome: status,
        step_latency_ms: None,
        perturbations: 0,
    };
    Ok(Episode { record, experiences, final_world: world })
}

/// Pure greedy rollout without experience collection.
pub fn greedy_rollout<P: Policy>(
    mut world: WorldState,
    policy: &P,
    cfg: &TrainConfig,
) -> Result<(Status, Vec<Action>), TrainError> {
    let geo = &cfg.geometry;
    let mut status = world.status(geo);
    let mut actions = Vec::new();
    while !status.is_terminal() {
        let obs = render(&world, geo, cfg.resolution)?;
        let a = policy.greedy(&obs)?;
        status = world.step_mut(a, geo)?;
        actions.push(a);
    }
    Ok((status, actions))
}
