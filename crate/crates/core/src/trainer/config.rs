use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::env::GeometryConfig;
use crate::explore::FieldParams;
use crate::neural::{AdamConfig, SOFT_UPDATE_RATE};
use crate::observe::SUPPORTED_RESOLUTIONS;
use crate::replay::{BufferPolicy, DEFAULT_CAPACITY};
use crate::reward::RewardWeights;

/// Which parameter set picks greedy actions during training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActingNetwork {
    #[default]
    Target,
    Primary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Last episode of pure exploration.
    pub k1: u64,
    /// First episode of pure exploitation.
    pub k2: u64,
    pub total_episodes: u64,
    pub gamma: f64,
    pub batch_size: usize,
    pub n_obstacles_train: usize,
    pub resolution: usize,
    pub geometry: GeometryConfig,
    pub weights: RewardWeights,
    pub buffer_policy: BufferPolicy,
    pub buffer_capacity: usize,
    pub eval_every: u64,
    pub eval_scenes: usize,
    /// Obstacle count for periodic evaluations; `None` means the training count.
    pub eval_obstacles: Option<usize>,
    pub seed: u64,
    pub adam: AdamConfig,
    pub field: FieldParams,
    /// Sample exploration actions from the potential field instead of uniformly.
    pub informed_sampling: bool,
    pub act_with: ActingNetwork,
    pub soft_update_rate: f64,
    /// Optional global gradient-norm clip.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k1: 200,
            k2: 5_000,
            total_episodes: 10_000,
            gamma: 0.99,
            batch_size: 32,
            n_obstacles_train: 2,
            resolution: 64,
            geometry: GeometryConfig::default(),
            weights: RewardWeights::default(),
            buffer_policy: BufferPolicy::default(),
            buffer_capacity: DEFAULT_CAPACITY,
            eval_every: 1_000,
            eval_scenes: 300,
            eval_obstacles: None,
            seed: 0,
            adam: AdamConfig::default(),
            field: FieldParams::default(),
            informed_sampling: true,
            act_with: ActingNetwork::Target,
            soft_update_rate: SOFT_UPDATE_RATE,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.geometry.validate()?;
        let bad = |msg: String| Err(TrainError::Config(msg));
        if !(self.k1 < self.k2 && self.k2 <= self.total_episodes) {
            return bad(format!(
                "need k1 < k2 <= total_episodes, got {} / {} / {}",
                self.k1, self.k2, self.total_episodes
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !SUPPORTED_RESOLUTIONS.contains(&self.resolution) {
            return bad(format!("resolution {} not in {:?}", self.resolution, SUPPORTED_RESOLUTIONS));
        }
        if self.buffer_capacity == 0 {
            return bad("buffer_capacity must be positive".into());
        }
        if self.eval_every > 0 && self.eval_scenes == 0 {
            return bad("eval_scenes must be positive when evaluations are enabled".into());
        }
        if !(0.0..=1.0).contains(&self.soft_update_rate) {
            return bad(format!("soft_update_rate must lie in [0, 1], got {}", self.soft_update_rate));
        }
        if let Some(c) = self.grad_clip {
            if c.is_nan() || c <= 0.0 {
                return bad(format!("grad_clip must be positive, got {c}"));
            }
        }
        Ok(())
    }

    pub fn eval_obstacle_count(&self) -> usize {
        self.eval_obstacles.unwrap_or(self.n_obstacles_train)
    }
}

/// Probability of acting greedily in episode `k` (1-based): zero up to `k1`, a linear ramp to
/// one at `k2`, then one.
pub fn exploit_probability(k: u64, cfg: &TrainConfig) -> f64 {
    if k <= cfg.k1 {
        0.0
    } else if k <= cfg.k2 {
        (k - cfg.k1) as f64 / (cfg.k2 - cfg.k1) as f64
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        let cfg = TrainConfig::default();
        assert_eq!(exploit_probability(1, &cfg), 0.0);
        assert_eq!(exploit_probability(100, &cfg), 0.0);
        assert_eq!(exploit_probability(200, &cfg), 0.0);
        assert_eq!(exploit_probability(2600, &cfg), 0.5);
        assert_eq!(exploit_probability(5000, &cfg), 1.0);
        assert_eq!(exploit_probability(9000, &cfg), 1.0);
    }

    #[test]
    fn schedule_is_monotone() {
        let cfg = TrainConfig::default();
        let mut prev = 0.0;
        for k in 1..=cfg.total_episodes {
            let p = exploit_probability(k, &cfg);
            assert!(p >= prev && (0.0..=1.0).contains(&p));
            assert!(p - prev <= 1.0 / 4800.0 + 1e-15);
            prev = p;
        }
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { k2: 20_000, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { resolution: 48, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn partial_json_uses_defaults() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"seed": 5, "geometry": {"n_steps": 100}}"#).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.geometry.n_steps, 100);
        assert_eq!(cfg.geometry.surface_width, 50.0);
        assert_eq!(cfg.batch_size, 32);
    }
}
