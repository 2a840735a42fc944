//! Shaped rewards computed from consecutive grounding labels.

use serde::{Deserialize, Serialize};

use crate::env::{Status, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { alpha1: 0.1, alpha2: 0.2, alpha3: 1.0 }
    }
}

/// Progress of the tool towards the object, in units of the action step.
pub fn reward_tool(prev: &WorldState, cur: &WorldState, d_a: f64) -> f64 {
    let before = prev.tool_pose.distance(prev.object_pose);
    let after = cur.tool_pose.distance(cur.object_pose);
    (before - after) / d_a
}

/// Progress of the object towards the target. The target may differ between the two states.
pub fn reward_target(prev: &WorldState, cur: &WorldState, d_a: f64) -> f64 {
    let before = prev.object_pose.distance(prev.target_pose);
    let after = cur.object_pose.distance(cur.target_pose);
    (before - after) / d_a
}

/// +1 on success, -1 on any failure, 0 while running.
pub fn reward_terminal(status: Status) -> f64 {
    match status {
        Status::Running => 0.0,
        Status::Success => 1.0,
        Status::FailCollision | Status::FailOutOfSurface | Status::FailTimeout => -1.0,
    }
}

pub fn reward_total(prev: &WorldState, cur: &WorldState, status: Status, w: &RewardWeights, d_a: f64) -> f64 {
    w.alpha1 * reward_tool(prev, cur, d_a) + w.alpha2 * reward_target(prev, cur, d_a) + w.alpha3 * reward_terminal(status)
}
