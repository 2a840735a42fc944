//! Replay buffer with success-ratio controlled storage and the matching update schedule.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Action;
use crate::observe::Frame;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("buffer holds {available} experiences, {requested} requested")]
    Underfilled { requested: usize, available: usize },
    #[error("episode mixes success and failure experiences")]
    MixedEpisode,
}

/// One stored transition. Terminal transitions carry the terminal reward inside `reward`.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub obs: Frame,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Frame,
    pub terminal: bool,
    pub episode_success: bool,
}

/// Storage and update-count policy keyed on the buffer's success ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BufferPolicy {
    pub low_ratio: f64,
    pub high_ratio: f64,
    pub p_store_favored: f64,
    pub p_store_disfavored: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub p_rare_update: f64,
    pub n_multi_update: u32,
    pub min_fill: usize,
    /// When false every experience is stored, as in plain experience replay.
    pub control: bool,
}

impl Default for BufferPolicy {
    fn default() -> Self {
        Self {
            low_ratio: 0.3,
            high_ratio: 0.7,
            p_store_favored: 1.0,
            p_store_disfavored: 0.3,
            eps1: 0.4,
            eps2: 0.1,
            p_rare_update: 0.1,
            n_multi_update: 4,
            min_fill: 2_000,
            control: true,
        }
    }
}

impl BufferPolicy {
    pub fn uncontrolled() -> Self {
        Self { control: false, ..Self::default() }
    }

    /// Storage probabilities `(success, failure)` for a given buffer ratio.
    pub fn store_probabilities(&self, ratio: f64) -> (f64, f64) {
        if !self.control {
            (1.0, 1.0)
        } else if ratio < self.low_ratio {
            (self.p_store_favored, self.p_store_disfavored)
        } else if ratio > self.high_ratio {
            (self.p_store_disfavored, self.p_store_favored)
        } else {
            (1.0, 1.0)
        }
    }
}

pub const DEFAULT_CAPACITY: usize = 200_000;

/// FIFO buffer; the oldest experience is evicted on overflow.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<Experience>,
    success_count: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, entries: VecDeque::with_capacity(capacity.min(1 << 16)), success_count: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn success_count(&self) -> usize {
        self.success_count
    }

    /// Fraction of stored experiences from successful episodes; zero when empty.
    pub fn success_ratio(&self) -> f64 {
        if self.entries.is_empty() {
            0.0
        } else {
            self.success_count as f64 / self.entries.len() as f64
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.entries.iter()
    }

    pub fn push(&mut self, e: Experience) {
        if self.entries.len() == self.capacity {
            if let Some(old) = self.entries.pop_front() {
                if old.episode_success {
                    self.success_count -= 1;
                }
            }
        }
        if e.episode_success {
            self.success_count += 1;
        }
        self.entries.push_back(e);
    }

    /// Store an episode under the policy, reading the ratio once up front. Returns how many
    /// experiences were kept.
    pub fn push_episode<R: Rng + ?Sized>(
        &mut self,
        episode: Vec<Experience>,
        policy: &BufferPolicy,
        rng: &mut R,
    ) -> Result<usize, ReplayError> {
        let Some(first) = episode.first() else {
            return Ok(0);
        };
        let success = first.episode_success;
        if episode.iter().any(|e| e.episode_success != success) {
            return Err(ReplayError::MixedEpisode);
        }
        let (p_success, p_failure) = policy.store_probabilities(self.success_ratio());
        let p = if success { p_success } else { p_failure };
        let mut stored = 0;
        for e in episode {
            if p >= 1.0 || rng.gen::<f64>() < p {
                self.push(e);
                stored += 1;
            }
        }
        Ok(stored)
    }

    /// `n` uniform draws with replacement.
    pub fn sample_batch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Experience>, ReplayError> {
        if self.entries.len() < n || self.entries.is_empty() {
            return Err(ReplayError::Underfilled { requested: n, available: self.entries.len() });
        }
        Ok((0..n).map(|_| &self.entries[rng.gen_range(0..self.entries.len())]).collect())
    }
}

/// Number of gradient updates to run after an episode, from the buffer's success ratio.
///
/// Far from balance (`|ratio - 0.5| >= eps1`) an update happens only with a small probability;
/// moderately off balance exactly one; near balance (`< eps2`) several.
pub fn update_count<R: Rng + ?Sized>(ratio: f64, policy: &BufferPolicy, rng: &mut R) -> u32 {
    let deviation = (ratio - 0.5).abs();
    if deviation >= policy.eps1 {
        u32::from(rng.gen::<f64>() < policy.p_rare_update)
    } else if deviation >= policy.eps2 {
        1
    } else {
        policy.n_multi_update
    }
}
