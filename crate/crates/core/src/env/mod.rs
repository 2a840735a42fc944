//! Quasi-static 2D pushing simulator.
//!
//! A rectangular tool translates over a `surface_width x surface_height` work-surface in one of
//! five forward directions. Bodies it overlaps are displaced along the motion direction by the
//! penetration depth; the same rule propagates from body to body. No rotation, no momentum.

mod config;
mod scenario;
mod world;

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;

pub use config::GeometryConfig;
pub use scenario::{make_scenario, ScenarioSpec, MAX_SCENARIO_ATTEMPTS, MIN_CLEARANCE};
pub use world::{termination, WorldState};

/// Work-surface coordinates in centimetres; origin at the lower-left corner, +Y is the tool's front.
pub type Point = Vec2<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid geometry config: {0}")]
    InvalidConfig(String),
    #[error("scenario generation failed after {attempts} attempts (seed {seed}, {n_obstacles} obstacles)")]
    ScenarioGeneration { seed: u64, n_obstacles: usize, attempts: usize },
    #[error("cannot step a terminated world ({0})")]
    Terminated(Status),
    #[error("action index {0} outside 1..=5")]
    InvalidAction(i64),
}

/// One of the five predefined motion directions, indexed 1..=5.
///
/// Action `k` moves along the angle `(k - 1) * pi / 4` from +X: 1 is right, 3 is straight
/// ahead (+Y), 5 is left. None of them has a backward component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct Action(u8);

impl Action {
    pub const COUNT: usize = 5;
    pub const RIGHT: Action = Action(1);
    pub const FRONT_RIGHT: Action = Action(2);
    pub const FRONT: Action = Action(3);
    pub const FRONT_LEFT: Action = Action(4);
    pub const LEFT: Action = Action(5);
    pub const ALL: [Action; 5] = [Action(1), Action(2), Action(3), Action(4), Action(5)];

    pub fn new(index: i64) -> Result<Self, EnvError> {
        if (1..=5).contains(&index) {
            Ok(Action(index as u8))
        } else {
            Err(EnvError::InvalidAction(index))
        }
    }

    /// From a zero-based network output index.
    pub fn from_slot(slot: usize) -> Self {
        assert!(slot < Self::COUNT, "action slot {slot} out of range");
        Action(slot as u8 + 1)
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }

    /// Direction angle measured from +X.
    pub fn angle(self) -> f64 {
        (self.0 - 1) as f64 * std::f64::consts::FRAC_PI_4
    }

    /// Exact unit direction (no `cos(pi/2)` residue).
    pub fn direction(self) -> Point {
        let h = FRAC_1_SQRT_2;
        match self.0 {
            1 => Point::new(1.0, 0.0),
            2 => Point::new(h, h),
            3 => Point::new(0.0, 1.0),
            4 => Point::new(-h, h),
            _ => Point::new(-1.0, 0.0),
        }
    }
}

impl TryFrom<i64> for Action {
    type Error = EnvError;
    fn try_from(v: i64) -> Result<Self, EnvError> {
        Action::new(v)
    }
}

impl From<Action> for u8 {
    fn from(a: Action) -> u8 {
        a.0
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Episode status. Everything except `Running` is terminal and absorbing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Status {
    Running,
    Success,
    FailCollision,
    FailOutOfSurface,
    FailTimeout,
}

impl Status {
    pub fn is_terminal(self) -> bool {
        self != Status::Running
    }

    pub fn is_failure(self) -> bool {
        matches!(self, Status::FailCollision | Status::FailOutOfSurface | Status::FailTimeout)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}
