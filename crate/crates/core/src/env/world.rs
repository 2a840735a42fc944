use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Action, EnvError, GeometryConfig, Point, Status};
use crate::geom::{boxes_overlap, penetration_depth};

const MAX_CONTACT_PASSES: usize = 32;

/// Ground-truth scene state. Positions are box centres in centimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub tool_pose: Point,
    pub object_pose: Point,
    pub target_pose: Point,
    pub obstacles: Vec<Point>,
    pub obstacle_initial: Vec<Point>,
    /// Pushable bodies without failure semantics (added by perturbation tests).
    #[serde(default)]
    pub distractors: Vec<Point>,
    pub step_count: u32,
    pub cumulative_obstacle_displacement: Vec<f64>,
    pub rng_state: ChaCha8Rng,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Body {
    Object,
    Obstacle(usize),
    Distractor(usize),
}

impl WorldState {
    /// A world with the given poses and a slip generator seeded from `seed`.
    pub fn new(tool: Point, object: Point, target: Point, obstacles: Vec<Point>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let n = obstacles.len();
        Self {
            tool_pose: tool,
            object_pose: object,
            target_pose: target,
            obstacle_initial: obstacles.clone(),
            obstacles,
            distractors: Vec::new(),
            step_count: 0,
            cumulative_obstacle_displacement: vec![0.0; n],
            rng_state: rng,
        }
    }

    pub fn status(&self, cfg: &GeometryConfig) -> Status {
        termination(self, cfg)
    }

    /// Advance by one action, returning the successor world and its status.
    pub fn step(&self, action: Action, cfg: &GeometryConfig) -> Result<(WorldState, Status), EnvError> {
        let mut next = self.clone();
        let status = next.step_mut(action, cfg)?;
        Ok((next, status))
    }

    /// In-place variant of [`WorldState::step`].
    pub fn step_mut(&mut self, action: Action, cfg: &GeometryConfig) -> Result<Status, EnvError> {
        let current = termination(self, cfg);
        if current.is_terminal() {
            return Err(EnvError::Terminated(current));
        }
        let dir = action.direction();
        self.tool_pose = self.tool_pose + dir * cfg.d_a;
        self.resolve_contacts(dir, cfg);
        self.refresh_displacements();
        self.step_count += 1;
        Ok(termination(self, cfg))
    }

    /// Recompute displacement of every obstacle from its initial centre.
    pub fn refresh_displacements(&mut self) {
        self.cumulative_obstacle_displacement = self
            .obstacles
            .iter()
            .zip(&self.obstacle_initial)
            .map(|(p, p0)| p.distance(*p0))
            .collect();
    }

    fn bodies(&self) -> Vec<Body> {
        let mut v = Vec::with_capacity(1 + self.obstacles.len() + self.distractors.len());
        v.push(Body::Object);
        v.extend((0..self.obstacles.len()).map(Body::Obstacle));
        v.extend((0..self.distractors.len()).map(Body::Distractor));
        v
    }

    fn pose(&self, b: Body) -> Point {
        match b {
            Body::Object => self.object_pose,
            Body::Obstacle(i) => self.obstacles[i],
            Body::Distractor(i) => self.distractors[i],
        }
    }

    fn pose_mut(&mut self, b: Body) -> &mut Point {
        match b {
            Body::Object => &mut self.object_pose,
            Body::Obstacle(i) => &mut self.obstacles[i],
            Body::Distractor(i) => &mut self.distractors[i],
        }
    }

    fn half(b: Body, cfg: &GeometryConfig) -> Point {
        match b {
            Body::Object => cfg.object_half(),
            Body::Obstacle(_) => cfg.obstacle_half(),
            Body::Distractor(_) => cfg.distractor_half(),
        }
    }

    /// Push overlapped bodies along `dir` until no overlap involving a moved body remains.
    fn resolve_contacts(&mut self, dir: Point, cfg: &GeometryConfig) {
        let bodies = self.bodies();
        let tool_half = cfg.tool_half_extents;
        let mut slipped = false;
        for _ in 0..MAX_CONTACT_PASSES {
            let mut moved = false;
            for &b in &bodies {
                let s = penetration_depth(self.tool_pose, tool_half, self.pose(b), Self::half(b, cfg), dir);
                if s > 0.0 {
                    *self.pose_mut(b) = self.pose(b) + dir * s;
                    if b == Body::Object && !slipped && cfg.slip_sigma > 0.0 {
                        slipped = true;
                        let normal = Normal::new(0.0, cfg.slip_sigma * s).expect("finite slip std");
                        let lateral = normal.sample(&mut self.rng_state);
                        self.object_pose = self.object_pose + dir.perp() * lateral;
                    }
                    moved = true;
                }
            }
            for (i, &a) in bodies.iter().enumerate() {
                for &b in &bodies[i + 1..] {
                    let (pa, pb) = (self.pose(a), self.pose(b));
                    let (ha, hb) = (Self::half(a, cfg), Self::half(b, cfg));
                    if !boxes_overlap(pa, ha, pb, hb) {
                        continue;
                    }
                    // The body further along the motion is the one being pushed.
                    let (pusher, pushee) = if pb.dot(dir) >= pa.dot(dir) { (a, b) } else { (b, a) };
                    let s = penetration_depth(
                        self.pose(pusher),
                        Self::half(pusher, cfg),
                        self.pose(pushee),
                        Self::half(pushee, cfg),
                        dir,
                    );
                    if s > 0.0 && s.is_finite() {
                        *self.pose_mut(pushee) = self.pose(pushee) + dir * s;
                        moved = true;
                    }
                }
            }
            if !moved {
                break;
            }
        }
    }
}

/// Classify a world. Precedence: success, collision, out-of-surface, timeout.
pub fn termination(world: &WorldState, cfg: &GeometryConfig) -> Status {
    if world.object_pose.distance(world.target_pose) < cfg.eps_suc {
        return Status::Success;
    }
    if world.cumulative_obstacle_displacement.iter().any(|&d| d > cfg.eps_fail) {
        return Status::FailCollision;
    }
    if !cfg.contains_box(world.tool_pose, cfg.tool_half_extents)
        || !cfg.contains_box(world.object_pose, cfg.object_half())
    {
        return Status::FailOutOfSurface;
    }
    if world.step_count >= cfg.n_steps {
        return Status::FailTimeout;
    }
    Status::Running
}
