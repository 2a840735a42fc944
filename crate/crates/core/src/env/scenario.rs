use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvError, GeometryConfig, Point, WorldState};
use crate::geom::{box_gap, boxes_overlap};

/// Minimum free gap between any two bodies at generation time, in cm.
pub const MIN_CLEARANCE: f64 = 2.0;
pub const MAX_SCENARIO_ATTEMPTS: usize = 10_000;

/// Maximum distance from the first obstacle's centre to the object-target segment.
const BLOCKER_RADIUS: f64 = 2.0;
/// Extra margin around obstacles in the reachability grid search.
const SEARCH_INFLATION: f64 = 0.5;

/// Serializable scenario request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub n_obstacles: usize,
}

/// Generate a random feasible scene.
///
/// The tool starts at [`GeometryConfig::tool_start`]. Object and target are drawn uniformly
/// ahead of the tool; the first obstacle sits within 2 cm of the object-target segment and the
/// rest are uniform. Candidates are rejected unless all bodies keep [`MIN_CLEARANCE`] and a
/// 1 cm grid search finds both a tool route to behind the object and a forward-only object route
/// into the target region.
pub fn make_scenario(seed: u64, n_obstacles: usize, cfg: &GeometryConfig) -> Result<WorldState, EnvError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_SCENARIO_ATTEMPTS {
        if let Some((object, target, obstacles)) = propose(&mut rng, n_obstacles, cfg) {
            let tool = cfg.tool_start();
            if tool_can_reach_object(tool, object, &obstacles, cfg) && object_can_reach_target(object, target, &obstacles, cfg)
            {
                return Ok(WorldState::new(tool, object, target, obstacles, seed));
            }
        }
    }
    Err(EnvError::ScenarioGeneration { seed, n_obstacles, attempts: MAX_SCENARIO_ATTEMPTS })
}

fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Option<f64> {
    (hi > lo).then(|| rng.gen_range(lo..hi))
}

fn propose(rng: &mut ChaCha8Rng, n_obstacles: usize, cfg: &GeometryConfig) -> Option<(Point, Point, Vec<Point>)> {
    let tool = cfg.tool_start();
    let tool_half = cfg.tool_half_extents;
    let ahead = tool.y + tool_half.y + MIN_CLEARANCE;
    let (w, h) = (cfg.surface_width, cfg.surface_height);

    let oh = cfg.object_half_extent;
    let object = Point::new(uniform_in(rng, oh, w - oh)?, uniform_in(rng, ahead + oh, h - oh)?);
    let th = cfg.target_half_extent;
    let target = Point::new(uniform_in(rng, th, w - th)?, uniform_in(rng, ahead + th, h - th)?);

    let mut placed: Vec<(Point, Point)> =
        vec![(tool, tool_half), (object, cfg.object_half()), (target, cfg.target_half())];
    if box_gap(object, cfg.object_half(), target, cfg.target_half()) < MIN_CLEARANCE {
        return None;
    }

    let bh = cfg.obstacle_half_extent;
    let mut obstacles = Vec::with_capacity(n_obstacles);
    for i in 0..n_obstacles {
        let p = if i == 0 {
            let along = target - object;
            let len = along.norm();
            if len <= 0.0 {
                return None;
            }
            let t: f64 = rng.gen_range(0.0..1.0);
            let off: f64 = rng.gen_range(-BLOCKER_RADIUS..BLOCKER_RADIUS);
            object + along * t + along.perp() * (off / len)
        } else {
            Point::new(uniform_in(rng, bh, w - bh)?, uniform_in(rng, ahead + bh, h - bh)?)
        };
        if !cfg.contains_box(p, cfg.obstacle_half()) {
            return None;
        }
        if placed.iter().any(|&(q, qh)| box_gap(p, cfg.obstacle_half(), q, qh) < MIN_CLEARANCE) {
            return None;
        }
        placed.push((p, cfg.obstacle_half()));
        obstacles.push(p);
    }
    Some((object, target, obstacles))
}

/// Lattice moves for the five actions, in grid units.
const MOVES: [(i32, i32); 5] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];

/// Breadth-first search on a 1 cm lattice anchored at `start`.
fn lattice_search(
    start: Point,
    cfg: &GeometryConfig,
    free: impl Fn(Point) -> bool,
    goal: impl Fn(Point) -> bool,
) -> bool {
    let nx = cfg.surface_width.ceil() as i32 + 1;
    let ny = cfg.surface_height.ceil() as i32 + 1;
    // Offsets relative to start, bounded by the surface size in each direction.
    let (ox, oy) = (nx, 0);
    let width = (2 * nx + 1) as usize;
    let height = (ny + 1) as usize;
    let mut seen = vec![false; width * height];
    let at = |i: i32, j: i32| Point::new(start.x + i as f64, start.y + j as f64);
    let mut queue = VecDeque::new();
    if !free(start) {
        return false;
    }
    seen[((oy) as usize) * width + ox as usize] = true;
    queue.push_back((0i32, 0i32));
    while let Some((i, j)) = queue.pop_front() {
        let p = at(i, j);
        if goal(p) {
            return true;
        }
        for (di, dj) in MOVES {
            let (ni, nj) = (i + di, j + dj);
            let (gx, gy) = (ni + ox, nj + oy);
            if gx < 0 || gx as usize >= width || gy < 0 || gy as usize >= height {
                continue;
            }
            let idx = gy as usize * width + gx as usize;
            if seen[idx] {
                continue;
            }
            seen[idx] = true;
            if free(at(ni, nj)) {
                queue.push_back((ni, nj));
            }
        }
    }
    false
}

fn clear_of_obstacles(p: Point, half: Point, obstacles: &[Point], cfg: &GeometryConfig) -> bool {
    let inflated = Point::new(
        cfg.obstacle_half_extent + SEARCH_INFLATION,
        cfg.obstacle_half_extent + SEARCH_INFLATION,
    );
    obstacles.iter().all(|&o| !boxes_overlap(p, half, o, inflated))
}

/// Can the tool get directly behind the object without touching anything?
fn tool_can_reach_object(tool: Point, object: Point, obstacles: &[Point], cfg: &GeometryConfig) -> bool {
    let th = cfg.tool_half_extents;
    let oh = cfg.object_half();
    lattice_search(
        tool,
        cfg,
        |p| cfg.contains_box(p, th) && clear_of_obstacles(p, th, obstacles, cfg) && !boxes_overlap(p, th, object, oh),
        |p| {
            let gap = object.y - oh.y - (p.y + th.y);
            (0.0..1.0).contains(&gap) && (p.x - object.x).abs() < oh.x
        },
    )
}

/// Can the object be moved into the success region using forward-only moves?
fn object_can_reach_target(object: Point, target: Point, obstacles: &[Point], cfg: &GeometryConfig) -> bool {
    let oh = cfg.object_half();
    lattice_search(
        object,
        cfg,
        |p| cfg.contains_box(p, oh) && clear_of_obstacles(p, oh, obstacles, cfg),
        |p| p.distance(target) < cfg.eps_suc,
    )
}
