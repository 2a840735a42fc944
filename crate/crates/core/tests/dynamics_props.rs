use proptest::prelude::*;
use push_core::env::{make_scenario, Action, GeometryConfig, Point, Status, WorldState};
use push_core::geom::boxes_overlap;

fn actions(allowed: &'static [u8]) -> impl Strategy<Value = Vec<Action>> {
    prop::collection::vec(prop::sample::select(allowed).prop_map(|i| Action::new(i as i64).unwrap()), 1..150)
}

fn rollout(world: &mut WorldState, seq: &[Action], cfg: &GeometryConfig, mut each: impl FnMut(&WorldState, &WorldState)) {
    for &a in seq {
        if world.status(cfg).is_terminal() {
            break;
        }
        let prev = world.clone();
        world.step_mut(a, cfg).unwrap();
        each(&prev, world);
    }
}

/// Contact pushes leave bodies touching; shrinking by a nanometre-scale margin absorbs rounding.
fn no_overlaps(w: &WorldState, cfg: &GeometryConfig) -> Result<(), String> {
    let m = Point::new(1e-9, 1e-9);
    let tool = (w.tool_pose, cfg.tool_half_extents - m);
    let mut bodies = vec![(w.object_pose, cfg.object_half() - m)];
    bodies.extend(w.obstacles.iter().map(|&p| (p, cfg.obstacle_half() - m)));
    bodies.extend(w.distractors.iter().map(|&p| (p, cfg.distractor_half() - m)));
    for (i, &(p, h)) in bodies.iter().enumerate() {
        if boxes_overlap(tool.0, tool.1, p, h) {
            return Err(format!("tool overlaps body {i}"));
        }
        for &(q, g) in &bodies[i + 1..] {
            if boxes_overlap(p, h, q, g) {
                return Err(format!("body {i} overlaps another body"));
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn contacts_are_resolved_and_tool_never_retreats(seed in 0u64..5000, n in 0usize..4, seq in actions(&[1, 2, 3, 4, 5])) {
        let cfg = GeometryConfig::default();
        let mut w = make_scenario(seed, n, &cfg).unwrap();
        let mut err = None;
        rollout(&mut w, &seq, &cfg, |prev, cur| {
            if cur.tool_pose.y < prev.tool_pose.y {
                err = Some("tool moved backwards".to_string());
            }
            if cur.step_count != prev.step_count + 1 || cur.step_count > cfg.n_steps {
                err = Some("step count".to_string());
            }
            if let Err(e) = no_overlaps(cur, &cfg) {
                err = Some(e);
            }
            for (i, (p, p0)) in cur.obstacles.iter().zip(&cur.obstacle_initial).enumerate() {
                if cur.cumulative_obstacle_displacement[i] != p.distance(*p0) {
                    err = Some("displacement label out of sync".to_string());
                }
            }
        });
        prop_assert!(err.is_none(), "{:?}", err);
    }

    /// Forward-biased pushes (actions 2-4) always move obstacles further from where they started.
    #[test]
    fn forward_pushes_never_shrink_displacement(seed in 0u64..5000, n in 1usize..4, seq in actions(&[2, 3, 4])) {
        let cfg = GeometryConfig { eps_fail: 1e9, ..GeometryConfig::default() };
        let mut w = make_scenario(seed, n, &cfg).unwrap();
        let mut ok = true;
        rollout(&mut w, &seq, &cfg, |prev, cur| {
            for (a, b) in prev.cumulative_obstacle_displacement.iter().zip(&cur.cumulative_obstacle_displacement) {
                ok &= b >= a;
            }
        });
        prop_assert!(ok);
    }

    #[test]
    fn replay_reproduces_final_state(seed in 0u64..5000, n in 0usize..3, seq in actions(&[1, 2, 3, 4, 5])) {
        let cfg = GeometryConfig::default();
        let mut a = make_scenario(seed, n, &cfg).unwrap();
        let mut b = make_scenario(seed, n, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        rollout(&mut a, &seq, &cfg, |_, _| {});
        rollout(&mut b, &seq, &cfg, |_, _| {});
        prop_assert_eq!(a, b);
    }

    #[test]
    fn slip_runs_are_seed_deterministic(seed in 0u64..5000, seq in actions(&[2, 3, 4])) {
        let cfg = GeometryConfig { slip_sigma: 0.3, ..GeometryConfig::default() };
        let mut a = make_scenario(seed, 1, &cfg).unwrap();
        let mut b = a.clone();
        rollout(&mut a, &seq, &cfg, |_, _| {});
        rollout(&mut b, &seq, &cfg, |_, _| {});
        prop_assert_eq!(a, b);
    }

    #[test]
    fn terminal_states_absorb(seed in 0u64..5000, seq in actions(&[1, 5])) {
        let cfg = GeometryConfig::default();
        let mut w = make_scenario(seed, 2, &cfg).unwrap();
        rollout(&mut w, &seq, &cfg, |_, _| {});
        let status = w.status(&cfg);
        if status != Status::Running {
            prop_assert!(w.step(Action::FRONT, &cfg).is_err());
        }
    }
}

#[test]
fn scenarios_keep_a_blocker_on_the_path() {
    let cfg = GeometryConfig::default();
    for seed in 0..300 {
        let w = make_scenario(seed, 2, &cfg).unwrap();
        let (a, b) = (w.object_pose, w.target_pose);
        let ab = b - a;
        let t = ((w.obstacles[0] - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
        let closest = a + ab * t;
        assert!(closest.distance(w.obstacles[0]) <= 2.0 + 1e-12, "seed {seed}");
        assert!(w.object_pose.y > w.tool_pose.y && w.target_pose.y > w.tool_pose.y);
    }
}

