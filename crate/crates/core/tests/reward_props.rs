use proptest::prelude::*;
use push_core::env::{make_scenario, Action, GeometryConfig};
use push_core::reward::{reward_target, reward_terminal, reward_tool, reward_total, RewardWeights};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    /// Shaping terms telescope to the net change in distance over the whole episode.
    #[test]
    fn shaping_terms_telescope(seed in 0u64..10_000, n in 0usize..3, seq in prop::collection::vec(1i64..=5, 1..150)) {
        let cfg = GeometryConfig::default();
        let w = RewardWeights::default();
        let start = make_scenario(seed, n, &cfg).unwrap();
        let mut cur = start.clone();
        let (mut tool_sum, mut target_sum, mut total, mut terminal) = (0.0, 0.0, 0.0, 0.0);
        for a in seq {
            let (next, status) = cur.step(Action::new(a).unwrap(), &cfg).unwrap();
            tool_sum += reward_tool(&cur, &next, cfg.d_a);
            target_sum += reward_target(&cur, &next, cfg.d_a);
            terminal += reward_terminal(status);
            total += reward_total(&cur, &next, status, &w, cfg.d_a);
            cur = next;
            if status.is_terminal() {
                break;
            }
        }
        let tool_net = (start.tool_pose.distance(start.object_pose) - cur.tool_pose.distance(cur.object_pose)) / cfg.d_a;
        let target_net = (start.object_pose.distance(start.target_pose) - cur.object_pose.distance(cur.target_pose)) / cfg.d_a;
        prop_assert!((tool_sum - tool_net).abs() < 1e-9);
        prop_assert!((target_sum - target_net).abs() < 1e-9);
        prop_assert!(terminal == 0.0 || terminal.abs() == 1.0);
        let expected = w.alpha1 * tool_net + w.alpha2 * target_net + w.alpha3 * terminal;
        prop_assert!((total - expected).abs() < 1e-9);
    }
}
