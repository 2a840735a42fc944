use push_core::neural::{Architecture, LayerSpec, NetworkPair, QNetwork, TdBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_arch() -> Architecture {
    use LayerSpec::*;
    Architecture {
        input: [3, 8, 8],
        layers: vec![
            Conv { out_channels: 4 },
            Relu,
            MaxPool,
            Conv { out_channels: 4 },
            Relu,
            MaxPool,
            Flatten,
            Dense { out_features: 12 },
            Relu,
            Dense { out_features: 5 },
        ],
    }
}

fn batch(rng: &mut ChaCha8Rng, n: usize) -> TdBatch<f64> {
    let sample = |rng: &mut ChaCha8Rng| (0..192).map(|_| rng.gen_range(0.0..1.0)).collect::<Vec<f64>>();
    TdBatch {
        inputs: (0..n).map(|_| sample(rng)).collect(),
        actions: (0..n).map(|_| rng.gen_range(0..5)).collect(),
        rewards: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        next_inputs: (0..n).map(|_| sample(rng)).collect(),
        terminal: (0..n).map(|i| i % 3 == 0).collect(),
    }
}

#[test]
fn td_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pair = NetworkPair::<f64>::new(small_arch(), &mut rng).unwrap();
    pair.target = QNetwork::new(small_arch(), &mut rng).unwrap();
    let b = batch(&mut rng, 6);
    let gamma = 0.99;
    let analytic = pair.td_loss_and_grads(&b, gamma).unwrap().grads;

    let loss_at = |pair: &NetworkPair<f64>, i: usize, v: f64| {
        let mut p = pair.clone();
        *p.primary.params.get_mut(i) = v;
        p.td_loss_and_grads(&b, gamma).unwrap().loss
    };
    let h = 1e-4;
    let (mut checked, mut kinks) = (0, 0);
    for i in 0..pair.primary.params.len() {
        let w = pair.primary.params.get(i);
        let (up, mid, down) = (loss_at(&pair, i, w + h), loss_at(&pair, i, w), loss_at(&pair, i, w - h));
        let fd = (up - down) / (2.0 * h);
        // One-sided slopes disagreeing far beyond the curvature term marks a ReLU or pooling switch.
        let (right, left) = ((up - mid) / h, (mid - down) / h);
        let curvature = (right - left).abs();
        let a = analytic.get(i);
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-7);
        if rel >= 1e-4 && curvature > 1e-3 * a.abs().max(1e-6) {
            kinks += 1;
            continue;
        }
        assert!(rel < 1e-4, "param {i}: analytic {a} vs fd {fd}");
        checked += 1;
    }
    assert!(checked > 10 * kinks.max(1), "checked {checked}, skipped {kinks}");
}

#[test]
fn target_network_receives_no_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pair = NetworkPair::<f64>::new(small_arch(), &mut rng).unwrap();
    pair.target = QNetwork::new(small_arch(), &mut rng).unwrap();
    let b = batch(&mut rng, 4);
    let before = pair.target.clone();
    let lg = pair.td_loss_and_grads(&b, 0.9).unwrap();
    assert_eq!(pair.target, before);
    assert!(lg.grads.norm() > 0.0);
}
