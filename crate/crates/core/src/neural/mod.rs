//! Convolutional Q-network built from scratch: exact forward/backward passes over a fixed layer
//! vocabulary, the temporal-difference loss, Adam, soft target updates and checkpoints.

mod adam;
mod checkpoint;
mod network;
mod tensor;

use num_traits::Num;
use rand::Rng;
use thiserror::Error;

use crate::replay::Experience;
use crate::scalar::Scalar;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointError, CheckpointMeta, CheckpointWarning, LoadedCheckpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use network::{argmax, Architecture, LayerSpec, Params, QNetwork, Shape, Trace, ARCH_FORMAT};
pub use tensor::Tensor;

/// Target-network mixing rate per primary update.
pub const SOFT_UPDATE_RATE: f64 = 0.001;

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
}

/// Primary and target parameter sets over one architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkPair<T> {
    pub primary: QNetwork<T>,
    pub target: QNetwork<T>,
}

/// Transitions decoded into network inputs.
#[derive(Debug, Clone)]
pub struct TdBatch<T> {
    pub inputs: Vec<Vec<T>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<T>,
    pub next_inputs: Vec<Vec<T>>,
    pub terminal: Vec<bool>,
}

impl<T: Scalar> TdBatch<T> {
    pub fn from_experiences(batch: &[&Experience]) -> Self {
        let decode = |f: &crate::observe::Frame| {
            let mut v = vec![T::zero(); 3 * f.width() * f.height()];
            f.write_normalized(&mut v);
            v
        };
        Self {
            inputs: batch.iter().map(|e| decode(&e.obs)).collect(),
            actions: batch.iter().map(|e| e.action.slot()).collect(),
            rewards: batch.iter().map(|e| T::lit(e.reward)).collect(),
            next_inputs: batch.iter().map(|e| decode(&e.next_obs)).collect(),
            terminal: batch.iter().map(|e| e.terminal).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Loss value together with gradients over the primary parameters.
#[derive(Debug, Clone)]
pub struct LossAndGrads<T> {
    pub loss: T,
    pub grads: Params<T>,
}

impl<T: Scalar> NetworkPair<T> {
    /// Fresh primary network with an identical copy as target.
    pub fn new<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self, NeuralError> {
        let primary = QNetwork::new(arch, rng)?;
        Ok(Self { target: primary.clone(), primary })
    }

    /// Mean squared TD error `(r + gamma * max_a' Q_target(x', a') - Q_primary(x, a))^2`.
    ///
    /// Terminal transitions use `r` alone as the target. Gradients flow only through the primary
    /// network's `Q(x, a)`.
    pub fn td_loss_and_grads(&self, batch: &TdBatch<T>, gamma: T) -> Result<LossAndGrads<T>, NeuralError> {
        if batch.is_empty() {
            return Err(NeuralError::EmptyBatch);
        }
        let n = T::lit(batch.len() as f64);
        let mut grads = self.primary.params.zeros_like();
        let mut loss = T::zero();
        for i in 0..batch.len() {
            let mut target = batch.rewards[i];
            if !batch.terminal[i] {
                let next_q = self.target.forward_one(&batch.next_inputs[i])?;
                let best = next_q.iter().copied().fold(T::neg_infinity(), T::max);
                target += gamma * best;
            }
            let trace = self.primary.trace(&batch.inputs[i])?;
            let q = trace.output();
            let a = batch.actions[i];
            if a >= q.len() {
                return Err(NeuralError::ShapeMismatch(format!("action slot {a} but {} outputs", q.len())));
            }
            let td = q[a] - target;
            loss += td * td / n;
            let mut grad_out = vec![T::zero(); q.len()];
            grad_out[a] = T::lit(2.0) * td / n;
            self.primary.backward(&trace, &grad_out, &mut grads)?;
        }
        Ok(LossAndGrads { loss, grads })
    }

    /// `target <- (1 - rho) * target + rho * primary`.
    pub fn soft_update(&mut self, rho: T) -> Result<(), NeuralError> {
        if !self.primary.params.same_shapes(&self.target.params) {
            return Err(NeuralError::ShapeMismatch("primary and target parameter shapes differ".into()));
        }
        for (t, p) in self.target.params.tensors.iter_mut().zip(&self.primary.params.tensors) {
            soft_update_slice(t.data_mut(), p.data(), rho);
        }
        Ok(())
    }
}

/// Loss and gradients for a minibatch of stored experiences.
pub fn dqn_loss_and_grads<T: Scalar>(
    pair: &NetworkPair<T>,
    batch: &[&Experience],
    gamma: T,
) -> Result<LossAndGrads<T>, NeuralError> {
    pair.td_loss_and_grads(&TdBatch::from_experiences(batch), gamma)
}

/// Elementwise convex combination over any ring scalar, including exact rationals.
pub fn soft_update_slice<T: Clone + Num>(target: &mut [T], primary: &[T], rho: T) {
    let keep = T::one() - rho.clone();
    for (t, p) in target.iter_mut().zip(primary) {
        *t = keep.clone() * t.clone() + rho.clone() * p.clone();
    }
}

/// Rescale gradients so their global L2 norm does not exceed `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm<T: Scalar>(grads: &mut Params<T>, max_norm: T) -> T {
    let norm = grads.norm();
    if norm > max_norm && norm > T::zero() {
        grads.scale(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_arch() -> Architecture {
        Architecture {
            input: [3, 4, 4],
            layers: vec![
                LayerSpec::Conv { out_channels: 2 },
                LayerSpec::Relu,
                LayerSpec::MaxPool,
                LayerSpec::Flatten,
                LayerSpec::Dense { out_features: 5 },
            ],
        }
    }

    fn batch_of(rng: &mut ChaCha8Rng, n: usize, terminal: bool, reward: f64) -> TdBatch<f64> {
        let len = 3 * 4 * 4;
        let mut sample = || (0..len).map(|_| rng.gen_range(0.0..1.0)).collect::<Vec<f64>>();
        TdBatch {
            inputs: (0..n).map(|_| sample()).collect(),
            actions: (0..n).map(|i| i % 5).collect(),
            rewards: vec![reward; n],
            next_inputs: (0..n).map(|_| sample()).collect(),
            terminal: vec![terminal; n],
        }
    }

    #[test]
    fn terminal_sample_with_zero_q_has_unit_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut pair = NetworkPair::<f64>::new(small_arch(), &mut rng).unwrap();
        pair.primary.params.iter_mut().for_each(|v| *v = 0.0);
        let batch = batch_of(&mut rng, 1, true, 1.0);
        let out = pair.td_loss_and_grads(&batch, 0.99).unwrap();
        assert_eq!(out.loss, 1.0);
    }

    #[test]
    fn fixed_point_has_zero_loss_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pair = NetworkPair::<f64>::new(small_arch(), &mut rng).unwrap();
        let mut batch = batch_of(&mut rng, 3, false, 0.0);
        for i in 0..3 {
            let q = pair.primary.forward_one(&batch.inputs[i]).unwrap()[batch.actions[i]];
            let next = pair.target.forward_one(&batch.next_inputs[i]).unwrap();
            let best = next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            batch.rewards[i] = q - 0.99 * best;
        }
        let out = pair.td_loss_and_grads(&batch, 0.99).unwrap();
        assert!(out.loss < 1e-28);
        assert!(out.grads.iter().all(|g| g.abs() < 1e-14));
    }

    #[test]
    fn empty_batch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pair = NetworkPair::<f64>::new(small_arch(), &mut rng).unwrap();
        let batch = batch_of(&mut rng, 0, false, 0.0);
        assert_eq!(pair.td_loss_and_grads(&batch, 0.99).unwrap_err(), NeuralError::EmptyBatch);
    }

    #[test]
    fn soft_update_coefficients() {
        let mut t = vec![0.0f64, 2.0];
        soft_update_slice(&mut t, &[1.0, 2.0], 0.001);
        assert!((t[0] - 0.001).abs() < 1e-18);
        assert_eq!(t[1], 2.0);
    }

    #[test]
    fn soft_update_keeps_equal_networks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pair = NetworkPair::<f32>::new(small_arch(), &mut rng).unwrap();
        let before = pair.target.clone();
        pair.soft_update(SOFT_UPDATE_RATE as f32).unwrap();
        for (a, b) in pair.target.params.iter().zip(before.params.iter()) {
            assert!((a - b).abs() <= f32::EPSILON * b.abs());
        }
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = Params { tensors: vec![Tensor::from_vec(vec![2], vec![30.0f64, 40.0])] };
        let n = clip_global_norm(&mut g, 10.0);
        assert_eq!(n, 50.0);
        assert!((g.norm() - 10.0).abs() < 1e-12);
    }
}
