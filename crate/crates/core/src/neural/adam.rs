use serde::{Deserialize, Serialize};

use super::network::Params;
use super::NeuralError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { eta: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-parameter moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step_count: u64,
    pub m: Params<T>,
    pub v: Params<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &Params<T>, config: AdamConfig) -> Self {
        Self { config, step_count: 0, m: params.zeros_like(), v: params.zeros_like() }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Scalar>(params: &mut Params<T>, grads: &Params<T>, state: &mut AdamState<T>) -> Result<(), NeuralError> {
    if !params.same_shapes(grads) || !params.same_shapes(&state.m) || !params.same_shapes(&state.v) {
        return Err(NeuralError::ShapeMismatch("adam: parameter, gradient and moment shapes differ".into()));
    }
    state.step_count += 1;
    let c = state.config;
    let t = state.step_count as i32;
    let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
    let (one_b1, one_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
    let corr1 = T::lit(1.0 - c.beta1.powi(t));
    let corr2 = T::lit(1.0 - c.beta2.powi(t));
    let (eta, eps) = (T::lit(c.eta), T::lit(c.eps));
    for (((p, g), m), v) in params
        .tensors
        .iter_mut()
        .zip(&grads.tensors)
        .zip(state.m.tensors.iter_mut())
        .zip(state.v.tensors.iter_mut())
    {
        for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *p -= eta * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Tensor;

    fn scalar_params(v: f64) -> Params<f64> {
        Params { tensors: vec![Tensor::from_vec(vec![1], vec![v])] }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar_params(0.5);
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &scalar_params(1.0), &mut s).unwrap();
        let expected = 0.5 - 1e-4 / (1.0 + 1e-8);
        assert!((p.get(0) - expected).abs() < 1e-15);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = scalar_params(0.5);
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &scalar_params(0.0), &mut s).unwrap();
        assert_eq!(p.get(0), 0.5);
    }

    #[test]
    fn identical_states_give_identical_results() {
        let run = || {
            let mut p = scalar_params(0.1);
            let mut s = AdamState::new(&p, AdamConfig::default());
            for i in 0..5 {
                adam_step(&mut p, &scalar_params(i as f64 - 2.0), &mut s).unwrap();
            }
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = scalar_params(0.1);
        let mut s = AdamState::new(&p, AdamConfig::default());
        let g = Params { tensors: vec![Tensor::from_vec(vec![2], vec![0.0, 0.0])] };
        assert!(adam_step(&mut p, &g, &mut s).is_err());
    }
}
