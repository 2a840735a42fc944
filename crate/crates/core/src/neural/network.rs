use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::NeuralError;
use crate::scalar::Scalar;

/// One layer of the fixed layer vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// 3x3 kernel, stride 1, zero padding 1.
    Conv { out_channels: usize },
    Relu,
    /// 2x2 window, stride 2.
    MaxPool,
    Flatten,
    Dense { out_features: usize },
}

/// Activation shape between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Map { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    pub fn len(self) -> usize {
        match self {
            Shape::Map { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

pub const ARCH_FORMAT: &str = "v1";

/// Layer list plus input geometry; fixes every activation and parameter shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// `[channels, height, width]`.
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Six 3x3 convolutions (8, 8, 16, 16, 32, 32 channels), max-pooling after the 1st, 2nd,
    /// 4th and 6th, then a 256-unit hidden layer and one output per action.
    pub fn desk(resolution: usize) -> Self {
        use LayerSpec::*;
        let conv = |c| Conv { out_channels: c };
        Self {
            input: [3, resolution, resolution],
            layers: vec![
                conv(8),
                Relu,
                MaxPool,
                conv(8),
                Relu,
                MaxPool,
                conv(16),
                Relu,
                conv(16),
                Relu,
                MaxPool,
                conv(32),
                Relu,
                conv(32),
                Relu,
                MaxPool,
                Flatten,
                Dense { out_features: 256 },
                Relu,
                Dense { out_features: 5 },
            ],
        }
    }

    /// Output shape of every layer, checking the chain is consistent.
    pub fn shapes(&self) -> Result<Vec<Shape>, NeuralError> {
        let [c, h, w] = self.input;
        let mut cur = Shape::Map { c, h, w };
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match (*layer, cur) {
                (LayerSpec::Conv { out_channels }, Shape::Map { h, w, .. }) => Shape::Map { c: out_channels, h, w },
                (LayerSpec::Relu, s) => s,
                (LayerSpec::MaxPool, Shape::Map { c, h, w }) if h >= 2 && w >= 2 => {
                    Shape::Map { c, h: h / 2, w: w / 2 }
                }
                (LayerSpec::Flatten, s) => Shape::Flat(s.len()),
                (LayerSpec::Dense { out_features }, Shape::Flat(_)) => Shape::Flat(out_features),
                (l, s) => {
                    return Err(NeuralError::Architecture(format!("layer {i} ({l:?}) cannot take input {s:?}")));
                }
            };
            out.push(cur);
        }
        Ok(out)
    }

    pub fn output_len(&self) -> Result<usize, NeuralError> {
        Ok(self.shapes()?.last().map(|s| s.len()).unwrap_or(self.input.iter().product()))
    }

    /// Weight and bias shapes in declaration order.
    pub fn param_shapes(&self) -> Result<Vec<Vec<usize>>, NeuralError> {
        let shapes = self.shapes()?;
        let mut prev = {
            let [c, h, w] = self.input;
            Shape::Map { c, h, w }
        };
        let mut out = Vec::new();
        for (layer, &shape) in self.layers.iter().zip(&shapes) {
            match (*layer, prev) {
                (LayerSpec::Conv { out_channels }, Shape::Map { c, .. }) => {
                    out.push(vec![out_channels, c, 3, 3]);
                    out.push(vec![out_channels]);
                }
                (LayerSpec::Dense { out_features }, Shape::Flat(n)) => {
                    out.push(vec![out_features, n]);
                    out.push(vec![out_features]);
                }
                _ => {}
            }
            prev = shape;
        }
        Ok(out)
    }

    pub fn param_count(&self) -> Result<usize, NeuralError> {
        Ok(self.param_shapes()?.iter().map(|s| s.iter().product::<usize>()).sum())
    }

    /// Compact version token, e.g. `v1:c8-r-p-...-d5@3x64x64`.
    pub fn arch_id(&self) -> String {
        let body: Vec<String> = self
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::Conv { out_channels } => format!("c{out_channels}"),
                LayerSpec::Relu => "r".into(),
                LayerSpec::MaxPool => "p".into(),
                LayerSpec::Flatten => "f".into(),
                LayerSpec::Dense { out_features } => format!("d{out_features}"),
            })
            .collect();
        let [c, h, w] = self.input;
        format!("{ARCH_FORMAT}:{}@{c}x{h}x{w}", body.join("-"))
    }

    /// Uniform Glorot initialisation of weights, zero biases.
    pub fn init_params<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Params<T>, NeuralError> {
        let shapes = self.param_shapes()?;
        let tensors = shapes
            .into_iter()
            .map(|shape| {
                if shape.len() == 1 {
                    return Tensor::zeros(shape);
                }
                let receptive: usize = shape[2..].iter().product();
                let fan_in = shape[1] * receptive;
                let fan_out = shape[0] * receptive;
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let n = shape.iter().product();
                let data = (0..n).map(|_| T::lit(rng.gen_range(-limit..limit))).collect();
                Tensor::from_vec(shape, data)
            })
            .collect();
        Ok(Params { tensors })
    }
}

/// Ordered parameter tensors (weight, bias per parametric layer). Also used for gradients
/// and optimizer moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros_like(&self) -> Self {
        Self { tensors: self.tensors.iter().map(Tensor::zeros_like).collect() }
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shapes(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.shape() == b.shape())
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.tensors.iter().flat_map(|t| t.data().iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.tensors.iter_mut().flat_map(|t| t.data_mut().iter_mut())
    }

    /// Flat element access across all tensors.
    pub fn get(&self, mut i: usize) -> T {
        for t in &self.tensors {
            if i < t.len() {
                return t.data()[i];
            }
            i -= t.len();
        }
        panic!("parameter index out of range")
    }

    pub fn get_mut(&mut self, mut i: usize) -> &mut T {
        for t in &mut self.tensors {
            if i < t.len() {
                return &mut t.data_mut()[i];
            }
            i -= t.len();
        }
        panic!("parameter index out of range")
    }

    pub fn scale(&mut self, k: T) {
        self.iter_mut().for_each(|v| *v *= k);
    }

    pub fn norm(&self) -> T {
        self.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params { tensors: self.tensors.iter().map(Tensor::cast).collect() }
    }
}

/// Activations recorded during a forward pass, needed for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    /// `values[0]` is the input; `values[i + 1]` is the output of layer `i`.
    pub values: Vec<Vec<T>>,
    /// Argmax input index per pooled output, for pooling layers.
    pub pool_argmax: Vec<Vec<u32>>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.values.last().expect("trace has at least the input")
    }
}

/// Convolutional Q-network: architecture plus one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork<T> {
    pub arch: Architecture,
    pub params: Params<T>,
}

impl<T: Scalar> QNetwork<T> {
    pub fn new<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self, NeuralError> {
        let params = arch.init_params(rng)?;
        Ok(Self { arch, params })
    }

    pub fn from_params(arch: Architecture, params: Params<T>) -> Result<Self, NeuralError> {
        let expected = arch.param_shapes()?;
        let actual: Vec<Vec<usize>> = params.tensors.iter().map(|t| t.shape().to_vec()).collect();
        if expected != actual {
            return Err(NeuralError::ShapeMismatch(format!("expected {expected:?}, got {actual:?}")));
        }
        Ok(Self { arch, params })
    }

    pub fn arch_id(&self) -> String {
        self.arch.arch_id()
    }

    fn input_len(&self) -> usize {
        self.arch.input.iter().product()
    }

    fn check_input(&self, input: &[T]) -> Result<(), NeuralError> {
        if input.len() != self.input_len() {
            return Err(NeuralError::ShapeMismatch(format!(
                "input has {} values, network expects {:?}",
                input.len(),
                self.arch.input
            )));
        }
        Ok(())
    }

    /// Forward pass for one sample.
    pub fn forward_one(&self, input: &[T]) -> Result<Vec<T>, NeuralError> {
        Ok(self.trace(input)?.values.pop().unwrap_or_default())
    }

    /// Forward pass for a batch `[B, C, H, W]`, returning `[B, outputs]`.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>, NeuralError> {
        let shape = batch.shape();
        if shape.len() != 4 || shape[1..] != self.arch.input {
            return Err(NeuralError::ShapeMismatch(format!(
                "batch shape {shape:?} does not match input {:?}",
                self.arch.input
            )));
        }
        let n_out = self.arch.output_len()?;
        let mut out = Vec::with_capacity(shape[0] * n_out);
        for b in 0..shape[0] {
            out.extend(self.forward_one(batch.row(b))?);
        }
        Ok(Tensor::from_vec(vec![shape[0], n_out], out))
    }

    /// Forward pass keeping every intermediate activation.
    pub fn trace(&self, input: &[T]) -> Result<Trace<T>, NeuralError> {
        self.check_input(input)?;
        let shapes = self.arch.shapes()?;
        let [c, h, w] = self.arch.input;
        let mut prev = Shape::Map { c, h, w };
        let mut values = Vec::with_capacity(self.arch.layers.len() + 1);
        let mut pool_argmax = vec![Vec::new(); self.arch.layers.len()];
        values.push(input.to_vec());
        let mut p = 0;
        for (i, (layer, &shape)) in self.arch.layers.iter().zip(&shapes).enumerate() {
            let x = values.last().expect("input pushed");
            let y = match (*layer, prev) {
                (LayerSpec::Conv { out_channels }, Shape::Map { c, h, w }) => {
                    let y = conv3x3_forward(
                        x,
                        self.params.tensors[p].data(),
                        self.params.tensors[p + 1].data(),
                        c,
                        out_channels,
                        h,
                        w,
                    );
                    p += 2;
                    y
                }
                (LayerSpec::Dense { out_features }, Shape::Flat(n)) => {
                    let y = dense_forward(x, self.params.tensors[p].data(), self.params.tensors[p + 1].data(), n, out_features);
                    p += 2;
                    y
                }
                (LayerSpec::Relu, _) => x.iter().map(|&v| v.max(T::zero())).collect(),
                (LayerSpec::MaxPool, Shape::Map { c, h, w }) => {
                    let (y, idx) = maxpool_forward(x, c, h, w);
                    pool_argmax[i] = idx;
                    y
                }
                (LayerSpec::Flatten, _) => x.clone(),
                _ => unreachable!("shape chain validated"),
            };
            values.push(y);
            prev = shape;
        }
        Ok(Trace { values, pool_argmax })
    }

    /// Accumulate parameter gradients of `dot(grad_out, output)` into `grads`.
    pub fn backward(&self, trace: &Trace<T>, grad_out: &[T], grads: &mut Params<T>) -> Result<(), NeuralError> {
        let shapes = self.arch.shapes()?;
        let [c, h, w] = self.arch.input;
        let mut inputs_shape = Vec::with_capacity(shapes.len());
        inputs_shape.push(Shape::Map { c, h, w });
        inputs_shape.extend(shapes.iter().take(shapes.len().saturating_sub(1)).copied());

        let mut p = self.params.tensors.len();
        let mut grad = grad_out.to_vec();
        for (i, layer) in self.arch.layers.iter().enumerate().rev() {
            let x = &trace.values[i];
            let y = &trace.values[i + 1];
            let need_input_grad = i > 0;
            grad = match (*layer, inputs_shape[i]) {
                (LayerSpec::Conv { out_channels }, Shape::Map { c, h, w }) => {
                    p -= 2;
                    let (wt, rest) = grads.tensors[p..].split_at_mut(1);
                    conv3x3_backward(
                        x,
                        &grad,
                        self.params.tensors[p].data(),
                        wt[0].data_mut(),
                        rest[0].data_mut(),
                        c,
                        out_channels,
                        h,
                        w,
                        need_input_grad,
                    )
                }
                (LayerSpec::Dense { out_features }, Shape::Flat(n)) => {
                    p -= 2;
                    let (wt, rest) = grads.tensors[p..].split_at_mut(1);
                    dense_backward(
                        x,
                        &grad,
                        self.params.tensors[p].data(),
                        wt[0].data_mut(),
                        rest[0].data_mut(),
                        n,
                        out_features,
                        need_input_grad,
                    )
                }
                (LayerSpec::Relu, _) => grad.iter().zip(y).map(|(&g, &v)| if v > T::zero() { g } else { T::zero() }).collect(),
                (LayerSpec::MaxPool, s) => {
                    let mut dx = vec![T::zero(); s.len()];
                    for (&g, &j) in grad.iter().zip(&trace.pool_argmax[i]) {
                        dx[j as usize] += g;
                    }
                    dx
                }
                (LayerSpec::Flatten, _) => grad,
                _ => unreachable!("shape chain validated"),
            };
        }
        Ok(())
    }

    /// Index of the largest output; ties go to the lowest index.
    pub fn greedy_slot(&self, input: &[T]) -> Result<usize, NeuralError> {
        Ok(argmax(&self.forward_one(input)?))
    }
}

pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Valid output range `[lo, hi)` for a kernel offset `d` in `-1..=1` over a length `n` axis.
#[inline]
fn tap_range(d: isize, n: usize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).min(n as isize).max(0) as usize;
    (lo, hi)
}

fn conv3x3_forward<T: Scalar>(x: &[T], w: &[T], b: &[T], ci: usize, co: usize, h: usize, wd: usize) -> Vec<T> {
    let hw = h * wd;
    let mut y = vec![T::zero(); co * hw];
    for oc in 0..co {
        let out = &mut y[oc * hw..(oc + 1) * hw];
        out.fill(b[oc]);
        for ic in 0..ci {
            let inp = &x[ic * hw..(ic + 1) * hw];
            let k = &w[(oc * ci + ic) * 9..(oc * ci + ic + 1) * 9];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = tap_range(dy, h);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = tap_range(dx, wd);
                    let wv = k[ky * 3 + kx];
                    for r in y0..y1 {
                        let src_row = (r as isize + dy) as usize * wd;
                        let src = &inp[(src_row as isize + x0 as isize + dx) as usize..][..x1 - x0];
                        let dst = &mut out[r * wd + x0..r * wd + x1];
                        for (o, &i) in dst.iter_mut().zip(src) {
                            *o += wv * i;
                        }
                    }
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv3x3_backward<T: Scalar>(
    x: &[T],
    dy: &[T],
    w: &[T],
    dw: &mut [T],
    db: &mut [T],
    ci: usize,
    co: usize,
    h: usize,
    wd: usize,
    need_input_grad: bool,
) -> Vec<T> {
    let hw = h * wd;
    let mut dx = if need_input_grad { vec![T::zero(); ci * hw] } else { Vec::new() };
    for oc in 0..co {
        let g = &dy[oc * hw..(oc + 1) * hw];
        db[oc] += g.iter().copied().sum::<T>();
        for ic in 0..ci {
            let inp = &x[ic * hw..(ic + 1) * hw];
            let base = (oc * ci + ic) * 9;
            for ky in 0..3 {
                let dyo = ky as isize - 1;
                let (y0, y1) = tap_range(dyo, h);
                for kx in 0..3 {
                    let dxo = kx as isize - 1;
                    let (x0, x1) = tap_range(dxo, wd);
                    let wv = w[base + ky * 3 + kx];
                    let mut acc = T::zero();
                    for r in y0..y1 {
                        let src_start = ((r as isize + dyo) as usize * wd) as isize + x0 as isize + dxo;
                        let src = &inp[src_start as usize..][..x1 - x0];
                        let gr = &g[r * wd + x0..r * wd + x1];
                        for (&a, &b) in gr.iter().zip(src) {
                            acc += a * b;
                        }
                        if need_input_grad {
                            let d = &mut dx[ic * hw + src_start as usize..][..x1 - x0];
                            for (o, &a) in d.iter_mut().zip(gr) {
                                *o += wv * a;
                            }
                        }
                    }
                    dw[base + ky * 3 + kx] += acc;
                }
            }
        }
    }
    dx
}

fn maxpool_forward<T: Scalar>(x: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Vec::with_capacity(c * oh * ow);
    let mut idx = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = ch * h * w;
        for r in 0..oh {
            for col in 0..ow {
                let mut best = plane + 2 * r * w + 2 * col;
                for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                    let j = plane + (2 * r + dr) * w + 2 * col + dc;
                    if x[j] > x[best] {
                        best = j;
                    }
                }
                y.push(x[best]);
                idx.push(best as u32);
            }
        }
    }
    (y, idx)
}

fn dense_forward<T: Scalar>(x: &[T], w: &[T], b: &[T], n_in: usize, n_out: usize) -> Vec<T> {
    (0..n_out)
        .map(|o| {
            let row = &w[o * n_in..(o + 1) * n_in];
            b[o] + row.iter().zip(x).map(|(&a, &v)| a * v).sum::<T>()
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn dense_backward<T: Scalar>(
    x: &[T],
    dy: &[T],
    w: &[T],
    dw: &mut [T],
    db: &mut [T],
    n_in: usize,
    n_out: usize,
    need_input_grad: bool,
) -> Vec<T> {
    let mut dx = if need_input_grad { vec![T::zero(); n_in] } else { Vec::new() };
    for o in 0..n_out {
        let g = dy[o];
        db[o] += g;
        if g == T::zero() {
            continue;
        }
        let drow = &mut dw[o * n_in..(o + 1) * n_in];
        for (d, &v) in drow.iter_mut().zip(x) {
            *d += g * v;
        }
        if need_input_grad {
            let row = &w[o * n_in..(o + 1) * n_in];
            for (d, &a) in dx.iter_mut().zip(row) {
                *d += g * a;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> Architecture {
        Architecture {
            input: [1, 2, 2],
            layers: vec![LayerSpec::MaxPool, LayerSpec::Flatten],
        }
    }

    #[test]
    fn desk_architecture_shapes() {
        let arch = Architecture::desk(64);
        let shapes = arch.shapes().unwrap();
        assert_eq!(*shapes.last().unwrap(), Shape::Flat(5));
        assert!(shapes.contains(&Shape::Flat(512)));
        assert!(arch.param_count().unwrap() < 1_500_000);
        assert_eq!(arch.param_shapes().unwrap().len(), 16);
        assert!(Architecture::desk(128).param_count().unwrap() < 1_500_000);
        assert_eq!(arch.arch_id(), "v1:c8-r-p-c8-r-p-c16-r-c16-r-p-c32-r-c32-r-p-f-d256-r-d5@3x64x64");
    }

    #[test]
    fn inconsistent_chain_is_rejected() {
        let arch = Architecture { input: [3, 8, 8], layers: vec![LayerSpec::Dense { out_features: 5 }] };
        assert!(matches!(arch.shapes(), Err(NeuralError::Architecture(_))));
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let arch = Architecture::desk(32);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = QNetwork::<f32>::new(arch, &mut rng).unwrap();
        net.params.iter_mut().for_each(|v| *v = 0.0);
        let out = net.forward_one(&vec![0.7; 3 * 32 * 32]).unwrap();
        assert_eq!(out, vec![0.0; 5]);
    }

    #[test]
    fn relu_and_pool_primitives() {
        let arch = Architecture { input: [1, 1, 3], layers: vec![LayerSpec::Relu] };
        let net = QNetwork::<f64>::from_params(arch, Params { tensors: vec![] }).unwrap();
        assert_eq!(net.forward_one(&[-1.0, 0.0, 2.0]).unwrap(), vec![0.0, 0.0, 2.0]);

        let net = QNetwork::<f64>::from_params(tiny(), Params { tensors: vec![] }).unwrap();
        assert_eq!(net.forward_one(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![4.0]);
    }

    #[test]
    fn conv_matches_naive_reference() {
        let (ci, co, h, w) = (2, 3, 5, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..ci * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k: Vec<f64> = (0..co * ci * 9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..co).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = conv3x3_forward(&x, &k, &b, ci, co, h, w);
        for oc in 0..co {
            for r in 0..h as isize {
                for c in 0..w as isize {
                    let mut acc = b[oc];
                    for ic in 0..ci {
                        for ky in 0..3isize {
                            for kx in 0..3isize {
                                let (rr, cc) = (r + ky - 1, c + kx - 1);
                                if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                                    continue;
                                }
                                acc += k[(oc * ci + ic) * 9 + (ky * 3 + kx) as usize]
                                    * x[ic * h * w + (rr as usize) * w + cc as usize];
                            }
                        }
                    }
                    let got = y[oc * h * w + r as usize * w + c as usize];
                    assert!((got - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn batch_rows_are_independent() {
        let arch = Architecture::desk(32);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = QNetwork::<f32>::new(arch, &mut rng).unwrap();
        let n = 3 * 32 * 32;
        let data: Vec<f32> = (0..3 * n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let out = net.forward(&Tensor::from_vec(vec![3, 3, 32, 32], data.clone())).unwrap();
        let mut permuted = data[n..2 * n].to_vec();
        permuted.extend_from_slice(&data[..n]);
        permuted.extend_from_slice(&data[2 * n..]);
        let out_p = net.forward(&Tensor::from_vec(vec![3, 3, 32, 32], permuted)).unwrap();
        assert_eq!(out.row(0), out_p.row(1));
        assert_eq!(out.row(1), out_p.row(0));
        assert_eq!(out.row(2), out_p.row(2));
    }

    #[test]
    fn wrong_input_shape_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = QNetwork::<f32>::new(Architecture::desk(32), &mut rng).unwrap();
        assert!(matches!(net.forward_one(&[0.0; 10]), Err(NeuralError::ShapeMismatch(_))));
        let bad = Tensor::zeros(vec![1, 3, 64, 64]);
        assert!(matches!(net.forward(&bad), Err(NeuralError::ShapeMismatch(_))));
    }

    #[test]
    fn init_respects_glorot_bounds() {
        let arch = Architecture::desk(32);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params: Params<f64> = arch.init_params(&mut rng).unwrap();
        let first = &params.tensors[0];
        let limit = (6.0f64 / (27 + 72) as f64).sqrt();
        assert!(first.data().iter().all(|v| v.abs() <= limit));
        assert!(params.tensors[1].data().iter().all(|&v| v == 0.0));
    }
}
