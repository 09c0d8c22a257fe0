use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Linear => {}
        }
    }

    /// Multiplies `grad` by the derivative, expressed through the activated output.
    fn backprop(self, grad: &mut Array2<f64>, output: &Array2<f64>) {
        match self {
            // Subgradient at 0 is 0: y > 0 iff z > 0.
            Activation::Relu => ndarray::Zip::from(grad)
                .and(output)
                .for_each(|g, &y| {
                    if y <= 0.0 {
                        *g = 0.0
                    }
                }),
            Activation::Tanh => ndarray::Zip::from(grad)
                .and(output)
                .for_each(|g, &y| *g *= 1.0 - y * y),
            Activation::Linear => {}
        }
    }
}

/// Weight (`fan_in × fan_out`) and bias of one affine layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }
}

/// Parameters (or parameter-shaped buffers such as gradients and moments)
/// of a stack of dense layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub layers: Vec<Dense>,
}

impl Params {
    pub fn zeros_like(other: &Params) -> Self {
        Self {
            layers: other
                .layers
                .iter()
                .map(|l| Dense::zeros(l.fan_in(), l.fan_out()))
                .collect(),
        }
    }

    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|l| {
            [
                l.weight.as_slice().expect("standard layout"),
                l.bias.as_slice().expect("standard layout"),
            ]
        })
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers.iter_mut().flat_map(|l| {
            [
                l.weight.as_slice_mut().expect("standard layout"),
                l.bias.as_slice_mut().expect("standard layout"),
            ]
        })
    }

    pub fn len(&self) -> usize {
        self.slices().map(<[f64]>::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &Params) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.bias.dim() == b.bias.dim())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().flatten().copied().collect()
    }

    pub fn norm(&self) -> f64 {
        self.slices().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().flatten().all(|v| v.is_finite())
    }
}

/// Cached layer inputs and activated outputs of one forward batch.
///
/// Consumed by value by the backward pass, so each tape is used once.
#[derive(Debug)]
pub struct GradientTape {
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

impl GradientTape {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }
}

/// Feed-forward network with a shared hidden activation and its own head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpCheckpoint", into = "MlpCheckpoint")]
pub struct Mlp {
    params: Params,
    hidden: Activation,
    output: Activation,
}

impl Mlp {
    /// Uniform initialisation in `±1/√fan_in` for weights and biases.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Dimension(format!(
                "invalid layer sizes {layer_sizes:?}"
            )));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut dense = Dense::zeros(fan_in, fan_out);
                dense
                    .weight
                    .mapv_inplace(|_| rng.random_range(-bound..bound));
                dense.bias.mapv_inplace(|_| rng.random_range(-bound..bound));
                dense
            })
            .collect();
        Ok(Self {
            params: Params { layers },
            hidden,
            output,
        })
    }

    pub fn from_params(params: Params, hidden: Activation, output: Activation) -> Result<Self> {
        if params.layers.is_empty() {
            return Err(Error::Dimension("network needs at least one layer".into()));
        }
        for pair in params.layers.windows(2) {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::Dimension(format!(
                    "layer output {} does not feed layer input {}",
                    pair[0].fan_out(),
                    pair[1].fan_in()
                )));
            }
        }
        for l in &params.layers {
            if l.bias.len() != l.fan_out() {
                return Err(Error::Dimension("bias length differs from layer width".into()));
            }
        }
        Ok(Self {
            params,
            hidden,
            output,
        })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.params.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.params.layers.last().map_or(0, Dense::fan_out)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.params.layers.iter().map(Dense::fan_out))
            .collect()
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.params.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "batch width {} does not match network input {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn affine(layer: &Dense, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&layer.weight);
        z += &layer.bias;
        z
    }

    /// Forward pass without recording.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut a: Option<Array2<f64>> = None;
        for (i, layer) in self.params.layers.iter().enumerate() {
            let mut z = match &a {
                Some(prev) => Self::affine(layer, &prev.view()),
                None => Self::affine(layer, &x),
            };
            self.activation_of(i).apply(&mut z);
            a = Some(z);
        }
        Ok(a.expect("at least one layer"))
    }

    /// Forward pass recording what the backward pass needs.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, GradientTape)> {
        self.check_input(&x)?;
        let n = self.params.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(n);
        inputs.push(x.to_owned());
        for (i, layer) in self.params.layers.iter().enumerate() {
            let mut z = Self::affine(layer, &inputs[i].view());
            self.activation_of(i).apply(&mut z);
            if i + 1 < n {
                inputs.push(z.clone());
            }
            outputs.push(z);
        }
        let y = outputs.last().expect("at least one layer").clone();
        Ok((y, GradientTape { inputs, outputs }))
    }

    fn check_tape(&self, tape: &GradientTape, output_grad: &ArrayView2<f64>) -> Result<()> {
        if tape.outputs.len() != self.params.layers.len()
            || tape.inputs.first().map(|x| x.ncols()) != Some(self.input_dim())
        {
            return Err(Error::Dimension("tape was not produced by this network".into()));
        }
        if output_grad.dim() != (tape.batch_size(), self.output_dim()) {
            return Err(Error::Dimension(format!(
                "output gradient shape {:?} does not match ({}, {})",
                output_grad.dim(),
                tape.batch_size(),
                self.output_dim()
            )));
        }
        Ok(())
    }

    /// Reverse-mode gradients of `Σ output_grad ⊙ y` with respect to the
    /// parameters and to the input batch.
    pub fn backward(
        &self,
        tape: GradientTape,
        output_grad: ArrayView2<f64>,
    ) -> Result<(Params, Array2<f64>)> {
        self.check_tape(&tape, &output_grad)?;
        let mut grads = Params::zeros_like(&self.params);
        let mut delta = output_grad.to_owned();
        for i in (0..self.params.layers.len()).rev() {
            self.activation_of(i).backprop(&mut delta, &tape.outputs[i]);
            let g = &mut grads.layers[i];
            ndarray::linalg::general_mat_mul(1.0, &tape.inputs[i].t(), &delta, 0.0, &mut g.weight);
            g.bias = delta.sum_axis(Axis(0));
            delta = delta.dot(&self.params.layers[i].weight.t());
        }
        Ok((grads, delta))
    }

    /// Gradient with respect to the input batch only.
    pub fn input_gradient(
        &self,
        tape: GradientTape,
        output_grad: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        self.check_tape(&tape, &output_grad)?;
        let mut delta = output_grad.to_owned();
        for i in (0..self.params.layers.len()).rev() {
            self.activation_of(i).backprop(&mut delta, &tape.outputs[i]);
            delta = delta.dot(&self.params.layers[i].weight.t());
        }
        Ok(delta)
    }

    /// `target ← τ·online + (1−τ)·target`.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        if !self.params.same_shape(&online.params) {
            return Err(Error::Dimension("soft update between different shapes".into()));
        }
        for (t, o) in self.params.slices_mut().zip(online.params.slices()) {
            for (tv, &ov) in t.iter_mut().zip(o) {
                *tv = tau * ov + (1.0 - tau) * *tv;
            }
        }
        Ok(())
    }
}

pub const CHECKPOINT_FORMAT: &str = "etcomm-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk representation of a network.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub format: String,
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
    /// Per layer: row-major weights followed by bias.
    pub params: Vec<f64>,
}

impl From<Mlp> for MlpCheckpoint {
    fn from(net: Mlp) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            layer_sizes: net.layer_sizes(),
            hidden: net.hidden,
            output: net.output,
            params: net.params.to_flat(),
        }
    }
}

impl TryFrom<MlpCheckpoint> for Mlp {
    type Error = Error;

    fn try_from(ck: MlpCheckpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported network format {} v{}",
                ck.format, ck.version
            )));
        }
        if ck.layer_sizes.len() < 2 {
            return Err(Error::Checkpoint("need at least two layer sizes".into()));
        }
        let expected: usize = ck.layer_sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum();
        if expected != ck.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {expected} parameters, found {}",
                ck.params.len()
            )));
        }
        let mut offset = 0;
        let layers = ck
            .layer_sizes
            .windows(2)
            .map(|p| {
                let (fan_in, fan_out) = (p[0], p[1]);
                let w = &ck.params[offset..offset + fan_in * fan_out];
                offset += fan_in * fan_out;
                let b = &ck.params[offset..offset + fan_out];
                offset += fan_out;
                Dense {
                    weight: Array2::from_shape_vec((fan_in, fan_out), w.to_vec())
                        .expect("sized above"),
                    bias: Array1::from_vec(b.to_vec()),
                }
            })
            .collect();
        Mlp::from_params(Params { layers }, ck.hidden, ck.output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(sizes: &[usize], output: Activation, seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mlp::new(sizes, Activation::Relu, output, &mut rng).unwrap()
    }

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    /// Straightforward scalar re-implementation used as a forward oracle.
    fn naive_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let n = net.params.layers.len();
        for (i, layer) in net.params.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.fan_out()];
            for (o, zo) in z.iter_mut().enumerate() {
                let mut acc = layer.bias[o];
                for (k, ak) in a.iter().enumerate() {
                    acc += ak * layer.weight[[k, o]];
                }
                *zo = if i + 1 == n {
                    match net.output {
                        Activation::Tanh => acc.tanh(),
                        Activation::Relu => acc.max(0.0),
                        Activation::Linear => acc,
                    }
                } else {
                    acc.max(0.0)
                };
            }
            a = z;
        }
        a
    }

    #[test]
    fn zero_network_tanh_head_outputs_zero() {
        let mut net = random_net(&[5, 8, 3], Activation::Tanh, 1);
        for s in net.params_mut().slices_mut() {
            s.fill(0.0);
        }
        let y = net.predict(random_batch(4, 5, 2).view()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let params = Params {
            layers: vec![Dense {
                weight: Array2::eye(3),
                bias: Array1::zeros(3),
            }],
        };
        let net = Mlp::from_params(params, Activation::Relu, Activation::Linear).unwrap();
        let x = array![[0.5, -2.0, 3.0], [1.0, 0.0, -1.0]];
        assert_eq!(net.predict(x.view()).unwrap(), x);
    }

    #[test]
    fn forward_matches_naive_oracle() {
        for output in [Activation::Tanh, Activation::Linear] {
            let net = random_net(&[7, 64, 64, 64, 64, 4], output, 3);
            let x = random_batch(9, 7, 4);
            let y = net.predict(x.view()).unwrap();
            let (y2, _) = net.forward(x.view()).unwrap();
            assert_eq!(y, y2);
            for (r, row) in x.rows().into_iter().enumerate() {
                let expect = naive_forward(&net, row.as_slice().unwrap());
                for (o, e) in expect.iter().enumerate() {
                    assert!((y[[r, o]] - e).abs() <= 1e-12, "{} vs {}", y[[r, o]], e);
                }
            }
        }
    }

    #[test]
    fn rows_are_independent() {
        let net = random_net(&[4, 16, 16, 2], Activation::Tanh, 5);
        let x = random_batch(6, 4, 6);
        let y = net.predict(x.view()).unwrap();
        for r in 0..6 {
            let single = net.predict(x.slice(ndarray::s![r..r + 1, ..])).unwrap();
            for c in 0..2 {
                assert!((single[[0, c]] - y[[r, c]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn tanh_head_is_strictly_bounded() {
        let net = random_net(&[3, 8, 2], Activation::Tanh, 7);
        let x = random_batch(20, 3, 8) * 5.0;
        let y = net.predict(x.view()).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn wrong_width_is_rejected() {
        let net = random_net(&[3, 4, 1], Activation::Linear, 1);
        assert!(matches!(
            net.predict(random_batch(2, 4, 1).view()),
            Err(Error::Dimension(_))
        ));
        let (_, tape) = net.forward(random_batch(2, 3, 1).view()).unwrap();
        assert!(net.backward(tape, Array2::zeros((3, 1)).view()).is_err());
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let net = random_net(&[3, 8, 8, 2], Activation::Tanh, 9);
        let (_, tape) = net.forward(random_batch(5, 3, 1).view()).unwrap();
        let (g, dx) = net.backward(tape, Array2::zeros((5, 2)).view()).unwrap();
        assert!(g.slices().flatten().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_neuron_gradient() {
        let params = Params {
            layers: vec![Dense {
                weight: array![[0.3], [-0.7]],
                bias: array![0.1],
            }],
        };
        let net = Mlp::from_params(params, Activation::Relu, Activation::Linear).unwrap();
        let x = array![[2.0, -3.0]];
        let (_, tape) = net.forward(x.view()).unwrap();
        let (g, dx) = net.backward(tape, array![[0.5]].view()).unwrap();
        assert_eq!(g.layers[0].weight, array![[1.0], [-1.5]]);
        assert_eq!(g.layers[0].bias, array![0.5]);
        assert_eq!(dx, array![[0.15, -0.35]]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let params = Params {
            layers: vec![
                Dense {
                    weight: array![[1.0]],
                    bias: array![0.0],
                },
                Dense {
                    weight: array![[1.0]],
                    bias: array![0.0],
                },
            ],
        };
        let net = Mlp::from_params(params, Activation::Relu, Activation::Linear).unwrap();
        let (_, tape) = net.forward(array![[0.0]].view()).unwrap();
        let (g, dx) = net.backward(tape, array![[1.0]].view()).unwrap();
        assert_eq!(dx[[0, 0]], 0.0);
        assert_eq!(g.layers[0].weight[[0, 0]], 0.0);
        assert_eq!(g.layers[0].bias[0], 0.0);
    }

    #[test]
    fn input_gradient_matches_full_backward() {
        let net = random_net(&[6, 16, 16, 3], Activation::Tanh, 11);
        let x = random_batch(4, 6, 12);
        let gy = random_batch(4, 3, 13);
        let (_, t1) = net.forward(x.view()).unwrap();
        let (_, t2) = net.forward(x.view()).unwrap();
        let (_, dx) = net.backward(t1, gy.view()).unwrap();
        assert_eq!(net.input_gradient(t2, gy.view()).unwrap(), dx);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let net = random_net(&[5, 64, 64, 64, 64, 2], Activation::Tanh, 21);
        let text = serde_json::to_string(&net).unwrap();
        let back: Mlp = serde_json::from_str(&text).unwrap();
        let x = random_batch(8, 5, 22);
        let a = net.predict(x.view()).unwrap();
        let b = back.predict(x.view()).unwrap();
        assert!(a
            .iter()
            .zip(b.iter())
            .all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn checkpoint_rejects_bad_header() {
        let net = random_net(&[2, 3, 1], Activation::Linear, 1);
        let mut ck = MlpCheckpoint::from(net);
        ck.version = 99;
        assert!(Mlp::try_from(ck.clone()).is_err());
        ck.version = CHECKPOINT_VERSION;
        ck.params.pop();
        assert!(Mlp::try_from(ck).is_err());
    }

    #[test]
    fn soft_update_limits() {
        let online = random_net(&[3, 4, 1], Activation::Linear, 1);
        let base = random_net(&[3, 4, 1], Activation::Linear, 2);
        let mut t = base.clone();
        t.soft_update_from(&online, 0.0).unwrap();
        assert_eq!(t, base);
        t.soft_update_from(&online, 1.0).unwrap();
        assert_eq!(t.params(), online.params());
        let other = random_net(&[3, 5, 1], Activation::Linear, 2);
        assert!(t.soft_update_from(&other, 0.5).is_err());
    }
}
