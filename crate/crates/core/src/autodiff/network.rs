//! Feed-forward chains of dense layers with reverse-mode gradients.

use rand::Rng;

use super::tensor::gemm;
use super::{AutodiffError, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
    /// Row-wise softmax over the layer outputs.
    Softmax,
}

impl Activation {
    pub const ALL: [Activation; 5] =
        [Activation::Identity, Activation::Relu, Activation::Sigmoid, Activation::Tanh, Activation::Softmax];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Softmax => "softmax",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    fn apply(self, z: &mut [f64], cols: usize) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Softmax => {
                for row in z.chunks_mut(cols) {
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        total += *v;
                    }
                    row.iter_mut().for_each(|v| *v /= total);
                }
            }
        }
    }

    /// Turns `grad` (w.r.t. activations `y`) into the gradient w.r.t. pre-activations.
    fn backprop(self, y: &[f64], grad: &mut [f64], cols: usize) {
        match self {
            Activation::Identity => {}
            Activation::Relu => {
                for (g, &out) in grad.iter_mut().zip(y) {
                    if out <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Sigmoid => {
                for (g, &out) in grad.iter_mut().zip(y) {
                    *g *= out * (1.0 - out);
                }
            }
            Activation::Tanh => {
                for (g, &out) in grad.iter_mut().zip(y) {
                    *g *= 1.0 - out * out;
                }
            }
            Activation::Softmax => {
                for (g, out) in grad.chunks_mut(cols).zip(y.chunks(cols)) {
                    let dot: f64 = g.iter().zip(out).map(|(a, b)| a * b).sum();
                    for (gi, &yi) in g.iter_mut().zip(out) {
                        *gi = yi * (*gi - dot);
                    }
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One dense layer: output width and activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation) -> Self {
        Self { width, activation }
    }
}

/// Deliberate gradient corruption, used as a negative control for gradient checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradFault {
    /// Multiplies the first layer's weight gradient by the factor.
    ScaleFirstWeightGrad(f64),
}

#[derive(Clone, Debug)]
struct Tape {
    /// `inputs[i]` is the input of layer `i`; `outputs[i]` its activations.
    inputs: Vec<Tensor>,
    outputs: Vec<Tensor>,
}

#[derive(Clone, Debug)]
pub struct Network {
    input_width: usize,
    layers: Vec<LayerSpec>,
    params: ParamStore,
    tape: Option<Tape>,
    fault: Option<GradFault>,
}

impl Network {
    /// Builds a network with Glorot-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(input_width: usize, layers: &[LayerSpec], rng: &mut R) -> Result<Self, AutodiffError> {
        if input_width == 0 || layers.is_empty() || layers.iter().any(|l| l.width == 0) {
            return Err(AutodiffError::InvalidShape(format!(
                "network needs positive widths, got input {input_width} and layers {layers:?}"
            )));
        }
        let mut params = ParamStore::new();
        let mut fan_in = input_width;
        for (i, layer) in layers.iter().enumerate() {
            let limit = (6.0 / (fan_in + layer.width) as f64).sqrt();
            let weights = (0..fan_in * layer.width).map(|_| rng.gen_range(-limit..limit)).collect();
            params.insert(format!("dense{i}.weight"), Tensor::matrix(fan_in, layer.width, weights)?)?;
            params.insert(format!("dense{i}.bias"), Tensor::zeros(&[layer.width]))?;
            fan_in = layer.width;
        }
        Ok(Self { input_width, layers: layers.to_vec(), params, tape: None, fault: None })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map(|l| l.width).unwrap_or(self.input_width)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn set_fault(&mut self, fault: Option<GradFault>) {
        self.fault = fault;
    }

    /// Zeroes the final layer's weights and bias.
    pub fn zero_last_layer(&mut self) {
        let last = self.layers.len() - 1;
        for suffix in ["weight", "bias"] {
            if let Some(e) = self.params.get_mut(&format!("dense{last}.{suffix}")) {
                e.value_mut().fill(0.0);
            }
        }
    }

    /// Sets one layer's weights (`fan_in × width`) and bias.
    pub fn set_layer(&mut self, layer: usize, weights: &[f64], bias: &[f64]) -> Result<(), AutodiffError> {
        let w = self
            .params
            .get_mut(&format!("dense{layer}.weight"))
            .ok_or_else(|| AutodiffError::InvalidShape(format!("no layer {layer}")))?;
        if w.value.len() != weights.len() {
            return Err(AutodiffError::InvalidShape(format!(
                "layer {layer} weights need {} values, got {}",
                w.value.len(),
                weights.len()
            )));
        }
        w.value.data_mut().copy_from_slice(weights);
        let b = self.params.get_mut(&format!("dense{layer}.bias")).expect("bias registered with weight");
        if b.value.len() != bias.len() {
            return Err(AutodiffError::InvalidShape(format!(
                "layer {layer} bias needs {} values, got {}",
                b.value.len(),
                bias.len()
            )));
        }
        b.value.data_mut().copy_from_slice(bias);
        Ok(())
    }

    fn check_input(&self, input: &Tensor) -> Result<(), AutodiffError> {
        if input.shape().len() != 2 || input.cols() != self.input_width {
            return Err(AutodiffError::ShapeMismatch {
                layer: 0,
                expected: self.input_width,
                got: input.shape().to_vec(),
            });
        }
        Ok(())
    }

    fn layer_forward(&self, i: usize, x: &Tensor) -> Tensor {
        let spec = self.layers[i];
        let w = self.params.entry(2 * i).value();
        let b = self.params.entry(2 * i + 1).value();
        let rows = x.rows();
        let mut out = Vec::with_capacity(rows * spec.width);
        for _ in 0..rows {
            out.extend_from_slice(b.data());
        }
        gemm(rows, x.cols(), spec.width, x.data(), false, w.data(), false, 1.0, &mut out);
        spec.activation.apply(&mut out, spec.width);
        Tensor::new(vec![rows, spec.width], out).expect("layer output shape")
    }

    /// Evaluates the network on a `batch × input_width` matrix without recording.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor, AutodiffError> {
        self.check_input(input)?;
        let mut x = input.clone();
        for i in 0..self.layers.len() {
            x = self.layer_forward(i, &x);
        }
        if !x.is_finite() {
            return Err(AutodiffError::NonFinite("forward output".into()));
        }
        Ok(x)
    }

    /// Forward pass; with `record` set the intermediates are kept for [`Network::backward`].
    pub fn forward(&mut self, input: &Tensor, record: bool) -> Result<Tensor, AutodiffError> {
        if !record {
            self.tape = None;
            return self.predict(input);
        }
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for i in 0..self.layers.len() {
            let y = self.layer_forward(i, &x);
            inputs.push(x);
            outputs.push(y.clone());
            x = y;
        }
        if !x.is_finite() {
            return Err(AutodiffError::NonFinite("forward output".into()));
        }
        self.tape = Some(Tape { inputs, outputs });
        Ok(x)
    }

    /// Backpropagates `output_grad`, accumulating parameter gradients, and
    /// returns the gradient with respect to the recorded input.
    pub fn backward(&mut self, output_grad: &Tensor) -> Result<Tensor, AutodiffError> {
        let tape = self.tape.take().ok_or(AutodiffError::NoRecordedForward)?;
        let result = self.propagate(&tape, output_grad, true);
        self.tape = Some(tape);
        result
    }

    /// Gradient with respect to the recorded input, leaving parameter gradients untouched.
    pub fn input_gradient(&self, output_grad: &Tensor) -> Result<Tensor, AutodiffError> {
        let tape = self.tape.as_ref().ok_or(AutodiffError::NoRecordedForward)?;
        let mut scratch = self.clone();
        scratch.tape = None;
        scratch.propagate(tape, output_grad, false)
    }

    /// Drops any recorded forward pass.
    pub fn clear_tape(&mut self) {
        self.tape = None;
    }

    fn propagate(&mut self, tape: &Tape, output_grad: &Tensor, accumulate: bool) -> Result<Tensor, AutodiffError> {
        let last = tape.outputs.last().expect("non-empty tape");
        if output_grad.shape() != last.shape() {
            return Err(AutodiffError::ShapeMismatch {
                layer: self.layers.len() - 1,
                expected: last.cols(),
                got: output_grad.shape().to_vec(),
            });
        }
        let mut grad = output_grad.data().to_vec();
        for i in (0..self.layers.len()).rev() {
            let spec = self.layers[i];
            let x = &tape.inputs[i];
            let y = &tape.outputs[i];
            let rows = x.rows();
            let fan_in = x.cols();
            spec.activation.backprop(y.data(), &mut grad, spec.width);

            if accumulate {
                let mut dw = vec![0.0; fan_in * spec.width];
                gemm(fan_in, rows, spec.width, x.data(), true, &grad, false, 0.0, &mut dw);
                if i == 0 {
                    if let Some(GradFault::ScaleFirstWeightGrad(k)) = self.fault {
                        dw.iter_mut().for_each(|v| *v *= k);
                    }
                }
                let w_entry = self.params.entry_mut(2 * i);
                for (g, d) in w_entry.grad.data_mut().iter_mut().zip(&dw) {
                    *g += d;
                }
                let b_entry = self.params.entry_mut(2 * i + 1);
                let db = b_entry.grad.data_mut();
                for row in grad.chunks(spec.width) {
                    for (g, d) in db.iter_mut().zip(row) {
                        *g += d;
                    }
                }
            }

            let w = self.params.entry(2 * i).value();
            let mut dx = vec![0.0; rows * fan_in];
            gemm(rows, spec.width, fan_in, &grad, false, w.data(), true, 0.0, &mut dx);
            grad = dx;
        }
        let input_grad = Tensor::new(tape.inputs[0].shape().to_vec(), grad)?;
        if !input_grad.is_finite() {
            return Err(AutodiffError::NonFinite("backward input gradient".into()));
        }
        Ok(input_grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = Network::new(3, &[LayerSpec::new(3, Activation::Identity)], &mut rng()).unwrap();
        let eye = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        net.set_layer(0, &eye, &[0.0; 3]).unwrap();
        let v = Tensor::from_rows(&[vec![0.3, -1.5, 2.0]]).unwrap();
        assert_eq!(net.forward(&v, false).unwrap(), v);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut net = Network::new(3, &[LayerSpec::new(3, Activation::Softmax)], &mut rng()).unwrap();
        net.zero_last_layer();
        let out = net.predict(&Tensor::zeros(&[1, 3])).unwrap();
        for v in out.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_layer_net_matches_hand_computation() {
        // x = (1, 2); layer 1: W1 = [[1, -1], [0.5, 2]], b1 = (0, -3), relu
        // z1 = (1·1 + 2·0.5, 1·(-1) + 2·2) + (0, -3) = (2, 0) → relu (2, 0)
        // layer 2: W2 = [[3], [4]], b2 = 0.5, identity → 2·3 + 0·4 + 0.5 = 6.5
        let mut net = Network::new(
            2,
            &[LayerSpec::new(2, Activation::Relu), LayerSpec::new(1, Activation::Identity)],
            &mut rng(),
        )
        .unwrap();
        net.set_layer(0, &[1.0, -1.0, 0.5, 2.0], &[0.0, -3.0]).unwrap();
        net.set_layer(1, &[3.0, 4.0], &[0.5]).unwrap();
        let out = net.predict(&Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap()).unwrap();
        assert_eq!(out.data(), &[6.5]);
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let mut net = Network::new(4, &[LayerSpec::new(2, Activation::Tanh)], &mut rng()).unwrap();
        let err = net.forward(&Tensor::zeros(&[1, 3]), true).unwrap_err();
        assert!(err.to_string().contains("layer 0"), "{err}");
    }

    #[test]
    fn backward_requires_recorded_forward() {
        let mut net = Network::new(2, &[LayerSpec::new(1, Activation::Identity)], &mut rng()).unwrap();
        assert!(matches!(net.backward(&Tensor::zeros(&[1, 1])), Err(AutodiffError::NoRecordedForward)));
        net.forward(&Tensor::zeros(&[1, 2]), false).unwrap();
        assert!(net.backward(&Tensor::zeros(&[1, 1])).is_err());
    }

    #[test]
    fn zero_output_grad_gives_zero_parameter_grads() {
        let mut net = Network::new(
            3,
            &[LayerSpec::new(4, Activation::Tanh), LayerSpec::new(2, Activation::Sigmoid)],
            &mut rng(),
        )
        .unwrap();
        let x = Tensor::from_rows(&[vec![0.1, 0.2, 0.3], vec![-1.0, 0.5, 2.0]]).unwrap();
        net.forward(&x, true).unwrap();
        net.backward(&Tensor::zeros(&[2, 2])).unwrap();
        assert!(net.params().entries().iter().all(|e| e.grad().max_abs() == 0.0));
    }

    #[test]
    fn linear_loss_gradient_equals_input() {
        // loss = w·x with a single identity output unit
        let mut net = Network::new(3, &[LayerSpec::new(1, Activation::Identity)], &mut rng()).unwrap();
        let x = Tensor::from_rows(&[vec![0.7, -2.0, 4.5]]).unwrap();
        net.forward(&x, true).unwrap();
        net.backward(&Tensor::filled(&[1, 1], 1.0)).unwrap();
        assert_eq!(net.params().entry(0).grad().data(), x.data());
        assert_eq!(net.params().entry(1).grad().data(), &[1.0]);
    }

    #[test]
    fn forward_backward_leaves_weights_unchanged() {
        let mut net = Network::new(
            5,
            &[LayerSpec::new(4, Activation::Relu), LayerSpec::new(3, Activation::Softmax)],
            &mut rng(),
        )
        .unwrap();
        let before = net.params().snapshot();
        let x = Tensor::filled(&[2, 5], 0.4);
        net.forward(&x, true).unwrap();
        net.backward(&Tensor::filled(&[2, 3], 0.25)).unwrap();
        assert_eq!(before, net.params().snapshot());
    }

    #[test]
    fn input_gradient_does_not_touch_param_grads() {
        let mut net = Network::new(3, &[LayerSpec::new(2, Activation::Sigmoid)], &mut rng()).unwrap();
        net.forward(&Tensor::filled(&[1, 3], 0.5), true).unwrap();
        let g = net.input_gradient(&Tensor::filled(&[1, 2], 1.0)).unwrap();
        assert_eq!(g.shape(), &[1, 3]);
        assert!(net.params().entries().iter().all(|e| e.grad().max_abs() == 0.0));
        // and agrees with a full backward
        let full = net.backward(&Tensor::filled(&[1, 2], 1.0)).unwrap();
        assert_eq!(g, full);
    }

    #[test]
    fn identical_seeds_give_identical_networks() {
        let specs = [LayerSpec::new(6, Activation::Tanh), LayerSpec::new(2, Activation::Identity)];
        let a = Network::new(4, &specs, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let b = Network::new(4, &specs, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a.params().snapshot(), b.params().snapshot());
    }
}
