//! The learnable components: stochastic encoder, Bob's decoder, Eve's
//! classifier and Eve's illustrative decoder.
//!
//! Decoders and classifiers consume a [`ChannelObservation`], never source
//! images or labels, so the `T, S → X → Y` chain is enforced by the types.

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{Activation, AutodiffError, LayerSpec, Network, Tensor};
use crate::channel::{ChannelError, Codeword};
use crate::source::NUM_T_CLASSES;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("expected {expected} values per row, got {got}")]
    Width { expected: usize, got: usize },
    #[error("bit probability {0} outside [0, 1]")]
    Probability(f64),
}

/// Layer widths of the three networks.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub image_len: usize,
    pub n_bits: usize,
    pub t_classes: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub eve_hidden: Vec<usize>,
}

impl ModelConfig {
    /// Default widths for `size × size × 3` glyphs: encoder 768→256→n,
    /// decoder n→256→768, Eve n→128→9 at size 16.
    pub fn for_glyphs(size: usize, n_bits: usize) -> Self {
        Self {
            image_len: size * size * 3,
            n_bits,
            t_classes: NUM_T_CLASSES,
            encoder_hidden: vec![256],
            decoder_hidden: vec![256],
            eve_hidden: vec![128],
        }
    }
}

fn mlp<R: Rng + ?Sized>(
    input: usize,
    hidden: &[usize],
    output: usize,
    out_act: Activation,
    rng: &mut R,
) -> Result<Network, AutodiffError> {
    let mut layers: Vec<LayerSpec> = hidden.iter().map(|&w| LayerSpec::new(w, Activation::Relu)).collect();
    layers.push(LayerSpec::new(output, out_act));
    Network::new(input, &layers, rng)
}

fn check_width(t: &Tensor, expected: usize) -> Result<(), ModelError> {
    if t.shape().len() != 2 || t.cols() != expected {
        return Err(ModelError::Width { expected, got: t.cols() });
    }
    Ok(())
}

/// Values received over a channel (hard bits or relaxed bit probabilities),
/// one row per example.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelObservation(Tensor);

impl ChannelObservation {
    /// Hard observations; every entry must be 0 or 1.
    pub fn from_bits(bits: Tensor) -> Result<Self, ModelError> {
        if let Some(&v) = bits.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(ModelError::Probability(v));
        }
        Ok(Self(bits))
    }

    /// Relaxed observations in `[0, 1]` (the straight-through training path).
    pub fn from_probabilities(values: Tensor) -> Result<Self, ModelError> {
        if let Some(&v) = values.data().iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
            return Err(ModelError::Probability(v));
        }
        Ok(Self(values))
    }

    pub fn from_codewords(words: &[Codeword]) -> Result<Self, ModelError> {
        let rows: Vec<Vec<f64>> = words.iter().map(Codeword::as_f64).collect();
        Ok(Self(Tensor::from_rows(&rows)?))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.cols()
    }

    /// Keeps bit range `[start, end)` and replaces every other bit with 0.5.
    pub fn isolate_band(&self, start: usize, end: usize) -> Self {
        let mut t = self.0.clone();
        for i in 0..t.rows() {
            for (j, v) in t.row_mut(i).iter_mut().enumerate() {
                if j < start || j >= end {
                    *v = 0.5;
                }
            }
        }
        Self(t)
    }

    /// Columns `[start, end)` only.
    pub fn band(&self, start: usize, end: usize) -> Self {
        Self(self.0.select_columns(start, end))
    }
}

/// Image → n bit-probabilities (terminal sigmoid).
#[derive(Clone, Debug)]
pub struct EncoderModel {
    pub net: Network,
}

impl EncoderModel {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        Ok(Self { net: mlp(cfg.image_len, &cfg.encoder_hidden, cfg.n_bits, Activation::Sigmoid, rng)? })
    }

    pub fn n_bits(&self) -> usize {
        self.net.output_width()
    }

    /// Bit probabilities for a `batch × image_len` block.
    pub fn encode(&mut self, images: &Tensor, record: bool) -> Result<Tensor, ModelError> {
        check_width(images, self.net.input_width())?;
        Ok(self.net.forward(images, record)?)
    }

    pub fn encode_frozen(&self, images: &Tensor) -> Result<Tensor, ModelError> {
        check_width(images, self.net.input_width())?;
        Ok(self.net.predict(images)?)
    }
}

/// n channel values → image intensities (terminal sigmoid).
#[derive(Clone, Debug)]
pub struct DecoderModel {
    pub net: Network,
}

impl DecoderModel {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        Ok(Self { net: mlp(cfg.n_bits, &cfg.decoder_hidden, cfg.image_len, Activation::Sigmoid, rng)? })
    }

    pub fn decode(&mut self, y: &ChannelObservation, record: bool) -> Result<Tensor, ModelError> {
        check_width(y.tensor(), self.net.input_width())?;
        Ok(self.net.forward(y.tensor(), record)?)
    }

    pub fn decode_frozen(&self, y: &ChannelObservation) -> Result<Tensor, ModelError> {
        check_width(y.tensor(), self.net.input_width())?;
        Ok(self.net.predict(y.tensor())?)
    }
}

/// Eve's reconstruction network, same architecture as Bob's decoder but fed Eve's observations.
#[derive(Clone, Debug)]
pub struct EveDecoder(pub DecoderModel);

/// n channel values → class probabilities over T (terminal softmax).
#[derive(Clone, Debug)]
pub struct EveClassifier {
    pub net: Network,
}

impl EveClassifier {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        Self::with_input(cfg.n_bits, &cfg.eve_hidden, cfg.t_classes, rng)
    }

    /// A classifier over an arbitrary input width (band-restricted or image adversaries).
    pub fn with_input<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        classes: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        Ok(Self { net: mlp(input, hidden, classes, Activation::Softmax, rng)? })
    }

    pub fn classify(&mut self, y: &ChannelObservation, record: bool) -> Result<Tensor, ModelError> {
        check_width(y.tensor(), self.net.input_width())?;
        Ok(self.net.forward(y.tensor(), record)?)
    }

    pub fn classify_frozen(&self, y: &ChannelObservation) -> Result<Tensor, ModelError> {
        check_width(y.tensor(), self.net.input_width())?;
        Ok(self.net.predict(y.tensor())?)
    }
}

/// Draws hard bits `x_i ~ Bernoulli(p_i)`. Under the straight-through
/// contract the backward pass treats this step as the identity; see
/// [`straight_through_backward`].
pub fn sample_bits_st<R: Rng + ?Sized>(p: &Tensor, rng: &mut R) -> Result<Tensor, ModelError> {
    let mut bits = p.clone();
    for v in bits.data_mut() {
        if !(0.0..=1.0).contains(v) {
            return Err(ModelError::Probability(*v));
        }
        *v = f64::from(u8::from(rng.gen::<f64>() < *v));
    }
    Ok(bits)
}

/// Gradient through a straight-through Bernoulli sample: passed unchanged.
pub fn straight_through_backward(grad: &Tensor) -> Tensor {
    grad.clone()
}

/// Index of the largest entry of each row.
pub fn argmax_rows(probs: &Tensor) -> Vec<usize> {
    (0..probs.rows())
        .map(|i| {
            probs.row(i).iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best }).0
        })
        .collect()
}
