//! Test-time measurements on frozen models: hard-bit channel simulation,
//! distortion, retrained adversaries and MINE leakage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::channel::{ChannelSpec, Receiver};
use crate::mi::{mine_estimate, MiError, MiReport, MineConfig, MineNet};
use crate::models::{argmax_rows, ChannelObservation, DecoderModel, EncoderModel, EveClassifier, ModelError};
use crate::source::{NUM_COLORS, NUM_THICKNESSES};
use crate::training::{train_classifier, train_classifier_with, AuxConfig, BitWindow, Dataset, TrainError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Mi(#[from] MiError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid evaluation request: {0}")]
    Invalid(String),
}

/// Hard codewords `x ~ Bernoulli(p)` from a frozen encoder.
pub fn sample_codes<R: Rng + ?Sized>(encoder: &EncoderModel, images: &Tensor, rng: &mut R) -> Result<Tensor, EvalError> {
    let mut x = encoder.encode_frozen(images)?;
    for v in x.data_mut() {
        *v = f64::from(u8::from(rng.gen::<f64>() < *v));
    }
    Ok(x)
}

/// Passes hard codewords through one receiver's channel.
pub fn observe<R: Rng + ?Sized>(x: &Tensor, channel: &ChannelSpec, receiver: Receiver, rng: &mut R) -> Result<Tensor, EvalError> {
    let eps = channel.per_bit_epsilon(receiver);
    if x.cols() != eps.len() {
        return Err(EvalError::Invalid(format!("codewords of {} bits on a {}-bit channel", x.cols(), eps.len())));
    }
    let mut y = x.clone();
    for row in 0..y.rows() {
        for (v, &e) in y.row_mut(row).iter_mut().zip(&eps) {
            if rng.gen::<f64>() < e {
                *v = 1.0 - *v;
            }
        }
    }
    Ok(y)
}

/// One joint draw of `(Y_B, Y_E)` sharing the same codewords.
pub fn sample_wiretap<R: Rng + ?Sized>(
    encoder: &EncoderModel,
    images: &Tensor,
    channel: &ChannelSpec,
    rng: &mut R,
) -> Result<(Tensor, Tensor), EvalError> {
    let x = sample_codes(encoder, images, rng)?;
    let yb = observe(&x, channel, Receiver::Bob, rng)?;
    let ye = observe(&x, channel, Receiver::Eve, rng)?;
    Ok((yb, ye))
}

/// One receiver's observations of freshly sampled codewords.
pub fn sample_observations<R: Rng + ?Sized>(
    encoder: &EncoderModel,
    images: &Tensor,
    channel: &ChannelSpec,
    receiver: Receiver,
    rng: &mut R,
) -> Result<Tensor, EvalError> {
    let x = sample_codes(encoder, images, rng)?;
    observe(&x, channel, receiver, rng)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistortionReport {
    /// Summed squared error per image.
    pub per_image: f64,
    pub per_pixel: f64,
}

pub fn squared_error(images: &Tensor, recon: &Tensor) -> Result<DistortionReport, EvalError> {
    if images.shape() != recon.shape() || images.rows() == 0 {
        return Err(EvalError::Invalid(format!("images {:?} vs reconstructions {:?}", images.shape(), recon.shape())));
    }
    let total: f64 = images.data().iter().zip(recon.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    let per_image = total / images.rows() as f64;
    Ok(DistortionReport { per_image, per_pixel: per_image / images.cols() as f64 })
}

/// Reconstruction error of `decoder` on one receiver's hard observations.
pub fn test_distortion(
    encoder: &EncoderModel,
    decoder: &DecoderModel,
    data: &Dataset,
    channel: &ChannelSpec,
    receiver: Receiver,
    seed: u64,
) -> Result<DistortionReport, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = sample_observations(encoder, &data.images, channel, receiver, &mut rng)?;
    let recon = decoder.decode_frozen(&ChannelObservation::from_bits(y)?)?;
    squared_error(&data.images, &recon)
}

/// Distortion of the best constant image (the per-pixel dataset mean).
pub fn constant_predictor_distortion(data: &Dataset) -> Result<DistortionReport, EvalError> {
    let (rows, cols) = (data.images.rows(), data.images.cols());
    let mut mean = vec![0.0; cols];
    for i in 0..rows {
        for (m, v) in mean.iter_mut().zip(data.images.row(i)) {
            *m += v / rows as f64;
        }
    }
    let recon = Tensor::from_rows(&vec![mean; rows]).map_err(TrainError::from)?;
    squared_error(&data.images, &recon)
}

/// Classification accuracy on `T` and on its color and thickness parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdversaryReport {
    pub t_accuracy: f64,
    pub color_accuracy: f64,
    pub thickness_accuracy: f64,
}

/// Scores class probabilities over the nine `(color, thickness)` labels;
/// attribute predictions come from the marginalized probabilities.
pub fn attribute_accuracy(probs: &Tensor, labels: &[usize]) -> Result<AdversaryReport, EvalError> {
    let classes = NUM_COLORS * NUM_THICKNESSES;
    if probs.cols() != classes || probs.rows() != labels.len() || labels.is_empty() {
        return Err(EvalError::Invalid(format!("{:?} probabilities for {} labels", probs.shape(), labels.len())));
    }
    let n = labels.len() as f64;
    let mut hits = [0.0; 3];
    let argmax = |v: &[f64]| v.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &x)| if x > b.1 { (i, x) } else { b }).0;
    for (i, (&pred, &t)) in argmax_rows(probs).iter().zip(labels).enumerate() {
        let row = probs.row(i);
        let mut color = [0.0; NUM_COLORS];
        let mut thick = [0.0; NUM_THICKNESSES];
        for (k, &p) in row.iter().enumerate() {
            color[k / NUM_THICKNESSES] += p;
            thick[k % NUM_THICKNESSES] += p;
        }
        hits[0] += f64::from(u8::from(pred == t));
        hits[1] += f64::from(u8::from(argmax(&color) == t / NUM_THICKNESSES));
        hits[2] += f64::from(u8::from(argmax(&thick) == t % NUM_THICKNESSES));
    }
    Ok(AdversaryReport { t_accuracy: hits[0] / n, color_accuracy: hits[1] / n, thickness_accuracy: hits[2] / n })
}

fn restrict(y: Tensor, window: Option<BitWindow>) -> Tensor {
    match window {
        Some(w) => y.select_columns(w.start, w.end),
        None => y,
    }
}

/// Trains a fresh classifier on Eve's observations of frozen codes (new
/// channel noise each epoch), restricted to `window` when given, and scores
/// it on the test split.
pub fn retrained_adversary(
    encoder: &EncoderModel,
    train: &Dataset,
    test: &Dataset,
    channel: &ChannelSpec,
    window: Option<BitWindow>,
    cfg: &AuxConfig,
) -> Result<(EveClassifier, AdversaryReport), EvalError> {
    let width = window.map_or(encoder.n_bits(), |w| w.end - w.start);
    let p = encoder.encode_frozen(&train.images)?;
    let clf = train_classifier_with(width, &train.labels, train.classes, cfg, |_, rng| {
        let mut x = p.clone();
        for v in x.data_mut() {
            *v = f64::from(u8::from(rng.gen::<f64>() < *v));
        }
        observe(&x, channel, Receiver::Eve, rng).map(|y| restrict(y, window)).map_err(|e| match e {
            EvalError::Train(t) => t,
            other => TrainError::InvalidConfig(other.to_string()),
        })
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let y = restrict(sample_observations(encoder, &test.images, channel, Receiver::Eve, &mut rng)?, window);
    let probs = clf.classify_frozen(&ChannelObservation::from_bits(y)?)?;
    let report = attribute_accuracy(&probs, &test.labels)?;
    Ok((clf, report))
}

/// Trains a classifier on images (originals or reconstructions) and scores it on a test set.
pub fn image_classifier_accuracy(
    train_images: &Tensor,
    train_labels: &[usize],
    test_images: &Tensor,
    test_labels: &[usize],
    cfg: &AuxConfig,
) -> Result<AdversaryReport, EvalError> {
    let clf = train_classifier(train_images, train_labels, NUM_COLORS * NUM_THICKNESSES, cfg)?;
    let probs = clf.net.predict(test_images).map_err(ModelError::from)?;
    attribute_accuracy(&probs, test_labels)
}

/// Reconstructions of `data` by `decoder` from one draw of a receiver's observations.
pub fn reconstruct(
    encoder: &EncoderModel,
    decoder: &DecoderModel,
    images: &Tensor,
    channel: &ChannelSpec,
    receiver: Receiver,
    window: Option<BitWindow>,
    seed: u64,
) -> Result<Tensor, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = sample_observations(encoder, images, channel, receiver, &mut rng)?;
    let mut obs = ChannelObservation::from_bits(y)?;
    if let Some(w) = window {
        obs = obs.isolate_band(w.start, w.end);
    }
    Ok(decoder.decode_frozen(&obs)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeakageConfig {
    pub mine: MineConfig,
    /// Independent channel draws per test image.
    pub draws: usize,
    pub seed: u64,
}

impl Default for LeakageConfig {
    fn default() -> Self {
        Self { mine: MineConfig::default(), draws: 1, seed: 0 }
    }
}

/// MINE estimate of `I(T; Y_E)` in bits on held-out data, restricted to
/// `window` when given.
pub fn mine_leakage(
    encoder: &EncoderModel,
    data: &Dataset,
    channel: &ChannelSpec,
    window: Option<BitWindow>,
    cfg: &LeakageConfig,
) -> Result<MiReport, EvalError> {
    if cfg.draws == 0 {
        return Err(EvalError::Invalid("at least one channel draw is needed".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ys: Option<Tensor> = None;
    let mut labels = Vec::with_capacity(data.len() * cfg.draws);
    for _ in 0..cfg.draws {
        let y = restrict(sample_observations(encoder, &data.images, channel, Receiver::Eve, &mut rng)?, window);
        ys = Some(match ys {
            None => y,
            Some(prev) => prev.vstack(&y).map_err(TrainError::from)?,
        });
        labels.extend_from_slice(&data.labels);
    }
    let y = ys.expect("draws >= 1");
    let mut net = MineNet::new(y.cols(), data.classes, &cfg.mine.hidden, &mut rng)?;
    Ok(mine_estimate(&mut net, &labels, &y, &cfg.mine, &mut rng)?)
}
