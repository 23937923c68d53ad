//! Adversarial training of the encoder/decoder pair against Eve's classifier.
//!
//! The per-batch objective, in nats per image, is
//!
//! ```text
//! L = D − w · E[ln f_dec(S | Y_B)] + λ · (H(T) + E[ln f_eve(T | Y_E)])
//! ```
//!
//! where `D` is the mean squared error per pixel and `w` is `mi_weight`.
//! Channel outputs are drawn as hard bits `y ~ Bernoulli(q)` with
//! `q = p (1 − ε) + (1 − p) ε`, and the sample is passed straight through in
//! the backward pass, so `∂y/∂p = 1 − 2ε` per bit.

use std::f64::consts::LN_2;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{Adam, AutodiffError, Checkpoint, ParamStore, Parameterized, Tensor};
use crate::channel::{relaxed_flip_banded, BandSpec, ChannelError, ChannelSpec, Receiver};
use crate::mi::{entropy_bits, PROB_CLAMP};
use crate::models::{
    argmax_rows, ChannelObservation, DecoderModel, EncoderModel, EveClassifier, EveDecoder, ModelConfig, ModelError,
};
use crate::source::{GlyphSample, NUM_T_CLASSES};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite {term} at epoch {epoch}")]
    NonFinite { term: &'static str, epoch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Images flattened to rows, with their sensitive labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self, TrainError> {
        if images.rows() != labels.len() {
            return Err(TrainError::InvalidConfig(format!("{} images, {} labels", images.rows(), labels.len())));
        }
        if let Some(&t) = labels.iter().find(|&&t| t >= classes) {
            return Err(TrainError::InvalidConfig(format!("label {t} outside {classes} classes")));
        }
        Ok(Self { images, labels, classes })
    }

    pub fn from_glyphs(samples: &[GlyphSample]) -> Result<Self, TrainError> {
        let first = samples.first().ok_or(TrainError::EmptyDataset)?;
        let width = first.pixels.len();
        let mut data = Vec::with_capacity(samples.len() * width);
        for s in samples {
            if s.pixels.len() != width {
                return Err(TrainError::InvalidConfig("glyphs of mixed sizes".into()));
            }
            data.extend_from_slice(&s.pixels);
        }
        let images = Tensor::matrix(samples.len(), width, data)?;
        Self::new(images, samples.iter().map(|s| usize::from(s.t_label)).collect(), NUM_T_CLASSES)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_len(&self) -> usize {
        self.images.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            images: self.images.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// Empirical `H(T)` in nats.
    pub fn label_entropy(&self) -> f64 {
        let mut p = vec![0.0; self.classes];
        for &t in &self.labels {
            p[t] += 1.0 / self.len() as f64;
        }
        entropy_bits(&p) * LN_2
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub channel: ChannelSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub eve_steps: usize,
    pub seed: u64,
    pub lr: f64,
    pub eve_lr: f64,
    /// Weight `w` of the decoder log-likelihood term.
    pub mi_weight: f64,
    pub model: ModelConfig,
}

impl TrainConfig {
    /// 200 epochs, batch 128, learning rate 1e-3, 5 Eve steps per main step.
    pub fn new(channel: ChannelSpec, model: ModelConfig) -> Self {
        Self {
            lambda: 0.0,
            channel,
            epochs: 200,
            batch_size: 128,
            eve_steps: 5,
            seed: 0,
            lr: 1e-3,
            eve_lr: 1e-3,
            mi_weight: 1.0,
            model,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::InvalidConfig(msg));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be a nonnegative number, got {}", self.lambda));
        }
        if self.eve_steps == 0 {
            return bad("eve_steps must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr > 0.0) || !(self.eve_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(self.mi_weight >= 0.0) || !self.mi_weight.is_finite() {
            return bad(format!("mi_weight must be nonnegative, got {}", self.mi_weight));
        }
        if self.channel.total_width() != self.model.n_bits {
            return bad(format!(
                "channel covers {} bits but the encoder emits {}",
                self.channel.total_width(),
                self.model.n_bits
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct JsccModels {
    pub encoder: EncoderModel,
    pub decoder: DecoderModel,
    pub eve: EveClassifier,
}

impl JsccModels {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self, TrainError> {
        Ok(Self {
            encoder: EncoderModel::new(cfg, rng)?,
            decoder: DecoderModel::new(cfg, rng)?,
            eve: EveClassifier::new(cfg, rng)?,
        })
    }
}

/// The encoder and decoder stores, in that order; Eve is excluded.
impl Parameterized for JsccModels {
    fn param_stores(&self) -> Vec<&ParamStore> {
        vec![self.encoder.net.params(), self.decoder.net.params()]
    }

    fn param_stores_mut(&mut self) -> Vec<&mut ParamStore> {
        vec![self.encoder.net.params_mut(), self.decoder.net.params_mut()]
    }
}

/// Channel noise for one batch, stored as offsets `y − q` from the relaxed
/// probabilities it was drawn at.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseDraw {
    pub bob: Tensor,
    pub eve: Tensor,
}

pub enum NoiseMode<'a> {
    /// Fresh hard samples.
    Sample,
    /// `y = q + offset` with a frozen offset: a continuous function of the
    /// parameters whose derivative matches the straight-through gradient.
    Replay(&'a NoiseDraw),
}

/// One batch's loss terms; all per image, in nats except `distortion`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    /// Mean squared error per pixel (the optimized distortion term).
    pub distortion: f64,
    /// Summed squared error per image.
    pub distortion_per_image: f64,
    /// `E[ln f_dec(S | Y_B)]`.
    pub decoder_ll: f64,
    /// `H(T) + E[ln f_eve(T | Y_E)]`.
    pub eve_bound: f64,
    pub total: f64,
    pub eve_accuracy: f64,
}

fn finite(term: &'static str, v: f64, epoch: usize) -> Result<f64, TrainError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(TrainError::NonFinite { term, epoch })
    }
}

fn relaxed(p: &Tensor, eps: &[f64]) -> Result<Tensor, TrainError> {
    Ok(Tensor::new(p.shape().to_vec(), relaxed_flip_banded(p.data(), eps)?)?)
}

fn bernoulli<R: Rng + ?Sized>(q: &Tensor, rng: &mut R) -> Tensor {
    let mut y = q.clone();
    for v in y.data_mut() {
        *v = f64::from(u8::from(rng.gen::<f64>() < *v));
    }
    y
}

fn with_offset(q: &Tensor, offset: &Tensor) -> Result<Tensor, TrainError> {
    if q.shape() != offset.shape() {
        return Err(TrainError::InvalidConfig(format!("noise {:?} vs batch {:?}", offset.shape(), q.shape())));
    }
    let mut y = q.clone();
    y.add_assign(offset);
    Ok(y)
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Draws a [`NoiseDraw`] for `images` at the encoder's current parameters.
pub fn draw_noise<R: Rng + ?Sized>(
    images: &Tensor,
    models: &JsccModels,
    channel: &ChannelSpec,
    rng: &mut R,
) -> Result<NoiseDraw, TrainError> {
    let p = models.encoder.encode_frozen(images)?;
    let mut draw = |r: Receiver| -> Result<Tensor, TrainError> {
        let q = relaxed(&p, &channel.per_bit_epsilon(r))?;
        let mut b = bernoulli(&q, rng);
        for (bv, qv) in b.data_mut().iter_mut().zip(q.data()) {
            *bv -= qv;
        }
        Ok(b)
    };
    let bob = draw(Receiver::Bob)?;
    let eve = draw(Receiver::Eve)?;
    Ok(NoiseDraw { bob, eve })
}

/// Evaluates the objective on one batch and overwrites the encoder and
/// decoder gradients with its derivative. Eve's parameters and gradients are
/// left untouched.
pub fn total_loss<R: Rng + ?Sized>(
    images: &Tensor,
    labels: &[usize],
    models: &mut JsccModels,
    cfg: &TrainConfig,
    h_t: f64,
    noise: NoiseMode<'_>,
    rng: &mut R,
) -> Result<LossBreakdown, TrainError> {
    let batch = images.rows();
    if batch == 0 || labels.len() != batch {
        return Err(TrainError::InvalidConfig(format!("batch of {batch} images with {} labels", labels.len())));
    }
    let b = batch as f64;
    let eps_b = cfg.channel.per_bit_epsilon(Receiver::Bob);
    let eps_e = cfg.channel.per_bit_epsilon(Receiver::Eve);
    models.encoder.net.params_mut().zero_grad();
    models.decoder.net.params_mut().zero_grad();

    let p = models.encoder.encode(images, true)?;
    let q_b = relaxed(&p, &eps_b)?;
    let q_e = relaxed(&p, &eps_e)?;
    let (y_b, y_e) = match noise {
        NoiseMode::Sample => (bernoulli(&q_b, rng), bernoulli(&q_e, rng)),
        NoiseMode::Replay(d) => (with_offset(&q_b, &d.bob)?, with_offset(&q_e, &d.eve)?),
    };

    let recon = models.decoder.net.forward(&y_b, true)?;
    let pixels = images.cols() as f64;
    let mut sq = 0.0;
    let mut ll = 0.0;
    let mut g_recon = Tensor::zeros(recon.shape());
    for ((g, &r), &s) in g_recon.data_mut().iter_mut().zip(recon.data()).zip(images.data()) {
        let d = r - s;
        sq += d * d;
        let rc = clamp_prob(r);
        ll += s * rc.ln() + (1.0 - s) * (1.0 - rc).ln();
        let dll = if rc == r { s / r - (1.0 - s) / (1.0 - r) } else { 0.0 };
        *g = 2.0 * d / (b * pixels) - cfg.mi_weight * dll / b;
    }
    let distortion = sq / (b * pixels);
    let decoder_ll = ll / b;

    let probs = models.eve.net.forward(&y_e, true)?;
    let mut eve_ll = 0.0;
    let mut g_probs = Tensor::zeros(probs.shape());
    for (i, &t) in labels.iter().enumerate() {
        let f = probs.row(i)[t];
        let fc = clamp_prob(f);
        eve_ll += fc.ln();
        if fc == f {
            g_probs.row_mut(i)[t] = cfg.lambda / (b * f);
        }
    }
    let eve_accuracy =
        argmax_rows(&probs).iter().zip(labels).filter(|(a, t)| a == t).count() as f64 / b;
    let eve_bound = h_t + eve_ll / b;
    finite("distortion", distortion, 0)?;
    finite("decoder bound", decoder_ll, 0)?;
    finite("eve bound", eve_bound, 0)?;
    let g_ye = models.eve.net.input_gradient(&g_probs)?;
    models.eve.net.clear_tape();

    let g_yb = models.decoder.net.backward(&g_recon)?;
    let n = eps_b.len();
    let mut g_p = g_yb;
    for (j, (gp, ge)) in g_p.data_mut().iter_mut().zip(g_ye.data()).enumerate() {
        let k = j % n;
        *gp = (1.0 - 2.0 * eps_b[k]) * *gp + (1.0 - 2.0 * eps_e[k]) * ge;
    }
    models.encoder.net.backward(&g_p)?;

    let total = distortion - cfg.mi_weight * decoder_ll + cfg.lambda * eve_bound;
    Ok(LossBreakdown {
        distortion,
        distortion_per_image: sq / b,
        decoder_ll,
        eve_bound,
        total,
        eve_accuracy,
    })
}

/// Result of one Eve update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EveStep {
    /// Cross-entropy before the update, nats.
    pub loss: f64,
    pub accuracy: f64,
}

/// Eve's observations `y ~ Bernoulli(q_E)` for precomputed encoder probabilities.
fn eve_observation<R: Rng + ?Sized>(p: &Tensor, channel: &ChannelSpec, rng: &mut R) -> Result<Tensor, TrainError> {
    Ok(bernoulli(&relaxed(p, &channel.per_bit_epsilon(Receiver::Eve))?, rng))
}

/// One cross-entropy descent step for a classifier on fixed inputs.
pub fn classifier_step(
    clf: &mut EveClassifier,
    inputs: &Tensor,
    labels: &[usize],
    adam: &Adam,
) -> Result<EveStep, TrainError> {
    let b = labels.len() as f64;
    let probs = clf.net.forward(inputs, true)?;
    let mut grad = Tensor::zeros(probs.shape());
    let mut loss = 0.0;
    for (i, &t) in labels.iter().enumerate() {
        let f = probs.row(i)[t];
        let fc = clamp_prob(f);
        loss -= fc.ln() / b;
        if fc == f {
            grad.row_mut(i)[t] = -1.0 / (b * f);
        }
    }
    let accuracy = argmax_rows(&probs).iter().zip(labels).filter(|(a, t)| a == t).count() as f64 / b;
    clf.net.params_mut().zero_grad();
    clf.net.backward(&grad)?;
    clf.net.clear_tape();
    adam.step(clf.net.params_mut())?;
    Ok(EveStep { loss, accuracy })
}

/// One ascent step on `E[ln f_eve(t | y_E)]` with the encoder frozen.
pub fn eve_step<R: Rng + ?Sized>(
    images: &Tensor,
    labels: &[usize],
    models: &mut JsccModels,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<EveStep, TrainError> {
    let p = models.encoder.encode_frozen(images)?;
    let y_e = eve_observation(&p, &cfg.channel, rng)?;
    classifier_step(&mut models.eve, &y_e, labels, &Adam::with_lr(cfg.eve_lr))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub distortion_per_image: f64,
    pub decoder_ll: f64,
    pub eve_bound: f64,
    pub total: f64,
    pub eve_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// A failed run with the epochs completed before the failure.
#[derive(Debug, Error)]
#[error("{source} (after {} completed epochs)", history.len())]
pub struct TrainAbort {
    #[source]
    pub source: TrainError,
    pub history: TrainHistory,
}

pub struct Trained {
    pub models: JsccModels,
    pub history: TrainHistory,
}

pub fn fit(cfg: &TrainConfig, data: &Dataset) -> Result<Trained, TrainAbort> {
    fit_with(cfg, data, |_, _, _| Ok(()))
}

/// [`fit`] with a callback after every epoch (checkpointing, logging).
pub fn fit_with<F>(cfg: &TrainConfig, data: &Dataset, mut on_epoch: F) -> Result<Trained, TrainAbort>
where
    F: FnMut(usize, &JsccModels, &TrainHistory) -> Result<(), TrainError>,
{
    let mut history = TrainHistory::default();
    let abort = |source: TrainError, history: &TrainHistory| TrainAbort { source, history: history.clone() };
    cfg.validate().map_err(|e| abort(e, &history))?;
    if data.is_empty() {
        return Err(abort(TrainError::EmptyDataset, &history));
    }
    if data.image_len() != cfg.model.image_len {
        return Err(abort(
            TrainError::InvalidConfig(format!("images have {} values, model expects {}", data.image_len(), cfg.model.image_len)),
            &history,
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut models = JsccModels::new(&cfg.model, &mut rng).map_err(|e| abort(e, &history))?;
    let h_t = data.label_entropy();
    let main = Adam::with_lr(cfg.lr);
    let eve_adam = Adam::with_lr(cfg.eve_lr);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0; 5];
        let mut batches = 0.0;
        let run = (|| -> Result<(), TrainError> {
            for chunk in order.chunks(cfg.batch_size) {
                let images = data.images.select_rows(chunk);
                let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
                let p = models.encoder.encode_frozen(&images)?;
                let mut eve_acc = 0.0;
                for _ in 0..cfg.eve_steps {
                    let y_e = eve_observation(&p, &cfg.channel, &mut rng)?;
                    let step = classifier_step(&mut models.eve, &y_e, &labels, &eve_adam)?;
                    finite("eve cross-entropy", step.loss, epoch)?;
                    eve_acc = step.accuracy;
                }
                let loss = total_loss(&images, &labels, &mut models, cfg, h_t, NoiseMode::Sample, &mut rng).map_err(|e| match e {
                    TrainError::NonFinite { term, .. } => TrainError::NonFinite { term, epoch },
                    other => other,
                })?;
                finite("total loss", loss.total, epoch)?;
                main.step(models.encoder.net.params_mut())?;
                main.step(models.decoder.net.params_mut())?;
                for (s, v) in sums.iter_mut().zip([
                    loss.distortion_per_image,
                    loss.decoder_ll,
                    loss.eve_bound,
                    loss.total,
                    eve_acc,
                ]) {
                    *s += v;
                }
                batches += 1.0;
            }
            Ok(())
        })();
        run.map_err(|e| abort(e, &history))?;
        history.records.push(EpochRecord {
            epoch,
            distortion_per_image: sums[0] / batches,
            decoder_ll: sums[1] / batches,
            eve_bound: sums[2] / batches,
            total: sums[3] / batches,
            eve_accuracy: sums[4] / batches,
        });
        on_epoch(epoch, &models, &history).map_err(|e| abort(e, &history))?;
    }
    Ok(Trained { models, history })
}

/// Settings for auxiliary networks trained on a frozen encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for AuxConfig {
    fn default() -> Self {
        Self { hidden: vec![256], epochs: 30, batch_size: 128, lr: 1e-3, seed: 0 }
    }
}

/// Which bits a reconstruction network sees; bits outside `[start, end)` are fed 0.5.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitWindow {
    pub start: usize,
    pub end: usize,
}

/// Trains a decoder from one receiver's hard observations of a frozen
/// encoder, minimizing squared error per pixel. Fresh channel noise is drawn
/// every epoch.
pub fn train_reconstructor(
    encoder: &EncoderModel,
    data: &Dataset,
    channel: &ChannelSpec,
    receiver: Receiver,
    window: Option<BitWindow>,
    cfg: &AuxConfig,
) -> Result<DecoderModel, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model_cfg = ModelConfig {
        image_len: data.image_len(),
        n_bits: encoder.n_bits(),
        t_classes: data.classes,
        encoder_hidden: vec![],
        decoder_hidden: cfg.hidden.clone(),
        eve_hidden: vec![],
    };
    let mut dec = DecoderModel::new(&model_cfg, &mut rng)?;
    // starts from uniform gray
    dec.net.zero_last_layer();
    let p = encoder.encode_frozen(&data.images)?;
    let q = relaxed(&p, &channel.per_bit_epsilon(receiver))?;
    let adam = Adam::with_lr(cfg.lr);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let pixels = data.image_len() as f64;
    for epoch in 0..cfg.epochs {
        let mut y = bernoulli(&q, &mut rng);
        if let Some(w) = window {
            y = ChannelObservation::from_bits(y)?.isolate_band(w.start, w.end).tensor().clone();
        }
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let target = data.images.select_rows(chunk);
            let recon = dec.net.forward(&y.select_rows(chunk), true)?;
            let scale = 2.0 / (chunk.len() as f64 * pixels);
            let mut grad = recon.clone();
            for (g, &s) in grad.data_mut().iter_mut().zip(target.data()) {
                *g = scale * (*g - s);
            }
            finite("reconstruction error", grad.sum(), epoch)?;
            dec.net.params_mut().zero_grad();
            dec.net.backward(&grad)?;
            dec.net.clear_tape();
            adam.step(dec.net.params_mut())?;
        }
    }
    Ok(dec)
}

/// Eve's illustrative decoder: a reconstruction network on `Y_E`.
pub fn train_eve_decoder(
    encoder: &EncoderModel,
    data: &Dataset,
    channel: &ChannelSpec,
    cfg: &AuxConfig,
) -> Result<EveDecoder, TrainError> {
    Ok(EveDecoder(train_reconstructor(encoder, data, channel, Receiver::Eve, None, cfg)?))
}

/// Trains a fresh classifier on fixed inputs.
pub fn train_classifier(inputs: &Tensor, labels: &[usize], classes: usize, cfg: &AuxConfig) -> Result<EveClassifier, TrainError> {
    train_classifier_with(inputs.cols(), labels, classes, cfg, |_, _| Ok(inputs.clone()))
}

/// Trains a fresh classifier whose inputs are regenerated every epoch by
/// `inputs(epoch, rng)` (fresh channel noise on frozen codes).
pub fn train_classifier_with<F>(
    width: usize,
    labels: &[usize],
    classes: usize,
    cfg: &AuxConfig,
    mut inputs: F,
) -> Result<EveClassifier, TrainError>
where
    F: FnMut(usize, &mut ChaCha8Rng) -> Result<Tensor, TrainError>,
{
    if labels.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut clf = EveClassifier::with_input(width, &cfg.hidden, classes, &mut rng)?;
    let adam = Adam::with_lr(cfg.lr);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    for epoch in 0..cfg.epochs {
        let x = inputs(epoch, &mut rng)?;
        if x.rows() != labels.len() || x.cols() != width {
            return Err(TrainError::InvalidConfig(format!("classifier inputs {:?} for {} labels", x.shape(), labels.len())));
        }
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let step = classifier_step(&mut clf, &x.select_rows(chunk), &y, &adam)?;
            finite("classifier cross-entropy", step.loss, epoch)?;
        }
    }
    Ok(clf)
}

/// Serializes the trained networks and their configuration.
pub fn save_models<W: Write>(models: &JsccModels, cfg: &TrainConfig, out: W) -> Result<(), TrainError> {
    let mut ck = Checkpoint::new();
    ck.set_meta("lambda", cfg.lambda);
    ck.set_meta("seed", cfg.seed);
    ck.set_meta("image_len", cfg.model.image_len);
    ck.set_meta("n_bits", cfg.model.n_bits);
    ck.set_meta("t_classes", cfg.model.t_classes);
    let widths = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    ck.set_meta("encoder_hidden", widths(&cfg.model.encoder_hidden));
    ck.set_meta("decoder_hidden", widths(&cfg.model.decoder_hidden));
    ck.set_meta("eve_hidden", widths(&cfg.model.eve_hidden));
    let bands: Vec<String> =
        cfg.channel.bands().iter().map(|b| format!("{}:{}:{}", b.width, b.epsilon_b, b.epsilon_e)).collect();
    ck.set_meta("bands", bands.join(","));
    ck.add_network("encoder", &models.encoder.net);
    ck.add_network("decoder", &models.decoder.net);
    ck.add_network("eve", &models.eve.net);
    Ok(ck.write_to(out)?)
}

/// Loads networks written by [`save_models`], returning them with the
/// model widths, channel and λ recorded in the file.
pub fn load_models<R: BufRead>(input: R) -> Result<(JsccModels, ModelConfig, ChannelSpec, f64), TrainError> {
    let ck = Checkpoint::read_from(input)?;
    let meta = |k: &str| ck.meta(k).ok_or_else(|| TrainError::Checkpoint(format!("missing meta {k}")));
    let num = |k: &str| -> Result<usize, TrainError> {
        meta(k)?.parse().map_err(|_| TrainError::Checkpoint(format!("bad meta {k}")))
    };
    let widths = |k: &str| -> Result<Vec<usize>, TrainError> {
        let v = meta(k)?;
        if v.is_empty() {
            return Ok(vec![]);
        }
        v.split(',').map(|w| w.parse().map_err(|_| TrainError::Checkpoint(format!("bad meta {k}")))).collect()
    };
    let model = ModelConfig {
        image_len: num("image_len")?,
        n_bits: num("n_bits")?,
        t_classes: num("t_classes")?,
        encoder_hidden: widths("encoder_hidden")?,
        decoder_hidden: widths("decoder_hidden")?,
        eve_hidden: widths("eve_hidden")?,
    };
    let bands = meta("bands")?
        .split(',')
        .map(|b| {
            let parts: Vec<&str> = b.split(':').collect();
            let bad = || TrainError::Checkpoint(format!("bad band {b}"));
            if parts.len() != 3 {
                return Err(bad());
            }
            let width = parts[0].parse().map_err(|_| bad())?;
            let eb = parts[1].parse().map_err(|_| bad())?;
            let ee = parts[2].parse().map_err(|_| bad())?;
            Ok(BandSpec::new(width, eb, ee)?)
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let channel = ChannelSpec::new(bands)?;
    let lambda: f64 = meta("lambda")?.parse().map_err(|_| TrainError::Checkpoint("bad meta lambda".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut models = JsccModels::new(&model, &mut rng)?;
    ck.load_network("encoder", &mut models.encoder.net)?;
    ck.load_network("decoder", &mut models.decoder.net)?;
    ck.load_network("eve", &mut models.eve.net)?;
    Ok((models, model, channel, lambda))
}
