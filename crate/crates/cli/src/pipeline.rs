//! Data loading, training and evaluation steps shared by the commands and
//! the acceptance suite. Every step is a pure function of the
//! configuration and an explicit seed.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use wiretap_core::channel::{BandSpec, ChannelSpec, Receiver};
use wiretap_core::evaluation::{
    constant_predictor_distortion, image_classifier_accuracy, mine_leakage, reconstruct, retrained_adversary,
    test_distortion, AdversaryReport,
};
use wiretap_core::source::{generate_glyphs, load_idx_and_colorize, GlyphSample};
use wiretap_core::training::{
    fit_with, train_eve_decoder, train_reconstructor, BitWindow, Dataset, JsccModels, TrainConfig, TrainError,
    TrainHistory, Trained,
};

use crate::config::{ExperimentConfig, SourceKind};
use crate::CliError;

/// Offsets separating the random streams of the evaluation steps.
const TEST_SPLIT_SEED: u64 = 0x7e57;
const MINE_SEED: u64 = 0x4d49;
const ADVERSARY_SEED: u64 = 0xad5;
const RECON_SEED: u64 = 0x2ec;

pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
    pub size: usize,
}

pub fn load_samples(cfg: &ExperimentConfig) -> Result<(Vec<GlyphSample>, Vec<GlyphSample>), CliError> {
    let d = &cfg.dataset;
    match d.kind {
        SourceKind::Glyphs => Ok((
            generate_glyphs(d.train, d.size, d.seed)?,
            generate_glyphs(d.test, d.size, d.seed ^ TEST_SPLIT_SEED)?,
        )),
        SourceKind::Idx => {
            let images = d.idx_images.as_deref().expect("validated");
            let labels = d.idx_labels.as_deref().expect("validated");
            let mut all = load_idx_and_colorize(images, labels, d.size, d.seed)?;
            if all.len() < d.train + d.test {
                return Err(CliError::Usage(format!(
                    "IDX files hold {} images, {} requested",
                    all.len(),
                    d.train + d.test
                )));
            }
            all.truncate(d.train + d.test);
            let test = all.split_off(d.train);
            Ok((all, test))
        }
    }
}

pub fn load_splits(cfg: &ExperimentConfig) -> Result<Splits, CliError> {
    let (train, test) = load_samples(cfg)?;
    Ok(Splits { train: Dataset::from_glyphs(&train)?, test: Dataset::from_glyphs(&test)?, size: cfg.dataset.size })
}

/// The configured channel with every band's Eve crossover set to `eps_e`.
pub fn with_eve_noise(channel: &ChannelSpec, eps_e: f64) -> Result<ChannelSpec, CliError> {
    let bands = channel
        .bands()
        .iter()
        .map(|b| BandSpec::new(b.width, b.epsilon_b, eps_e))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    ChannelSpec::new(bands).map_err(|e| CliError::Usage(e.to_string()))
}

/// Trains with `on_epoch` after every epoch. A failed run reports how far it got.
pub fn train<F>(cfg: &TrainConfig, data: &Splits, on_epoch: F) -> Result<Trained, (CliError, TrainHistory)>
where
    F: FnMut(usize, &JsccModels, &TrainHistory) -> Result<(), TrainError>,
{
    fit_with(cfg, &data.train, on_epoch).map_err(|abort| (abort.source.into(), abort.history))
}

/// Distortion, leakage and adversary accuracy of one trained model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellMetrics {
    pub bob_distortion: f64,
    pub mine_leakage_bits: f64,
    pub adversary: AdversaryReport,
}

pub fn evaluate_cell(
    cfg: &ExperimentConfig,
    models: &JsccModels,
    channel: &ChannelSpec,
    data: &Splits,
    seed: u64,
) -> Result<CellMetrics, CliError> {
    let bob = test_distortion(&models.encoder, &models.decoder, &data.test, channel, Receiver::Bob, seed)?;
    let leak = mine_leakage(&models.encoder, &data.test, channel, None, &cfg.leakage_config(seed ^ MINE_SEED))?;
    let (_, adversary) =
        retrained_adversary(&models.encoder, &data.train, &data.test, channel, None, &cfg.adversary_config(seed ^ ADVERSARY_SEED))?;
    Ok(CellMetrics { bob_distortion: bob.per_image, mine_leakage_bits: leak.value, adversary })
}

/// What a reconstruction-based attacker recovers, next to Bob.
pub struct ReconMetrics {
    pub eve_distortion: f64,
    pub constant_distortion: f64,
    /// Classifier trained and scored on Bob's reconstructions.
    pub bob_recon: AdversaryReport,
    /// Classifier trained and scored on Eve's decoder output.
    pub eve_recon: AdversaryReport,
    pub bob_test: Vec<Vec<f64>>,
    pub eve_test: Vec<Vec<f64>>,
}

pub fn evaluate_reconstructions(
    cfg: &ExperimentConfig,
    models: &JsccModels,
    channel: &ChannelSpec,
    data: &Splits,
    seed: u64,
) -> Result<ReconMetrics, CliError> {
    let seed = seed ^ RECON_SEED;
    let enc = &models.encoder;
    let eve_dec = train_eve_decoder(enc, &data.train, channel, &cfg.decoder_config(seed))?;
    let recon = |dec, images, receiver, k: u64| reconstruct(enc, dec, images, channel, receiver, None, seed.wrapping_add(k));
    let bob_train = recon(&models.decoder, &data.train.images, Receiver::Bob, 1)?;
    let bob_test = recon(&models.decoder, &data.test.images, Receiver::Bob, 2)?;
    let eve_train = recon(&eve_dec.0, &data.train.images, Receiver::Eve, 3)?;
    let eve_test = recon(&eve_dec.0, &data.test.images, Receiver::Eve, 4)?;
    let adv = cfg.adversary_config(seed);
    let bob_recon = image_classifier_accuracy(&bob_train, &data.train.labels, &bob_test, &data.test.labels, &adv)?;
    let eve_recon = image_classifier_accuracy(&eve_train, &data.train.labels, &eve_test, &data.test.labels, &adv)?;
    let eve_distortion = wiretap_core::evaluation::squared_error(&data.test.images, &eve_test)?.per_image;
    let rows = |t: &wiretap_core::autodiff::Tensor| (0..t.rows()).map(|i| t.row(i).to_vec()).collect();
    Ok(ReconMetrics {
        eve_distortion,
        constant_distortion: constant_predictor_distortion(&data.test)?.per_image,
        bob_recon,
        eve_recon,
        bob_test: rows(&bob_test),
        eve_test: rows(&eve_test),
    })
}

/// Eve's leakage and adversary accuracy restricted to one band.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandMetrics {
    pub band: usize,
    pub start: usize,
    pub end: usize,
    pub eps_b: f64,
    pub eps_e: f64,
    pub mine_leakage_bits: f64,
    pub adversary: AdversaryReport,
}

pub fn evaluate_bands(
    cfg: &ExperimentConfig,
    models: &JsccModels,
    channel: &ChannelSpec,
    data: &Splits,
    seed: u64,
) -> Result<Vec<BandMetrics>, CliError> {
    let mut out = Vec::new();
    for (k, (band, range)) in channel.bands().iter().zip(channel.band_ranges()).enumerate() {
        let window = Some(BitWindow { start: range.start, end: range.end });
        let s = seed.wrapping_add(k as u64);
        let leak = mine_leakage(&models.encoder, &data.test, channel, window, &cfg.leakage_config(s ^ MINE_SEED))?;
        let (_, adversary) = retrained_adversary(
            &models.encoder,
            &data.train,
            &data.test,
            channel,
            window,
            &cfg.adversary_config(s ^ ADVERSARY_SEED),
        )?;
        out.push(BandMetrics {
            band: k + 1,
            start: range.start,
            end: range.end,
            eps_b: band.epsilon_b,
            eps_e: band.epsilon_e,
            mine_leakage_bits: leak.value,
            adversary,
        });
    }
    Ok(out)
}

/// Bob's reconstructions of the first `count` test images from each band alone.
pub fn band_reconstructions(
    cfg: &ExperimentConfig,
    models: &JsccModels,
    channel: &ChannelSpec,
    data: &Splits,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>, CliError> {
    let images = data.test.images.select_rows(&(0..count.min(data.test.len())).collect::<Vec<_>>());
    let mut out = Vec::new();
    for (k, range) in channel.band_ranges().into_iter().enumerate() {
        let window = Some(BitWindow { start: range.start, end: range.end });
        let s = (seed ^ RECON_SEED).wrapping_add(100 + k as u64);
        let dec = train_reconstructor(&models.encoder, &data.train, channel, Receiver::Bob, window, &cfg.decoder_config(s))?;
        let r = reconstruct(&models.encoder, &dec, &images, channel, Receiver::Bob, window, s)?;
        out.push((0..r.rows()).map(|i| r.row(i).to_vec()).collect());
    }
    Ok(out)
}

/// Runs `f` over `items` on up to `jobs` threads; results keep input order.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                slots.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("threads joined").into_iter().map(|r| r.expect("every slot filled")).collect()
}
