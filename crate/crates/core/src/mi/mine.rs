//! Donsker–Varadhan neural estimator of `I(T; Y)` for a discrete label `T`.
//!
//! Training draws product-of-marginals pairs by shuffling labels inside each
//! batch and corrects the biased log-partition gradient with an exponential
//! moving average. The reported value is the DV bound on a held-out split,
//! where the marginal expectation is taken exactly over the empirical label
//! distribution, averaged over the final steps and clamped at zero.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::{Activation, Adam, LayerSpec, Network, Tensor};

use super::{MiError, MiMethod, MiReport};

pub const MIN_MINE_SAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct MineConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub ema_decay: f64,
    /// Number of final steps whose held-out estimates are averaged.
    pub smoothing_window: usize,
    pub holdout_fraction: f64,
}

impl Default for MineConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            epochs: 40,
            batch_size: 256,
            lr: 1e-3,
            ema_decay: 0.99,
            smoothing_window: 50,
            holdout_fraction: 0.2,
        }
    }
}

/// Statistics network `f(y, t)` over `[y, onehot(t)]`.
#[derive(Clone, Debug)]
pub struct MineNet {
    pub net: Network,
    classes: usize,
    y_width: usize,
}

impl MineNet {
    pub fn new<R: Rng + ?Sized>(y_width: usize, classes: usize, hidden: &[usize], rng: &mut R) -> Result<Self, MiError> {
        let mut layers: Vec<LayerSpec> = hidden.iter().map(|&w| LayerSpec::new(w, Activation::Relu)).collect();
        layers.push(LayerSpec::new(1, Activation::Identity));
        Ok(Self { net: Network::new(y_width + classes, &layers, rng)?, classes, y_width })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn y_width(&self) -> usize {
        self.y_width
    }

    fn inputs(&self, y: &Tensor, pairs: &[(usize, usize)]) -> Tensor {
        let width = self.y_width + self.classes;
        let mut data = vec![0.0; pairs.len() * width];
        for (row, &(yi, t)) in data.chunks_mut(width).zip(pairs) {
            row[..self.y_width].copy_from_slice(y.row(yi));
            row[self.y_width + t] = 1.0;
        }
        Tensor::matrix(pairs.len(), width, data).expect("sized above")
    }

    /// Held-out DV value in nats with the marginal term enumerated over classes.
    fn holdout_dv(&self, y: &Tensor, labels: &[usize], rows: &[usize], class_prob: &[f64]) -> Result<f64, MiError> {
        let k = self.classes;
        let pairs: Vec<(usize, usize)> = rows.iter().flat_map(|&i| (0..k).map(move |c| (i, c))).collect();
        let scores = self.net.predict(&self.inputs(y, &pairs))?;
        let s = scores.data();
        let joint = rows.iter().enumerate().map(|(r, &i)| s[r * k + labels[i]]).sum::<f64>() / rows.len() as f64;
        let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut marginal = 0.0;
        for r in 0..rows.len() {
            for (c, &pc) in class_prob.iter().enumerate() {
                marginal += pc * (s[r * k + c] - max).exp();
            }
        }
        Ok(joint - ((marginal / rows.len() as f64).ln() + max))
    }
}

/// Estimates `I(T; Y)` in bits from paired samples (`labels[i]`, row `i` of `y`).
pub fn mine_estimate<R: Rng + ?Sized>(
    net: &mut MineNet,
    labels: &[usize],
    y: &Tensor,
    cfg: &MineConfig,
    rng: &mut R,
) -> Result<MiReport, MiError> {
    let n = labels.len();
    if n < MIN_MINE_SAMPLES {
        return Err(MiError::TooFewSamples { needed: MIN_MINE_SAMPLES, got: n });
    }
    if y.rows() != n || y.cols() != net.y_width {
        return Err(MiError::Dimension(format!(
            "{n} labels with observations {:?}, network expects width {}",
            y.shape(),
            net.y_width
        )));
    }
    if let Some(&t) = labels.iter().find(|&&t| t >= net.classes) {
        return Err(MiError::Dimension(format!("label {t} outside {} classes", net.classes)));
    }
    if !(0.0..1.0).contains(&cfg.holdout_fraction) || cfg.batch_size < 2 {
        return Err(MiError::Dimension("holdout fraction must lie in [0, 1) and batches hold at least 2".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let held = ((n as f64) * cfg.holdout_fraction).round() as usize;
    let (holdout, train) = if held == 0 { (order.clone(), order) } else {
        let train = order.split_off(held);
        (order, train)
    };
    let mut class_prob = vec![0.0; net.classes];
    for &i in &holdout {
        class_prob[labels[i]] += 1.0 / holdout.len() as f64;
    }

    let batch = cfg.batch_size.min(train.len());
    let steps_per_epoch = train.len() / batch;
    let total_steps = cfg.epochs * steps_per_epoch;
    let window_start = total_steps.saturating_sub(cfg.smoothing_window.max(1));
    let adam = Adam::with_lr(cfg.lr);
    let mut ema: Option<f64> = None;
    let mut step = 0;
    let mut tail = Vec::new();
    let mut shuffled = train.clone();

    for _ in 0..cfg.epochs {
        shuffled.shuffle(rng);
        for chunk in shuffled.chunks_exact(batch) {
            let mut perm: Vec<usize> = chunk.to_vec();
            perm.shuffle(rng);
            let pairs: Vec<(usize, usize)> = chunk
                .iter()
                .map(|&i| (i, labels[i]))
                .chain(chunk.iter().zip(&perm).map(|(&i, &j)| (i, labels[j])))
                .collect();
            let scores = net.net.forward(&net.inputs(y, &pairs), true)?;
            let s = scores.data();
            if !scores.is_finite() || s.iter().any(|v| v.abs() > 500.0) {
                return Err(MiError::EstimationFailed(format!("statistics network diverged at step {step}")));
            }
            let b = batch as f64;
            let exp_m: Vec<f64> = s[batch..].iter().map(|v| v.exp()).collect();
            let mean_exp = exp_m.iter().sum::<f64>() / b;
            let avg = match ema {
                None => mean_exp,
                Some(prev) => cfg.ema_decay * prev + (1.0 - cfg.ema_decay) * mean_exp,
            };
            ema = Some(avg);
            // minimize -DV; the marginal gradient uses the averaged partition
            let mut grad = vec![-1.0 / b; 2 * batch];
            for (g, e) in grad[batch..].iter_mut().zip(&exp_m) {
                *g = e / (b * avg);
            }
            net.net.backward(&Tensor::matrix(2 * batch, 1, grad)?)?;
            adam.step(net.net.params_mut())?;
            if step >= window_start {
                tail.push(net.holdout_dv(y, labels, &holdout, &class_prob)?);
            }
            step += 1;
        }
    }
    if tail.is_empty() {
        tail.push(net.holdout_dv(y, labels, &holdout, &class_prob)?);
    }
    let raw = tail.iter().sum::<f64>() / tail.len() as f64 / std::f64::consts::LN_2;
    if raw.is_nan() {
        return Err(MiError::EstimationFailed("estimate is NaN".into()));
    }
    Ok(MiReport { value: raw.max(0.0), method: MiMethod::Mine, sample_count: n, auxiliary: Some(raw) })
}
