//! Cross-entropy lower bounds from trained decoders, in bits.

use crate::autodiff::Tensor;
use crate::models::{ChannelObservation, DecoderModel, EveClassifier, ModelError};

use super::{MiError, MiMethod, MiReport};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Per-row `Σ_j [s_j ln ŝ_j + (1 - s_j) ln(1 - ŝ_j)]` in nats.
pub fn bernoulli_log_likelihood(targets: &Tensor, recon: &Tensor) -> Result<Vec<f64>, MiError> {
    if targets.shape() != recon.shape() {
        return Err(MiError::Dimension(format!("targets {:?} vs reconstruction {:?}", targets.shape(), recon.shape())));
    }
    Ok((0..targets.rows())
        .map(|i| {
            targets.row(i).iter().zip(recon.row(i)).map(|(&s, &r)| {
                let r = clamp(r);
                s * r.ln() + (1.0 - s) * (1.0 - r).ln()
            }).sum()
        })
        .collect())
}

/// Per-row `ln f(t_i)` in nats with the clamp applied.
pub fn categorical_log_likelihood(probs: &Tensor, labels: &[usize]) -> Result<Vec<f64>, MiError> {
    if probs.rows() != labels.len() {
        return Err(MiError::Dimension(format!("{} rows vs {} labels", probs.rows(), labels.len())));
    }
    labels
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            probs.row(i).get(t).map(|&p| clamp(p).ln()).ok_or_else(|| {
                MiError::Dimension(format!("label {t} outside {} classes", probs.cols()))
            })
        })
        .collect()
}

/// `E[log f_dec(S | Y_B)]` in bits: the decoder's lower bound on
/// `I(S; Y_B)` up to the constant `H(S)`.
pub fn decoder_ce_bound(dec: &DecoderModel, images: &Tensor, y_b: &ChannelObservation) -> Result<MiReport, MiError> {
    let recon = dec.decode_frozen(y_b)?;
    let ll = bernoulli_log_likelihood(images, &recon)?;
    let value = ll.iter().sum::<f64>() / ll.len().max(1) as f64 / std::f64::consts::LN_2;
    Ok(MiReport { value, method: MiMethod::DecoderBound, sample_count: ll.len(), auxiliary: None })
}

/// `H(T) + E[log f_eve(T | Y_E)]` in bits, a lower bound on `I(T; Y_E)`.
pub fn eve_ce_bound(
    eve: &EveClassifier,
    labels: &[usize],
    y_e: &ChannelObservation,
    h_t_bits: f64,
) -> Result<MiReport, MiError> {
    let probs = eve.classify_frozen(y_e).map_err(ModelError::from)?;
    let ll = categorical_log_likelihood(&probs, labels)?;
    let value = h_t_bits + ll.iter().sum::<f64>() / ll.len().max(1) as f64 / std::f64::consts::LN_2;
    Ok(MiReport { value, method: MiMethod::EveBound, sample_count: ll.len(), auxiliary: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamped_perfect_reconstruction() {
        let s = Tensor::from_rows(&[vec![0.0, 1.0, 1.0, 0.0]]).unwrap();
        let ll = bernoulli_log_likelihood(&s, &s).unwrap();
        assert!((ll[0] - 4.0 * (1.0 - PROB_CLAMP).ln()).abs() < 1e-18);
    }

    #[test]
    fn half_reconstruction_costs_one_bit_per_pixel() {
        let s = Tensor::from_rows(&[vec![0.0, 1.0, 1.0]]).unwrap();
        let ll = bernoulli_log_likelihood(&s, &Tensor::filled(&[1, 3], 0.5)).unwrap();
        assert!((ll[0] / std::f64::consts::LN_2 + 3.0).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        let probs = Tensor::filled(&[1, 3], 1.0 / 3.0);
        assert!(categorical_log_likelihood(&probs, &[3]).is_err());
        assert!(categorical_log_likelihood(&probs, &[0, 1]).is_err());
    }
}
