//! Binary symmetric wiretap channel: likelihoods, bit-flip sampling and the
//! parallel-band generalization.
//!
//! Bob's and Eve's observations are drawn independently given the codeword.
//! Each band of a [`ChannelSpec`] covers a contiguous run of codeword bits
//! with its own `(epsilon_b, epsilon_e)` pair; a single channel is the
//! one-band case.

use std::ops::Range;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("crossover probability {0} outside [0, 0.5]")]
    EpsilonOutOfRange(f64),
    #[error("length mismatch: {left} vs {right} bits")]
    LengthMismatch { left: usize, right: usize },
    #[error("bit value {0} is not 0 or 1")]
    InvalidBit(u8),
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("band width must be positive")]
    EmptyBand,
    #[error("channel has no bands")]
    NoBands,
    #[error("observation impossible under a noiseless channel (log-likelihood is -inf)")]
    ImpossibleObservation,
}

pub fn check_epsilon(eps: f64) -> Result<(), ChannelError> {
    if (0.0..=0.5).contains(&eps) {
        Ok(())
    } else {
        Err(ChannelError::EpsilonOutOfRange(eps))
    }
}

/// Which receiver an observation belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Receiver {
    Bob,
    Eve,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandSpec {
    pub width: usize,
    pub epsilon_b: f64,
    pub epsilon_e: f64,
}

impl BandSpec {
    pub fn new(width: usize, epsilon_b: f64, epsilon_e: f64) -> Result<Self, ChannelError> {
        if width == 0 {
            return Err(ChannelError::EmptyBand);
        }
        check_epsilon(epsilon_b)?;
        check_epsilon(epsilon_e)?;
        Ok(Self { width, epsilon_b, epsilon_e })
    }

    pub fn epsilon(&self, receiver: Receiver) -> f64 {
        match receiver {
            Receiver::Bob => self.epsilon_b,
            Receiver::Eve => self.epsilon_e,
        }
    }
}

/// Ordered bands; their widths sum to the blocklength `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSpec {
    bands: Vec<BandSpec>,
}

impl ChannelSpec {
    pub fn new(bands: Vec<BandSpec>) -> Result<Self, ChannelError> {
        if bands.is_empty() {
            return Err(ChannelError::NoBands);
        }
        for b in &bands {
            BandSpec::new(b.width, b.epsilon_b, b.epsilon_e)?;
        }
        Ok(Self { bands })
    }

    /// One band over all `n` bits.
    pub fn single(n: usize, epsilon_b: f64, epsilon_e: f64) -> Result<Self, ChannelError> {
        Self::new(vec![BandSpec::new(n, epsilon_b, epsilon_e)?])
    }

    /// `count` equal-width bands from `(epsilon_b, epsilon_e)` pairs.
    pub fn equal_bands(n: usize, pairs: &[(f64, f64)]) -> Result<Self, ChannelError> {
        if pairs.is_empty() {
            return Err(ChannelError::NoBands);
        }
        let base = n / pairs.len();
        let extra = n % pairs.len();
        let bands = pairs
            .iter()
            .enumerate()
            .map(|(i, &(b, e))| BandSpec::new(base + usize::from(i < extra), b, e))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(bands)
    }

    pub fn bands(&self) -> &[BandSpec] {
        &self.bands
    }

    pub fn total_width(&self) -> usize {
        self.bands.iter().map(|b| b.width).sum()
    }

    /// Bit index range covered by each band.
    pub fn band_ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.bands
            .iter()
            .map(|b| {
                let r = start..start + b.width;
                start += b.width;
                r
            })
            .collect()
    }

    /// Crossover probability of every bit position for one receiver.
    pub fn per_bit_epsilon(&self, receiver: Receiver) -> Vec<f64> {
        self.bands.iter().flat_map(|b| std::iter::repeat(b.epsilon(receiver)).take(b.width)).collect()
    }

    /// Bob and Eve see the same crossover probability on every band.
    pub fn is_privacy_funnel(&self) -> bool {
        self.bands.iter().all(|b| b.epsilon_b == b.epsilon_e)
    }
}

/// A vector of bits; codewords and both receivers' observations share this type.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Codeword(Vec<u8>);

impl Codeword {
    pub fn new(bits: Vec<u8>) -> Result<Self, ChannelError> {
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(ChannelError::InvalidBit(b));
        }
        Ok(Self(bits))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    /// The `n`-bit big-endian representation of `value`.
    pub fn from_index(value: usize, n: usize) -> Self {
        Self((0..n).map(|i| ((value >> (n - 1 - i)) & 1) as u8).collect())
    }

    pub fn to_index(&self) -> usize {
        self.0.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn hamming_distance(&self, other: &Codeword) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(b)).collect()
    }
}

/// Passes `x` through a BSC, flipping each bit independently with probability `epsilon`.
pub fn bsc_sample<R: Rng + ?Sized>(x: &Codeword, epsilon: f64, rng: &mut R) -> Result<Codeword, ChannelError> {
    check_epsilon(epsilon)?;
    Ok(Codeword(x.0.iter().map(|&b| b ^ u8::from(rng.gen::<f64>() < epsilon)).collect()))
}

/// Natural-log likelihood `log P(y | x)` of a BSC with crossover `epsilon`.
pub fn bsc_log_likelihood(x: &Codeword, y: &Codeword, epsilon: f64) -> Result<f64, ChannelError> {
    check_epsilon(epsilon)?;
    if x.len() != y.len() {
        return Err(ChannelError::LengthMismatch { left: x.len(), right: y.len() });
    }
    let flips = x.hamming_distance(y);
    let keeps = x.len() - flips;
    if flips > 0 && epsilon == 0.0 {
        return Err(ChannelError::ImpossibleObservation);
    }
    let flip_term = if flips == 0 { 0.0 } else { flips as f64 * epsilon.ln() };
    Ok(flip_term + keeps as f64 * (1.0 - epsilon).ln())
}

/// Per-bit crossover version of [`bsc_log_likelihood`] used by band-structured channels.
pub fn banded_log_likelihood(x: &Codeword, y: &Codeword, per_bit_epsilon: &[f64]) -> Result<f64, ChannelError> {
    if x.len() != y.len() || x.len() != per_bit_epsilon.len() {
        return Err(ChannelError::LengthMismatch { left: x.len(), right: y.len().min(per_bit_epsilon.len()) });
    }
    let mut total = 0.0;
    for ((&a, &b), &eps) in x.bits().iter().zip(y.bits()).zip(per_bit_epsilon) {
        check_epsilon(eps)?;
        if a != b {
            if eps == 0.0 {
                return Err(ChannelError::ImpossibleObservation);
            }
            total += eps.ln();
        } else {
            total += (1.0 - eps).ln();
        }
    }
    Ok(total)
}

fn flip_bits<R: Rng + ?Sized>(x: &[u8], eps: &[f64], rng: &mut R) -> Vec<u8> {
    x.iter().zip(eps).map(|(&b, &e)| b ^ u8::from(rng.gen::<f64>() < e)).collect()
}

/// Draws Bob's and Eve's observations of `x`; Bob's draw comes first from the generator.
pub fn wiretap_sample<R: Rng + ?Sized>(
    x: &Codeword,
    spec: &ChannelSpec,
    rng: &mut R,
) -> Result<(Codeword, Codeword), ChannelError> {
    if x.len() != spec.total_width() {
        return Err(ChannelError::LengthMismatch { left: x.len(), right: spec.total_width() });
    }
    let yb = flip_bits(x.bits(), &spec.per_bit_epsilon(Receiver::Bob), rng);
    let ye = flip_bits(x.bits(), &spec.per_bit_epsilon(Receiver::Eve), rng);
    Ok((Codeword(yb), Codeword(ye)))
}

/// Output-bit probabilities of a BSC fed independent Bernoulli(`p_i`) bits:
/// `q_i = p_i (1 - eps) + (1 - p_i) eps`. The derivative `dq/dp` is `1 - 2 eps`.
pub fn relaxed_flip(p: &[f64], epsilon: f64) -> Result<Vec<f64>, ChannelError> {
    check_epsilon(epsilon)?;
    p.iter()
        .map(|&pi| {
            if !(0.0..=1.0).contains(&pi) {
                return Err(ChannelError::ProbabilityOutOfRange(pi));
            }
            Ok(pi * (1.0 - epsilon) + (1.0 - pi) * epsilon)
        })
        .collect()
}

/// Row-wise [`relaxed_flip`] over a `batch × n` block with per-bit crossover probabilities.
pub fn relaxed_flip_banded(p: &[f64], per_bit_epsilon: &[f64]) -> Result<Vec<f64>, ChannelError> {
    let n = per_bit_epsilon.len();
    if n == 0 || p.len() % n != 0 {
        return Err(ChannelError::LengthMismatch { left: p.len(), right: n });
    }
    for &e in per_bit_epsilon {
        check_epsilon(e)?;
    }
    p.chunks(n)
        .flat_map(|row| row.iter().zip(per_bit_epsilon))
        .map(|(&pi, &e)| {
            if !(0.0..=1.0).contains(&pi) {
                return Err(ChannelError::ProbabilityOutOfRange(pi));
            }
            Ok(pi * (1.0 - e) + (1.0 - pi) * e)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn word(bits: &[u8]) -> Codeword {
        Codeword::new(bits.to_vec()).unwrap()
    }

    #[test]
    fn noiseless_channel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = word(&[1, 0, 1, 1, 0, 0, 1]);
        assert_eq!(bsc_sample(&x, 0.0, &mut rng).unwrap(), x);
        let spec = ChannelSpec::single(7, 0.0, 0.0).unwrap();
        let (yb, ye) = wiretap_sample(&x, &spec, &mut rng).unwrap();
        assert_eq!((yb, ye), (x.clone(), x));
    }

    #[test]
    fn epsilon_range_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = word(&[0]);
        assert_eq!(bsc_sample(&x, 0.6, &mut rng), Err(ChannelError::EpsilonOutOfRange(0.6)));
        assert!(bsc_sample(&x, -0.1, &mut rng).is_err());
        assert!(BandSpec::new(4, 0.1, 0.51).is_err());
        assert!(relaxed_flip(&[0.5], 0.7).is_err());
    }

    #[test]
    fn log_likelihood_direct_values() {
        let ll = bsc_log_likelihood(&word(&[0, 1]), &word(&[0, 1]), 0.1).unwrap();
        assert!((ll - 2.0 * 0.9f64.ln()).abs() < 1e-15);
        let ll = bsc_log_likelihood(&word(&[0, 0]), &word(&[0, 1]), 0.1).unwrap();
        assert!((ll - (0.9f64 * 0.1).ln()).abs() < 1e-15);
    }

    #[test]
    fn log_likelihood_errors() {
        assert!(matches!(
            bsc_log_likelihood(&word(&[0]), &word(&[0, 1]), 0.1),
            Err(ChannelError::LengthMismatch { .. })
        ));
        assert_eq!(bsc_log_likelihood(&word(&[0]), &word(&[1]), 0.0), Err(ChannelError::ImpossibleObservation));
        assert_eq!(bsc_log_likelihood(&word(&[1]), &word(&[1]), 0.0), Ok(0.0));
    }

    #[test]
    fn likelihood_normalizes_over_all_outputs() {
        for n in 1..=6 {
            for eps in [0.0, 0.001, 0.1, 0.3, 0.5] {
                for xi in 0..1usize << n {
                    let x = Codeword::from_index(xi, n);
                    let total: f64 = (0..1usize << n)
                        .map(|yi| bsc_log_likelihood(&x, &Codeword::from_index(yi, n), eps).map_or(0.0, f64::exp))
                        .sum();
                    assert!((total - 1.0).abs() < 1e-12, "n={n} eps={eps} x={xi}: {total}");
                }
            }
        }
    }

    #[test]
    fn relaxed_flip_values() {
        assert_eq!(relaxed_flip(&[0.2, 0.9], 0.0).unwrap(), vec![0.2, 0.9]);
        assert_eq!(relaxed_flip(&[0.5, 0.5], 0.3).unwrap(), vec![0.5, 0.5]);
        assert!((relaxed_flip(&[1.0], 0.2).unwrap()[0] - 0.8).abs() < 1e-15);
        assert!(relaxed_flip(&[1.2], 0.2).is_err());
    }

    #[test]
    fn single_and_four_band_layouts() {
        let single = ChannelSpec::single(200, 0.1, 0.3).unwrap();
        assert_eq!(single.total_width(), 200);
        let four = ChannelSpec::equal_bands(200, &[(0.1, 0.1), (0.001, 0.2), (0.2, 0.001), (0.001, 0.001)]).unwrap();
        assert_eq!(four.band_ranges(), vec![0..50, 50..100, 100..150, 150..200]);
        let eve = four.per_bit_epsilon(Receiver::Eve);
        assert_eq!(eve[49], 0.1);
        assert_eq!(eve[50], 0.2);
        assert_eq!(eve[199], 0.001);
        assert!(!four.is_privacy_funnel());
        assert!(ChannelSpec::single(4, 0.2, 0.2).unwrap().is_privacy_funnel());
    }

    #[test]
    fn wiretap_rejects_wrong_length() {
        let spec = ChannelSpec::single(4, 0.1, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(wiretap_sample(&Codeword::zeros(3), &spec, &mut rng).is_err());
    }

    #[test]
    fn codeword_index_round_trip() {
        for v in 0..16 {
            assert_eq!(Codeword::from_index(v, 4).to_index(), v);
        }
        assert_eq!(Codeword::from_index(2, 3).bits(), &[0, 1, 0]);
        assert!(Codeword::new(vec![0, 2]).is_err());
    }
}
