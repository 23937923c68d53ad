//! Tiny explicit sources for exact mutual-information computations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SourceError;

pub const MAX_T_CARD: usize = 4;
pub const MAX_S_CARD: usize = 16;
pub const MAX_CODE_BITS: usize = 6;

const NORMALIZATION_TOL: f64 = 1e-12;

/// A joint table `P(T, S)` with an encoder table `P(X | S)` over `n`-bit codewords.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSystem {
    /// `joint[t][s]`.
    pub joint: Vec<Vec<f64>>,
    /// `encoder[s][x]`, with `x` the big-endian index of the codeword.
    pub encoder: Vec<Vec<f64>>,
    pub n: usize,
    /// Bit width of `S` when source symbols are bit strings (enables Hamming distortion).
    pub s_bits: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiscreteKind {
    /// `S` uniform over `m`-bit strings, `T` = bit `sensitive_bit` of `S`
    /// (bit 0 is the most significant), identity encoder into `n = m` bits.
    CorrelatedBits { m: usize, sensitive_bit: usize },
    /// Random joint and encoder tables drawn from a flat Dirichlet.
    Random { t_card: usize, s_card: usize, n: usize },
}

impl DiscreteSystem {
    pub fn new(
        joint: Vec<Vec<f64>>,
        encoder: Vec<Vec<f64>>,
        n: usize,
        s_bits: Option<usize>,
    ) -> Result<Self, SourceError> {
        let sys = Self { joint, encoder, n, s_bits };
        sys.validate()?;
        Ok(sys)
    }

    pub fn t_card(&self) -> usize {
        self.joint.len()
    }

    pub fn s_card(&self) -> usize {
        self.joint.first().map_or(0, Vec::len)
    }

    pub fn x_card(&self) -> usize {
        1 << self.n
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        let (t, s) = (self.t_card(), self.s_card());
        if t == 0 || t > MAX_T_CARD || s == 0 || s > MAX_S_CARD || self.n == 0 || self.n > MAX_CODE_BITS {
            return Err(SourceError::InvalidArgument(format!(
                "alphabet sizes |T|={t}, |S|={s}, n={} outside bounds ({MAX_T_CARD}, {MAX_S_CARD}, {MAX_CODE_BITS})",
                self.n
            )));
        }
        if self.joint.iter().any(|row| row.len() != s) {
            return Err(SourceError::InvalidArgument("ragged joint table".into()));
        }
        if self.joint.iter().flatten().any(|&p| !(p >= 0.0)) {
            return Err(SourceError::NotNormalized("joint has a negative entry".into()));
        }
        let total: f64 = self.joint.iter().flatten().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(SourceError::NotNormalized(format!("joint sums to {total}")));
        }
        self.validate_encoder(&self.encoder)?;
        if let Some(bits) = self.s_bits {
            if 1usize << bits != s {
                return Err(SourceError::InvalidArgument(format!("{bits}-bit source needs |S| = {}", 1 << bits)));
            }
        }
        Ok(())
    }

    pub fn validate_encoder(&self, encoder: &[Vec<f64>]) -> Result<(), SourceError> {
        if encoder.len() != self.s_card() {
            return Err(SourceError::InvalidArgument(format!(
                "encoder has {} rows, |S| = {}",
                encoder.len(),
                self.s_card()
            )));
        }
        for (s, row) in encoder.iter().enumerate() {
            if row.len() != self.x_card() || row.iter().any(|&p| !(p >= 0.0)) {
                return Err(SourceError::InvalidArgument(format!("encoder row {s} is malformed")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > NORMALIZATION_TOL {
                return Err(SourceError::NotNormalized(format!("encoder row {s} sums to {total}")));
            }
        }
        Ok(())
    }

    /// Replaces the encoder table.
    pub fn with_encoder(&self, encoder: Vec<Vec<f64>>) -> Result<Self, SourceError> {
        self.validate_encoder(&encoder)?;
        Ok(Self { encoder, ..self.clone() })
    }

    pub fn p_s(&self) -> Vec<f64> {
        (0..self.s_card()).map(|s| self.joint.iter().map(|row| row[s]).sum()).collect()
    }

    pub fn p_t(&self) -> Vec<f64> {
        self.joint.iter().map(|row| row.iter().sum()).collect()
    }

    /// Hamming distance between source symbols; symbol mismatch when `S` is not bit-valued.
    pub fn source_distance(&self, a: usize, b: usize) -> f64 {
        match self.s_bits {
            Some(_) => (a ^ b).count_ones() as f64,
            None => f64::from(u8::from(a != b)),
        }
    }
}

/// Flat-Dirichlet draw of `k` probabilities.
fn dirichlet<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln() + 1e-12).collect();
    normalize(draws)
}

/// Scales to sum one, folding the rounding residue into the largest entry.
pub fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    let residue = 1.0 - v.iter().sum::<f64>();
    if let Some(max) = v.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *max += residue;
    }
    v
}

pub fn make_discrete_system(kind: DiscreteKind, seed: u64) -> Result<DiscreteSystem, SourceError> {
    match kind {
        DiscreteKind::CorrelatedBits { m, sensitive_bit } => {
            if m == 0 || m > MAX_CODE_BITS || 1 << m > MAX_S_CARD || sensitive_bit >= m {
                return Err(SourceError::InvalidArgument(format!(
                    "correlated-bits system needs 1 <= m <= 4 and sensitive bit < m, got m={m}, bit={sensitive_bit}"
                )));
            }
            let s_card = 1usize << m;
            let p = 1.0 / s_card as f64;
            let mut joint = vec![vec![0.0; s_card]; 2];
            for s in 0..s_card {
                let t = (s >> (m - 1 - sensitive_bit)) & 1;
                joint[t][s] = p;
            }
            let encoder = (0..s_card).map(|s| (0..s_card).map(|x| f64::from(u8::from(x == s))).collect()).collect();
            DiscreteSystem::new(joint, encoder, m, Some(m))
        }
        DiscreteKind::Random { t_card, s_card, n } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let flat = dirichlet(t_card * s_card, &mut rng);
            let joint = flat.chunks(s_card).map(<[f64]>::to_vec).collect();
            let encoder = (0..s_card).map(|_| dirichlet(1 << n, &mut rng)).collect();
            DiscreteSystem::new(joint, encoder, n, None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entropy_bits(p: &[f64]) -> f64 {
        p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.log2()).sum()
    }

    #[test]
    fn correlated_bits_marginals() {
        let sys = make_discrete_system(DiscreteKind::CorrelatedBits { m: 2, sensitive_bit: 0 }, 0).unwrap();
        assert_eq!(sys.p_t(), vec![0.5, 0.5]);
        assert!((entropy_bits(&sys.p_t()) - 1.0).abs() < 1e-15);
        // T = most significant bit: s ∈ {0, 1} → t = 0
        assert_eq!(sys.joint[0], vec![0.25, 0.25, 0.0, 0.0]);
    }

    #[test]
    fn three_bit_source_has_three_bits_of_entropy() {
        let sys = make_discrete_system(DiscreteKind::CorrelatedBits { m: 3, sensitive_bit: 1 }, 0).unwrap();
        assert!((entropy_bits(&sys.p_s()) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn random_systems_are_normalized() {
        for seed in 0..50 {
            let sys = make_discrete_system(DiscreteKind::Random { t_card: 3, s_card: 5, n: 2 }, seed).unwrap();
            let total: f64 = sys.joint.iter().flatten().sum();
            assert!((total - 1.0).abs() < 1e-12);
            for row in &sys.encoder {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bounds_are_enforced() {
        assert!(make_discrete_system(DiscreteKind::Random { t_card: 5, s_card: 4, n: 2 }, 0).is_err());
        assert!(make_discrete_system(DiscreteKind::Random { t_card: 2, s_card: 4, n: 7 }, 0).is_err());
        assert!(make_discrete_system(DiscreteKind::CorrelatedBits { m: 2, sensitive_bit: 2 }, 0).is_err());
    }

    #[test]
    fn hamming_distance_on_bit_sources() {
        let sys = make_discrete_system(DiscreteKind::CorrelatedBits { m: 2, sensitive_bit: 0 }, 0).unwrap();
        assert_eq!(sys.source_distance(0b00, 0b11), 2.0);
        assert_eq!(sys.source_distance(0b01, 0b11), 1.0);
    }
}
