//! Exact information quantities by full enumeration of
//! `P(T, S) · P(X | S) · P(Y | X)` on small discrete systems.

use crate::channel::{ChannelSpec, Receiver};
use crate::source::DiscreteSystem;

use super::{MiError, MiMethod, MiReport};

/// Largest `|S| · 2^n` handled by enumeration.
pub const MAX_ENUMERATION: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MiTarget {
    /// `I(S; Y_B)`.
    SourceBob,
    /// `I(T; Y_E)`, the leakage.
    LabelEve,
    /// `I(X; Y_E)`.
    CodeEve,
    /// `I(S; Y_E)`.
    SourceEve,
    /// `I(T; Y_B)`.
    LabelBob,
    /// `I(X; Y_B)`.
    CodeBob,
}

impl MiTarget {
    pub fn receiver(self) -> Receiver {
        match self {
            MiTarget::SourceBob | MiTarget::LabelBob | MiTarget::CodeBob => Receiver::Bob,
            _ => Receiver::Eve,
        }
    }
}

pub fn entropy_bits(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.log2()).sum()
}

/// Binary entropy in bits.
pub fn h2(eps: f64) -> f64 {
    entropy_bits(&[eps, 1.0 - eps])
}

/// `I(A; Y)` in bits from a joint table `joint[a][y]`.
pub fn mutual_information_bits(joint: &[Vec<f64>]) -> f64 {
    let pa: Vec<f64> = joint.iter().map(|row| row.iter().sum()).collect();
    let ny = joint.first().map_or(0, Vec::len);
    let py: Vec<f64> = (0..ny).map(|y| joint.iter().map(|row| row[y]).sum()).collect();
    let mut total = 0.0;
    for (a, row) in joint.iter().enumerate() {
        for (y, &p) in row.iter().enumerate() {
            if p > 0.0 {
                total += p * (p / (pa[a] * py[y])).log2();
            }
        }
    }
    total
}

fn check_size(sys: &DiscreteSystem, spec: &ChannelSpec) -> Result<(), MiError> {
    if spec.total_width() != sys.n {
        return Err(MiError::Dimension(format!("channel covers {} bits, codewords have {}", spec.total_width(), sys.n)));
    }
    let size = sys.s_card() * sys.x_card();
    if size > MAX_ENUMERATION {
        return Err(MiError::EnumerationBound { size, limit: MAX_ENUMERATION });
    }
    Ok(())
}

/// `P(y | x)` for every pair of `n`-bit words, `matrix[x][y]`.
pub fn channel_matrix(spec: &ChannelSpec, receiver: Receiver) -> Vec<Vec<f64>> {
    let eps = spec.per_bit_epsilon(receiver);
    let n = eps.len();
    let size = 1usize << n;
    (0..size)
        .map(|x| {
            (0..size)
                .map(|y| {
                    let diff = x ^ y;
                    (0..n)
                        .map(|i| {
                            // bit i counted from the most significant end
                            if (diff >> (n - 1 - i)) & 1 == 1 {
                                eps[i]
                            } else {
                                1.0 - eps[i]
                            }
                        })
                        .product()
                })
                .collect()
        })
        .collect()
}

/// `P(s, y)` for one receiver with the system's encoder.
pub fn joint_source_output(sys: &DiscreteSystem, spec: &ChannelSpec, receiver: Receiver) -> Vec<Vec<f64>> {
    let ch = channel_matrix(spec, receiver);
    let ps = sys.p_s();
    let nx = sys.x_card();
    (0..sys.s_card())
        .map(|s| {
            let mut row = vec![0.0; nx];
            for (x, &e) in sys.encoder[s].iter().enumerate() {
                if e == 0.0 {
                    continue;
                }
                for (y, &c) in ch[x].iter().enumerate() {
                    row[y] += ps[s] * e * c;
                }
            }
            row
        })
        .collect()
}

/// `P(t, y)` for one receiver.
pub fn joint_label_output(sys: &DiscreteSystem, spec: &ChannelSpec, receiver: Receiver) -> Vec<Vec<f64>> {
    let ch = channel_matrix(spec, receiver);
    let nx = sys.x_card();
    // P(y | s) first, then mix with P(t, s)
    let y_given_s: Vec<Vec<f64>> = sys
        .encoder
        .iter()
        .map(|row| {
            let mut out = vec![0.0; nx];
            for (x, &e) in row.iter().enumerate() {
                for (y, &c) in ch[x].iter().enumerate() {
                    out[y] += e * c;
                }
            }
            out
        })
        .collect();
    sys.joint
        .iter()
        .map(|trow| {
            let mut out = vec![0.0; nx];
            for (s, &pts) in trow.iter().enumerate() {
                for (y, &v) in y_given_s[s].iter().enumerate() {
                    out[y] += pts * v;
                }
            }
            out
        })
        .collect()
}

/// `P(x, y)` for one receiver.
pub fn joint_code_output(sys: &DiscreteSystem, spec: &ChannelSpec, receiver: Receiver) -> Vec<Vec<f64>> {
    let ch = channel_matrix(spec, receiver);
    let ps = sys.p_s();
    let nx = sys.x_card();
    let px: Vec<f64> = (0..nx).map(|x| (0..sys.s_card()).map(|s| ps[s] * sys.encoder[s][x]).sum()).collect();
    px.iter().zip(&ch).map(|(&p, row)| row.iter().map(|&c| p * c).collect()).collect()
}

/// The joint table `P(a, y)` behind one [`MiTarget`].
pub fn joint_for(sys: &DiscreteSystem, spec: &ChannelSpec, which: MiTarget) -> Result<Vec<Vec<f64>>, MiError> {
    check_size(sys, spec)?;
    let r = which.receiver();
    Ok(match which {
        MiTarget::SourceBob | MiTarget::SourceEve => joint_source_output(sys, spec, r),
        MiTarget::LabelBob | MiTarget::LabelEve => joint_label_output(sys, spec, r),
        MiTarget::CodeBob | MiTarget::CodeEve => joint_code_output(sys, spec, r),
    })
}

pub fn exact_mi(sys: &DiscreteSystem, spec: &ChannelSpec, which: MiTarget) -> Result<MiReport, MiError> {
    let joint = joint_for(sys, spec, which)?;
    let value = mutual_information_bits(&joint).max(0.0);
    Ok(MiReport { value, method: MiMethod::Exact, sample_count: 0, auxiliary: None })
}

/// True posterior `P(a | y)` as a table `[y][a]`; uniform where `P(y) = 0`.
pub fn posterior(joint: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let na = joint.len();
    let ny = joint.first().map_or(0, Vec::len);
    (0..ny)
        .map(|y| {
            let py: f64 = joint.iter().map(|row| row[y]).sum();
            (0..na).map(|a| if py > 0.0 { joint[a][y] / py } else { 1.0 / na as f64 }).collect()
        })
        .collect()
}

/// Exact variational bound `H(A) + E[log q(A | Y)]` in bits for a tabular
/// model `q[y][a]`.
pub fn tabular_bound(joint: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    let pa: Vec<f64> = joint.iter().map(|row| row.iter().sum()).collect();
    let mut expected_log = 0.0;
    for (a, row) in joint.iter().enumerate() {
        for (y, &p) in row.iter().enumerate() {
            if p > 0.0 {
                expected_log += p * q[y][a].log2();
            }
        }
    }
    entropy_bits(&pa) + expected_log
}
