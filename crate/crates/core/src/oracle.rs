//! Exact optimization of the privacy-utility objective on small discrete
//! systems:
//!
//! ```text
//! J(E) = E[d(S, Ŝ_MAP(Y_B))] − I(S; Y_B) + λ I(T; Y_E)      (bits)
//! ```
//!
//! over stochastic encoders `E(x | s)` parameterized by row-wise softmax
//! logits. Gradient steps use a tempered MAP rule `w(ŝ | y) ∝ P(ŝ, y)^β`
//! whose sharpness `β` grows over the run; candidates are then scored with
//! the exact MAP objective and polished by trying deterministic rows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{Adam, AutodiffError, ParamStore, Tensor};
use crate::channel::{ChannelSpec, Receiver};
use crate::mi::{channel_matrix, mutual_information_bits, MiError, MAX_ENUMERATION};
use crate::source::{DiscreteSystem, SourceError};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Mi(#[from] MiError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid oracle request: {0}")]
    Invalid(String),
}

/// Logits of `E(x | s)`, one row per source symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularEncoder {
    pub logits: Vec<Vec<f64>>,
}

/// Logit given to excluded codewords of a deterministic row.
const OFF_LOGIT: f64 = -1000.0;

impl TabularEncoder {
    pub fn deterministic(map: &[usize], x_card: usize) -> Self {
        Self {
            logits: map
                .iter()
                .map(|&x| (0..x_card).map(|j| if j == x { 0.0 } else { OFF_LOGIT }).collect())
                .collect(),
        }
    }

    pub fn probabilities(&self) -> Vec<Vec<f64>> {
        self.logits.iter().map(|row| softmax(row)).collect()
    }
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Terms of the exact objective, in bits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveTerms {
    /// Expected source distortion under the MAP decoder.
    pub distortion: f64,
    /// `I(S; Y_B)`.
    pub utility: f64,
    /// `I(T; Y_E)`.
    pub leakage: f64,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrontierPoint {
    pub lambda: f64,
    pub terms: ObjectiveTerms,
    /// `E(x | s)` of the selected encoder.
    pub encoder: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleConfig {
    pub restarts: usize,
    pub steps: usize,
    pub lr: f64,
    /// Final sharpness of the tempered MAP rule (annealed from 1).
    pub beta_max: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { restarts: 16, steps: 600, lr: 0.05, beta_max: 32.0, init_scale: 2.0, seed: 0 }
    }
}

/// Cached channel matrices for one system.
struct Problem<'a> {
    sys: &'a DiscreteSystem,
    bob: Vec<Vec<f64>>,
    eve: Vec<Vec<f64>>,
    p_s: Vec<f64>,
    dist: Vec<Vec<f64>>,
}

impl<'a> Problem<'a> {
    fn new(sys: &'a DiscreteSystem, spec: &ChannelSpec) -> Result<Self, OracleError> {
        if spec.total_width() != sys.n {
            return Err(MiError::Dimension(format!("channel covers {} bits, codewords have {}", spec.total_width(), sys.n)).into());
        }
        let size = sys.s_card() * sys.x_card();
        if size > MAX_ENUMERATION {
            return Err(MiError::EnumerationBound { size, limit: MAX_ENUMERATION }.into());
        }
        let s = sys.s_card();
        Ok(Self {
            sys,
            bob: channel_matrix(spec, Receiver::Bob),
            eve: channel_matrix(spec, Receiver::Eve),
            p_s: sys.p_s(),
            dist: (0..s).map(|a| (0..s).map(|b| sys.source_distance(a, b)).collect()).collect(),
        })
    }

    /// `P(y | s)` for an encoder and channel.
    fn y_given_s(&self, enc: &[Vec<f64>], ch: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let ny = ch.len();
        enc.iter()
            .map(|row| {
                let mut out = vec![0.0; ny];
                for (x, &e) in row.iter().enumerate() {
                    if e > 0.0 {
                        for (o, &c) in out.iter_mut().zip(&ch[x]) {
                            *o += e * c;
                        }
                    }
                }
                out
            })
            .collect()
    }

    fn joints(&self, enc: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let yb = self.y_given_s(enc, &self.bob);
        let bob: Vec<Vec<f64>> = yb.iter().zip(&self.p_s).map(|(row, &p)| row.iter().map(|v| p * v).collect()).collect();
        let ye = self.y_given_s(enc, &self.eve);
        let eve: Vec<Vec<f64>> = self
            .sys
            .joint
            .iter()
            .map(|trow| {
                let mut out = vec![0.0; ye[0].len()];
                for (s, &pts) in trow.iter().enumerate() {
                    for (o, &v) in out.iter_mut().zip(&ye[s]) {
                        *o += pts * v;
                    }
                }
                out
            })
            .collect();
        (bob, eve)
    }

    fn map_distortion(&self, bob: &[Vec<f64>]) -> f64 {
        let ny = bob[0].len();
        let ns = bob.len();
        (0..ny)
            .map(|y| {
                let best = (0..ns).fold(0, |b, s| if bob[s][y] > bob[b][y] { s } else { b });
                (0..ns).map(|s| bob[s][y] * self.dist[s][best]).sum::<f64>()
            })
            .sum()
    }

    fn exact(&self, enc: &[Vec<f64>], lambda: f64) -> ObjectiveTerms {
        let (bob, eve) = self.joints(enc);
        let distortion = self.map_distortion(&bob);
        let utility = mutual_information_bits(&bob).max(0.0);
        let leakage = mutual_information_bits(&eve).max(0.0);
        ObjectiveTerms { distortion, utility, leakage, objective: distortion - utility + lambda * leakage }
    }

    /// Smooth surrogate value and its gradient with respect to the logits.
    fn surrogate(&self, logits: &[Vec<f64>], lambda: f64, beta: f64) -> (f64, Vec<Vec<f64>>) {
        let enc: Vec<Vec<f64>> = logits.iter().map(|r| softmax(r)).collect();
        let (bob, eve) = self.joints(&enc);
        let ns = bob.len();
        let ny = bob[0].len();
        let ln2 = std::f64::consts::LN_2;

        // d(D_β − I_B)/dQ_B(s, y)
        let mut g_bob = vec![vec![0.0; ny]; ns];
        let mut dist = 0.0;
        let qb_y: Vec<f64> = (0..ny).map(|y| (0..ns).map(|s| bob[s][y]).sum()).collect();
        for y in 0..ny {
            let logq: Vec<f64> = (0..ns).map(|s| if bob[s][y] > 0.0 { bob[s][y].ln() } else { f64::NEG_INFINITY }).collect();
            let lse = {
                let m = logq.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if m == f64::NEG_INFINITY {
                    continue;
                }
                m + logq.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
            };
            let w: Vec<f64> = logq.iter().map(|l| (beta * l - beta * lse).exp()).collect();
            // normalize the tempered weights exactly
            let zw: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|v| v / zw).collect();
            let cost: Vec<f64> = (0..ns).map(|sh| (0..ns).map(|s| bob[s][y] * self.dist[s][sh]).sum()).collect();
            let dy: f64 = w.iter().zip(&cost).map(|(a, b)| a * b).sum();
            dist += dy;
            for s in 0..ns {
                let direct: f64 = (0..ns).map(|sh| w[sh] * self.dist[s][sh]).sum();
                let w_over_q = if bob[s][y] > 0.0 { w[s] / bob[s][y] } else { 0.0 };
                g_bob[s][y] = direct + beta * w_over_q * (cost[s] - dy);
            }
        }
        let mut ib = 0.0;
        for s in 0..ns {
            for y in 0..ny {
                let q = bob[s][y];
                if q > 0.0 {
                    ib += q * (q / (self.p_s[s] * qb_y[y])).log2();
                    g_bob[s][y] -= (q.ln() - self.p_s[s].ln() - qb_y[y].ln() - 1.0) / ln2;
                }
            }
        }

        // λ dI_E/dR(t, y)
        let nt = eve.len();
        let pt: Vec<f64> = eve.iter().map(|r| r.iter().sum()).collect();
        let qe_y: Vec<f64> = (0..ny).map(|y| (0..nt).map(|t| eve[t][y]).sum()).collect();
        let mut ie = 0.0;
        let mut g_eve = vec![vec![0.0; ny]; nt];
        for t in 0..nt {
            for y in 0..ny {
                let r = eve[t][y];
                if r > 0.0 {
                    ie += r * (r / (pt[t] * qe_y[y])).log2();
                    g_eve[t][y] = lambda * (r.ln() - pt[t].ln() - qe_y[y].ln() - 1.0) / ln2;
                }
            }
        }

        // chain rule to E(x | s), then through the softmax
        let nx = enc[0].len();
        let mut grad = vec![vec![0.0; nx]; ns];
        for s in 0..ns {
            let ge: Vec<f64> = (0..ny).map(|y| (0..nt).map(|t| g_eve[t][y] * self.sys.joint[t][s]).sum()).collect();
            let mut g_e = vec![0.0; nx];
            for (x, g) in g_e.iter_mut().enumerate() {
                let b: f64 = self.bob[x].iter().zip(&g_bob[s]).map(|(c, g)| c * g).sum();
                let e: f64 = self.eve[x].iter().zip(&ge).map(|(c, g)| c * g).sum();
                *g = self.p_s[s] * b + e;
            }
            let mean: f64 = enc[s].iter().zip(&g_e).map(|(p, g)| p * g).sum();
            for x in 0..nx {
                grad[s][x] = enc[s][x] * (g_e[x] - mean);
            }
        }
        (dist - ib + lambda * ie, grad)
    }

    /// Coordinate search over deterministic rows while the exact objective improves.
    fn polish(&self, mut enc: Vec<Vec<f64>>, lambda: f64) -> (Vec<Vec<f64>>, ObjectiveTerms) {
        let nx = self.sys.x_card();
        let mut best = self.exact(&enc, lambda);
        for _ in 0..20 {
            let mut improved = false;
            for s in 0..enc.len() {
                for x in 0..nx {
                    let kept = std::mem::replace(&mut enc[s], (0..nx).map(|j| f64::from(u8::from(j == x))).collect());
                    let terms = self.exact(&enc, lambda);
                    if terms.objective < best.objective - 1e-12 {
                        best = terms;
                        improved = true;
                    } else {
                        enc[s] = kept;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        (enc, best)
    }
}

/// The exact objective at one encoder table `E(x | s)`.
pub fn exact_objective(
    sys: &DiscreteSystem,
    spec: &ChannelSpec,
    encoder: &[Vec<f64>],
    lambda: f64,
) -> Result<ObjectiveTerms, OracleError> {
    sys.validate_encoder(encoder)?;
    Ok(Problem::new(sys, spec)?.exact(encoder, lambda))
}

/// Surrogate value and logit gradient, exposed for derivative checks.
pub fn surrogate_objective(
    sys: &DiscreteSystem,
    spec: &ChannelSpec,
    encoder: &TabularEncoder,
    lambda: f64,
    beta: f64,
) -> Result<(f64, Vec<Vec<f64>>), OracleError> {
    let problem = Problem::new(sys, spec)?;
    if encoder.logits.len() != sys.s_card() || encoder.logits.iter().any(|r| r.len() != sys.x_card()) {
        return Err(OracleError::Invalid("logit table does not match the system".into()));
    }
    Ok(problem.surrogate(&encoder.logits, lambda, beta))
}

fn descend(problem: &Problem<'_>, init: Vec<Vec<f64>>, lambda: f64, cfg: &OracleConfig) -> Result<Vec<Vec<f64>>, OracleError> {
    let (ns, nx) = (init.len(), init[0].len());
    let mut store = ParamStore::new();
    store.insert("logits", Tensor::matrix(ns, nx, init.concat())?)?;
    let adam = Adam::with_lr(cfg.lr);
    for step in 0..cfg.steps {
        let frac = step as f64 / cfg.steps.max(1) as f64;
        let beta = cfg.beta_max.powf(frac);
        let logits: Vec<Vec<f64>> = store.entry(0).value().data().chunks(nx).map(<[f64]>::to_vec).collect();
        let (_, grad) = problem.surrogate(&logits, lambda, beta);
        store.entry_mut(0).grad_mut().data_mut().copy_from_slice(&grad.concat());
        adam.step(&mut store)?;
    }
    Ok(store.entry(0).value().data().chunks(nx).map(softmax).collect())
}

fn pick(cands: &[(Vec<Vec<f64>>, ObjectiveTerms)]) -> usize {
    let mut best = 0;
    for (i, (_, t)) in cands.iter().enumerate() {
        let b = &cands[best].1;
        if t.objective < b.objective - 1e-12 || (t.objective <= b.objective + 1e-12 && t.leakage < b.leakage) {
            best = i;
        }
    }
    best
}

/// Best of `cfg.restarts` random restarts at one λ.
pub fn optimize_exact(
    sys: &DiscreteSystem,
    spec: &ChannelSpec,
    lambda: f64,
    cfg: &OracleConfig,
) -> Result<FrontierPoint, OracleError> {
    let problem = Problem::new(sys, spec)?;
    let cands = restarts(&problem, lambda, cfg, cfg.seed)?;
    let (encoder, terms) = cands[pick(&cands)].clone();
    Ok(FrontierPoint { lambda, terms, encoder })
}

fn restarts(
    problem: &Problem<'_>,
    lambda: f64,
    cfg: &OracleConfig,
    seed: u64,
) -> Result<Vec<(Vec<Vec<f64>>, ObjectiveTerms)>, OracleError> {
    if !(lambda >= 0.0) || cfg.restarts == 0 {
        return Err(OracleError::Invalid(format!("need λ ≥ 0 and at least one restart, got λ = {lambda}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ns, nx) = (problem.sys.s_card(), problem.sys.x_card());
    let mut out = Vec::with_capacity(cfg.restarts);
    for _ in 0..cfg.restarts {
        let init: Vec<Vec<f64>> =
            (0..ns).map(|_| (0..nx).map(|_| rng.gen_range(-cfg.init_scale..=cfg.init_scale)).collect()).collect();
        let enc = descend(problem, init, lambda, cfg)?;
        out.push(problem.polish(enc, lambda));
    }
    Ok(out)
}

/// Frontier over a λ grid. Each λ runs its own restarts; every λ then
/// selects the best encoder among the candidates found at all grid points.
pub fn frontier_sweep(
    sys: &DiscreteSystem,
    spec: &ChannelSpec,
    lambdas: &[f64],
    cfg: &OracleConfig,
) -> Result<Vec<FrontierPoint>, OracleError> {
    let problem = Problem::new(sys, spec)?;
    let mut pool = Vec::new();
    for (i, &lambda) in lambdas.iter().enumerate() {
        for (enc, _) in restarts(&problem, lambda, cfg, cfg.seed.wrapping_add(i as u64))? {
            pool.push(enc);
        }
    }
    Ok(lambdas
        .iter()
        .map(|&lambda| {
            let scored: Vec<(Vec<Vec<f64>>, ObjectiveTerms)> =
                pool.iter().map(|enc| (enc.clone(), problem.exact(enc, lambda))).collect();
            let (encoder, terms) = scored[pick(&scored)].clone();
            FrontierPoint { lambda, terms, encoder }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::{make_discrete_system, DiscreteKind};

    #[test]
    fn identity_encoder_terms() {
        let sys = make_discrete_system(DiscreteKind::CorrelatedBits { m: 2, sensitive_bit: 0 }, 0).unwrap();
        let spec = ChannelSpec::single(2, 0.0, 0.0).unwrap();
        let t = exact_objective(&sys, &spec, &sys.encoder, 3.0).unwrap();
        assert_eq!(t.distortion, 0.0);
        assert!((t.utility - 2.0).abs() < 1e-12);
        assert!((t.leakage - 1.0).abs() < 1e-12);
        assert!((t.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn surrogate_gradient_matches_differences() {
        let sys = make_discrete_system(DiscreteKind::Random { t_card: 2, s_card: 3, n: 2 }, 4).unwrap();
        let spec = ChannelSpec::single(2, 0.1, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let enc = TabularEncoder { logits: (0..3).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect() };
        for beta in [1.0, 3.5] {
            let (_, g) = surrogate_objective(&sys, &spec, &enc, 2.0, beta).unwrap();
            for s in 0..3 {
                for x in 0..4 {
                    let h = 1e-6;
                    let mut up = enc.clone();
                    up.logits[s][x] += h;
                    let mut dn = enc.clone();
                    dn.logits[s][x] -= h;
                    let fd = (surrogate_objective(&sys, &spec, &up, 2.0, beta).unwrap().0
                        - surrogate_objective(&sys, &spec, &dn, 2.0, beta).unwrap().0)
                        / (2.0 * h);
                    assert!((fd - g[s][x]).abs() < 1e-6 * fd.abs().max(1.0), "beta {beta} ({s},{x}): {fd} vs {}", g[s][x]);
                }
            }
        }
    }
}
