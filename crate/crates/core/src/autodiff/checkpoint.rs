//! Versioned text dump of named tensors plus string metadata.
//!
//! ```text
//! wiretap-checkpoint 1
//! meta <key> <value...>
//! tensor <name> <dim> [<dim>...]
//! <value> <value> ...
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! load reproduces every bit of the saved weights.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::{AutodiffError, Network, Tensor};

pub const CHECKPOINT_MAGIC: &str = "wiretap-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.meta.insert(key.into(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Adds every parameter of `net` under `prefix/`.
    pub fn add_network(&mut self, prefix: &str, net: &Network) {
        for e in net.params().entries() {
            self.tensors.push((format!("{prefix}/{}", e.name()), e.value().clone()));
        }
    }

    /// Overwrites the parameters of `net` from tensors stored under `prefix/`.
    pub fn load_network(&self, prefix: &str, net: &mut Network) -> Result<(), AutodiffError> {
        for e in net.params_mut().entries_mut() {
            let key = format!("{prefix}/{}", e.name());
            let t = self.tensor(&key).ok_or_else(|| AutodiffError::Checkpoint(format!("missing tensor {key}")))?;
            if t.shape() != e.value().shape() {
                return Err(AutodiffError::Checkpoint(format!(
                    "tensor {key} has shape {:?}, network expects {:?}",
                    t.shape(),
                    e.value().shape()
                )));
            }
            *e.value_mut() = t.clone();
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), AutodiffError> {
        writeln!(w, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}")?;
        for (k, v) in &self.meta {
            if k.contains(char::is_whitespace) || v.contains('\n') {
                return Err(AutodiffError::Checkpoint(format!("unwritable metadata entry {k:?}")));
            }
            writeln!(w, "meta {k} {v}")?;
        }
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            writeln!(w, "tensor {name} {}", dims.join(" "))?;
            let values: Vec<String> = t.data().iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", values.join(" "))?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, AutodiffError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| AutodiffError::Checkpoint("empty checkpoint".into()))??;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(CHECKPOINT_MAGIC) {
            return Err(AutodiffError::Checkpoint("not a checkpoint file".into()));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| AutodiffError::Checkpoint("missing checkpoint version".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(AutodiffError::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
        }
        let mut ckpt = Checkpoint::new();
        while let Some(line) = lines.next() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ckpt.meta.insert(k.to_string(), v.to_string());
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let mut fields = rest.split_whitespace();
                let name = fields.next().ok_or_else(|| AutodiffError::Checkpoint("tensor without name".into()))?;
                let shape = fields
                    .map(|d| d.parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| AutodiffError::Checkpoint(format!("bad shape for {name}: {e}")))?;
                let body = lines
                    .next()
                    .ok_or_else(|| AutodiffError::Checkpoint(format!("truncated values for {name}")))??;
                let data = body
                    .split_whitespace()
                    .map(|v| v.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| AutodiffError::Checkpoint(format!("bad value in {name}: {e}")))?;
                ckpt.tensors.push((name.to_string(), Tensor::new(shape, data)?));
            } else {
                return Err(AutodiffError::Checkpoint(format!("unexpected line: {line}")));
            }
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Activation, LayerSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn network_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let specs = [LayerSpec::new(7, Activation::Relu), LayerSpec::new(3, Activation::Sigmoid)];
        let net = Network::new(4, &specs, &mut rng).unwrap();
        let mut ckpt = Checkpoint::new();
        ckpt.set_meta("lambda", 20.0);
        ckpt.add_network("enc", &net);
        let mut buf = Vec::new();
        ckpt.write_to(&mut buf).unwrap();

        let loaded = Checkpoint::read_from(buf.as_slice()).unwrap();
        assert_eq!(loaded, ckpt);
        let mut other = Network::new(4, &specs, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        loaded.load_network("enc", &mut other).unwrap();
        for (a, b) in net.params().entries().iter().zip(other.params().entries()) {
            let ab: Vec<u64> = a.value().data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.value().data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let text = format!("{CHECKPOINT_MAGIC} 99\n");
        let err = Checkpoint::read_from(text.as_bytes()).unwrap_err();
        assert!(matches!(err, AutodiffError::VersionMismatch { found: 99, .. }));
    }

    #[test]
    fn shape_mismatch_on_load_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Network::new(4, &[LayerSpec::new(2, Activation::Identity)], &mut rng).unwrap();
        let mut ckpt = Checkpoint::new();
        ckpt.add_network("n", &net);
        let mut wider = Network::new(5, &[LayerSpec::new(2, Activation::Identity)], &mut rng).unwrap();
        assert!(ckpt.load_network("n", &mut wider).is_err());
    }
}
