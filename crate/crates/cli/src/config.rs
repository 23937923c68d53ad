//! Experiment configuration: a TOML file with one table per section, every
//! field optional. Command-line flags are applied on top with
//! [`ExperimentConfig::apply_overrides`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wiretap_core::channel::{BandSpec, ChannelSpec};
use wiretap_core::evaluation::LeakageConfig;
use wiretap_core::mi::MineConfig;
use wiretap_core::models::ModelConfig;
use wiretap_core::oracle::OracleConfig;
use wiretap_core::training::{AuxConfig, TrainConfig};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Glyphs,
    Idx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: SourceKind,
    pub size: usize,
    pub train: usize,
    pub test: usize,
    pub seed: u64,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self { kind: SourceKind::Glyphs, size: 16, train: 9000, test: 2000, seed: 0, idx_images: None, idx_labels: None }
    }
}

/// One band as `[width, eps_b, eps_e]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandTriple(pub usize, pub f64, pub f64);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub bands: Vec<BandTriple>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self { bands: vec![BandTriple(200, 0.1, 0.3)] }
    }
}

impl ChannelSection {
    pub fn spec(&self) -> Result<ChannelSpec, CliError> {
        let bands = self
            .bands
            .iter()
            .map(|b| BandSpec::new(b.0, b.1, b.2))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Usage(format!("channel: {e}")))?;
        ChannelSpec::new(bands).map_err(|e| CliError::Usage(format!("channel: {e}")))
    }

    pub fn total_width(&self) -> usize {
        self.bands.iter().map(|b| b.0).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub eve_steps: usize,
    pub seed: u64,
    pub lr: f64,
    pub eve_lr: f64,
    pub mi_weight: f64,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub eve_hidden: Vec<usize>,
    /// Write a checkpoint every this many epochs (0 disables intermediate checkpoints).
    pub checkpoint_every: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            epochs: 200,
            batch_size: 128,
            eve_steps: 5,
            seed: 0,
            lr: 1e-3,
            eve_lr: 1e-3,
            mi_weight: 1.0,
            encoder_hidden: vec![256],
            decoder_hidden: vec![256],
            eve_hidden: vec![128],
            checkpoint_every: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub mine_hidden: Vec<usize>,
    pub mine_epochs: usize,
    pub mine_batch_size: usize,
    pub mine_lr: f64,
    /// Channel draws per test image fed to MINE.
    pub mine_draws: usize,
    pub adversary_hidden: Vec<usize>,
    pub adversary_epochs: usize,
    pub adversary_lr: f64,
    /// Reconstruction networks (Eve decoder, per-band decoders).
    pub decoder_hidden: Vec<usize>,
    pub decoder_epochs: usize,
    /// Test images shown per grid row.
    pub grid_columns: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            mine_hidden: vec![128, 128],
            mine_epochs: 60,
            mine_batch_size: 256,
            mine_lr: 1e-3,
            mine_draws: 5,
            adversary_hidden: vec![256],
            adversary_epochs: 30,
            adversary_lr: 1e-3,
            decoder_hidden: vec![256],
            decoder_epochs: 30,
            grid_columns: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub lambdas: Vec<f64>,
    pub eps_e: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Cells trained concurrently.
    pub jobs: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { lambdas: vec![0.0, 5.0, 10.0, 20.0], eps_e: vec![0.0, 0.2, 0.3], seeds: vec![0], jobs: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    /// Bits of the correlated-bits source.
    pub m: usize,
    pub sensitive_bit: usize,
    pub eps_b: f64,
    pub eps_e: f64,
    pub lambdas: Vec<f64>,
    pub restarts: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            m: 2,
            sensitive_bit: 1,
            eps_b: 0.0,
            eps_e: 0.0,
            lambdas: vec![0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0],
            restarts: 16,
            steps: 600,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Subdirectory of the output root; defaults to the command name.
    pub dir: Option<PathBuf>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub channel: ChannelSection,
    pub training: TrainingSection,
    pub evaluation: EvaluationSection,
    pub sweep: SweepSection,
    pub oracle: OracleSection,
    pub output: OutputSection,
}

/// Flag values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub lambdas: Vec<f64>,
    pub eps_b: Option<f64>,
    pub eps_e: Vec<f64>,
    pub bands: Option<Vec<BandTriple>>,
}

/// Parses `width:eps_b:eps_e` triples separated by commas.
pub fn parse_bands(s: &str) -> Result<Vec<BandTriple>, CliError> {
    s.split(',')
        .map(|band| {
            let bad = || CliError::Usage(format!("band {band:?} is not width:eps_b:eps_e"));
            let parts: Vec<&str> = band.trim().split(':').collect();
            if parts.len() != 3 {
                return Err(bad());
            }
            Ok(BandTriple(
                parts[0].parse().map_err(|_| bad())?,
                parts[1].parse().map_err(|_| bad())?,
                parts[2].parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Applies flags. A single `--lambda` or `--eps-e` value sets the
    /// training and oracle fields; lists always set the sweep grid.
    pub fn apply_overrides(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(seed) = o.seed {
            self.training.seed = seed;
            self.oracle.seed = seed;
            self.sweep.seeds = vec![seed];
        }
        if !o.lambdas.is_empty() {
            self.sweep.lambdas = o.lambdas.clone();
            self.oracle.lambdas = o.lambdas.clone();
            if let [l] = o.lambdas[..] {
                self.training.lambda = l;
            }
        }
        if let Some(bands) = &o.bands {
            self.channel.bands = bands.clone();
        }
        if !o.eps_e.is_empty() {
            self.sweep.eps_e = o.eps_e.clone();
        }
        let single_eps_e = match o.eps_e[..] {
            [e] => Some(e),
            _ => None,
        };
        if o.eps_b.is_some() || single_eps_e.is_some() {
            if self.channel.bands.len() != 1 && o.bands.is_none() {
                return Err(CliError::Usage("--eps-b/--eps-e apply to single-band channels; use --bands".into()));
            }
            if o.bands.is_none() {
                let b = &mut self.channel.bands[0];
                if let Some(eb) = o.eps_b {
                    b.1 = eb;
                }
                if let Some(ee) = single_eps_e {
                    b.2 = ee;
                }
            }
            if let Some(eb) = o.eps_b {
                self.oracle.eps_b = eb;
            }
            if let Some(ee) = single_eps_e {
                self.oracle.eps_e = ee;
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        self.channel.spec()?;
        if self.dataset.size < 8 {
            return usage(format!("dataset.size must be at least 8, got {}", self.dataset.size));
        }
        if self.dataset.train == 0 || self.dataset.test == 0 {
            return usage("dataset.train and dataset.test must be positive".into());
        }
        if self.dataset.kind == SourceKind::Idx && (self.dataset.idx_images.is_none() || self.dataset.idx_labels.is_none()) {
            return usage("dataset.kind = \"idx\" needs idx_images and idx_labels".into());
        }
        for e in self.sweep.eps_e.iter().chain([&self.oracle.eps_b, &self.oracle.eps_e]) {
            if !(0.0..=0.5).contains(e) {
                return usage(format!("crossover probability {e} outside [0, 0.5]"));
            }
        }
        if self.sweep.lambdas.iter().chain(&self.oracle.lambdas).chain([&self.training.lambda]).any(|l| !(*l >= 0.0)) {
            return usage("lambda must be nonnegative".into());
        }
        if self.sweep.jobs == 0 || self.evaluation.mine_draws == 0 {
            return usage("sweep.jobs and evaluation.mine_draws must be positive".into());
        }
        self.train_config().validate().map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn model_config(&self) -> ModelConfig {
        let mut model = ModelConfig::for_glyphs(self.dataset.size, self.channel.total_width());
        model.encoder_hidden = self.training.encoder_hidden.clone();
        model.decoder_hidden = self.training.decoder_hidden.clone();
        model.eve_hidden = self.training.eve_hidden.clone();
        model
    }

    pub fn train_config(&self) -> TrainConfig {
        let channel = self.channel.spec().unwrap_or_else(|_| ChannelSpec::single(1, 0.0, 0.0).expect("valid"));
        let t = &self.training;
        let mut cfg = TrainConfig::new(channel, self.model_config());
        cfg.lambda = t.lambda;
        cfg.epochs = t.epochs;
        cfg.batch_size = t.batch_size;
        cfg.eve_steps = t.eve_steps;
        cfg.seed = t.seed;
        cfg.lr = t.lr;
        cfg.eve_lr = t.eve_lr;
        cfg.mi_weight = t.mi_weight;
        cfg
    }

    pub fn leakage_config(&self, seed: u64) -> LeakageConfig {
        let e = &self.evaluation;
        LeakageConfig {
            mine: MineConfig {
                hidden: e.mine_hidden.clone(),
                epochs: e.mine_epochs,
                batch_size: e.mine_batch_size,
                lr: e.mine_lr,
                ..MineConfig::default()
            },
            draws: e.mine_draws,
            seed,
        }
    }

    pub fn adversary_config(&self, seed: u64) -> AuxConfig {
        let e = &self.evaluation;
        AuxConfig {
            hidden: e.adversary_hidden.clone(),
            epochs: e.adversary_epochs,
            lr: e.adversary_lr,
            seed,
            ..AuxConfig::default()
        }
    }

    pub fn decoder_config(&self, seed: u64) -> AuxConfig {
        let e = &self.evaluation;
        AuxConfig { hidden: e.decoder_hidden.clone(), epochs: e.decoder_epochs, lr: e.adversary_lr, seed, ..AuxConfig::default() }
    }

    pub fn oracle_config(&self) -> OracleConfig {
        let o = &self.oracle;
        OracleConfig { restarts: o.restarts, steps: o.steps, seed: o.seed, ..OracleConfig::default() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn sections_parse_and_round_trip() {
        let text = "[dataset]\ntrain = 30\n\n[channel]\nbands = [[50, 0.1, 0.1], [50, 0.001, 0.2]]\n\n[training]\nlambda = 10.0\n";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.dataset.train, 30);
        assert_eq!(cfg.channel.bands[1], BandTriple(50, 0.001, 0.2));
        assert_eq!(cfg.training.lambda, 10.0);
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[training]\nlamda = 1.0\n").is_err());
    }

    #[test]
    fn flags_win_over_the_file() {
        let mut cfg = ExperimentConfig::from_toml("[training]\nlambda = 1.0\nseed = 4\n").unwrap();
        cfg.apply_overrides(&Overrides { seed: Some(9), lambdas: vec![20.0], eps_e: vec![0.2], ..Overrides::default() })
            .unwrap();
        assert_eq!((cfg.training.lambda, cfg.training.seed), (20.0, 9));
        assert_eq!(cfg.channel.bands, vec![BandTriple(200, 0.1, 0.2)]);
    }

    #[test]
    fn eps_flags_need_a_single_band() {
        let mut cfg = ExperimentConfig::default();
        cfg.channel.bands = parse_bands("100:0.1:0.1,100:0.2:0.001").unwrap();
        assert!(cfg.apply_overrides(&Overrides { eps_b: Some(0.2), ..Overrides::default() }).is_err());
    }

    #[test]
    fn band_strings() {
        assert_eq!(parse_bands("50:0.001:0.2").unwrap(), vec![BandTriple(50, 0.001, 0.2)]);
        assert!(parse_bands("50:0.1").is_err());
        assert!(parse_bands("x:0.1:0.2").is_err());
    }
}
