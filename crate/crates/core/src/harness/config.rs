//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::network::{BatchMode, LossKind, TrainConfig};

/// Activations are written by name in configs.
pub(crate) mod activation_name {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &Activation, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(a.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Activation, D::Error> {
        let name = String::deserialize(d)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}

pub(crate) mod activation_names {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &[Activation], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(a.iter().map(|a| a.name()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Activation>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|n| n.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyDatasetSpec {
    pub means: Vec<[f64; 2]>,
    pub counts: Vec<usize>,
    pub labels: Vec<u8>,
    pub std: f64,
    /// Falls back to the experiment seed when absent.
    pub seed: Option<u64>,
}

impl Default for ToyDatasetSpec {
    fn default() -> Self {
        Self {
            means: vec![[-1.0, 0.0], [1.0, 2.0], [1.0, -2.0]],
            counts: vec![100, 100, 100],
            labels: vec![0, 1, 1],
            std: 1.0,
            seed: None,
        }
    }
}

impl ToyDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.means.len();
        if k == 0 || self.counts.len() != k || self.labels.len() != k {
            return Err(Error::Config(format!(
                "dataset needs matching means/counts/labels, got {}/{}/{}",
                k,
                self.counts.len(),
                self.labels.len()
            )));
        }
        if self.counts.iter().any(|&c| c == 0) {
            return Err(Error::Config("dataset counts must be > 0".into()));
        }
        if self.labels.iter().any(|&l| l > 1) {
            return Err(Error::Config("dataset labels must be 0 or 1".into()));
        }
        if !(self.std >= 0.0 && self.std.is_finite()) {
            return Err(Error::Config(format!("dataset std {} must be >= 0", self.std)));
        }
        if self.means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("dataset means must be finite".into()));
        }
        Ok(())
    }
}

/// Settings of the `compare` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSpec {
    #[serde(with = "activation_names")]
    pub activations: Vec<Activation>,
    pub seeds: Vec<u64>,
    pub target_error: f64,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            activations: vec![
                Activation::LORENTZ_UNBIASED,
                Activation::selu(),
                Activation::Relu,
                Activation::LORENTZ_BIASED,
            ],
            seeds: (1..=10).collect(),
            target_error: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    #[serde(with = "activation_name")]
    pub activation: Activation,
    /// Number of hidden layers.
    pub depth: usize,
    pub width: usize,
    #[serde(with = "activation_name")]
    pub output_activation: Activation,
    /// Defaults to cross entropy for sigmoid outputs, squared error otherwise.
    pub loss: Option<LossKind>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_beta: f64,
    pub dropout_prob: f64,
    pub seed: u64,
    pub batch: BatchMode,
    pub threshold: f64,
    pub init_scale: f64,
    pub dataset: ToyDatasetSpec,
    /// Trajectories are recorded every this many epochs (and at the last one).
    pub snapshot_every: usize,
    pub compare: CompareSpec,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            activation: Activation::LORENTZ_BIASED,
            depth: 6,
            width: 2,
            output_activation: Activation::Sigmoid,
            loss: None,
            learning_rate: 0.05,
            epochs: 20_000,
            l2_beta: 0.0,
            dropout_prob: 0.0,
            seed: 1,
            batch: BatchMode::Full,
            threshold: 0.5,
            init_scale: 0.005,
            dataset: ToyDatasetSpec::default(),
            snapshot_every: 2_000,
            compare: CompareSpec::default(),
            out_dir: PathBuf::from("runs/toy"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
            .unwrap_or_else(|| LossKind::default_for(self.output_activation))
    }

    pub fn dataset_seed(&self) -> u64 {
        self.dataset.seed.unwrap_or(self.seed)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            l2_beta: self.l2_beta,
            dropout_prob: self.dropout_prob,
            seed: self.seed,
            batch: self.batch,
            loss: self.loss_kind(),
            threshold: self.threshold,
        }
    }

    /// Layer shapes `(out, in)`: `depth` hidden layers then a single output neuron.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.depth + 1);
        let mut prev = 2;
        for _ in 0..self.depth {
            shapes.push((self.width, prev));
            prev = self.width;
        }
        shapes.push((1, prev));
        shapes
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::Config("width must be > 0".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config(format!("init scale {} must be > 0", self.init_scale)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} not in [0, 1]", self.threshold)));
        }
        if self.snapshot_every == 0 {
            return Err(Error::Config("snapshot_every must be > 0".into()));
        }
        if self.compare.activations.is_empty() || self.compare.seeds.is_empty() {
            return Err(Error::Config("compare needs at least one activation and one seed".into()));
        }
        self.dataset.validate()?;
        self.train_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.shapes(), vec![(2, 2); 6].into_iter().chain([(1, 2)]).collect::<Vec<_>>());
        assert_eq!(cfg.loss_kind(), LossKind::BinaryCrossEntropy);
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trip_and_partial() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        let partial = ExperimentConfig::from_json(r#"{"activation": "gauss-unbiased", "epochs": 5}"#).unwrap();
        assert_eq!(partial.activation, Activation::GAUSS_UNBIASED);
        assert_eq!(partial.epochs, 5);
        assert_eq!(partial.depth, 6);
    }

    #[test]
    fn rejects_unknown_keys_and_names() {
        assert!(matches!(ExperimentConfig::from_json(r#"{"lr": 0.1}"#), Err(Error::Config(_))));
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"activation": "tanh"}"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"dataset": {"counts": [0, 1, 1]}}"#),
            Err(Error::Config(_))
        ));
    }
}
