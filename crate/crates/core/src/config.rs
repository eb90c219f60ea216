//! Merged run configuration, loaded from TOML with one section per module.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{ExplorationSchedule, ReplayConfig};
use crate::channel::ChannelParams;
use crate::codebook::{ArrayGeometry, Codebook};
use crate::environment::NetworkLayout;
use crate::neuralnet::MlpConfig;
use crate::scenario::{ScenarioConfig, TimingModel, TrainingConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookConfig {
    /// Phase-shifter resolution; 0 disables quantization.
    pub phase_bits: u32,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        Self { phase_bits: 6 }
    }
}

/// Network hyperparameters; input and output sizes follow from the layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub location_width: usize,
    pub beam_width: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        let d = MlpConfig::default();
        Self {
            location_width: d.location_width,
            beam_width: d.beam_width,
            hidden_width: d.hidden_width,
            hidden_layers: d.hidden_layers,
            dropout: d.dropout,
            learning_rate: d.learning_rate,
            beta1: d.beta1,
            beta2: d.beta2,
            epsilon: d.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { episodes: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: String,
    pub channel: ChannelParams,
    pub array: ArrayGeometry,
    pub codebook: CodebookConfig,
    pub layout: NetworkLayout,
    pub neuralnet: NetConfig,
    pub exploration: ExplorationSchedule,
    pub replay: ReplayConfig,
    pub training: TrainingConfig,
    pub timing: TimingModel,
    pub scenario: ScenarioConfig,
    pub evaluation: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: "out".into(),
            channel: ChannelParams::default(),
            array: ArrayGeometry::default(),
            codebook: CodebookConfig::default(),
            layout: NetworkLayout::default(),
            neuralnet: NetConfig::default(),
            exploration: ExplorationSchedule::default(),
            replay: ReplayConfig::default(),
            training: TrainingConfig::default(),
            timing: TimingModel::default(),
            scenario: ScenarioConfig::default(),
            evaluation: EvalConfig::default(),
        }
    }
}

const HEADER: &str = "\
# Run configuration. Every key is optional; missing keys take the values below.
# The defaults model a 60 m x 30 m office with six ceiling APs.
# codebook.phase_bits = 0 disables phase quantization.
# training.channels = site freezes one channel per (AP, grid point);
# fresh redraws every channel each episode.
";

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.array.validate()?;
        self.layout.validate()?;
        self.exploration.validate()?;
        self.replay.validate()?;
        self.training.validate(self.layout.num_aps())?;
        self.timing.validate()?;
        self.scenario.validate()?;
        self.mlp_config(0).validate()?;
        if self.codebook.phase_bits > 52 {
            return Err(Error::InvalidConfig(
                "codebook: phase_bits must be at most 52".into(),
            ));
        }
        if self.evaluation.episodes == 0 {
            return Err(Error::InvalidConfig(
                "evaluation: episodes must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn build_codebook(&self) -> Result<Codebook> {
        let bits = (self.codebook.phase_bits > 0).then_some(self.codebook.phase_bits);
        Codebook::build(&self.array, bits)
    }

    pub fn mlp_config(&self, init_seed: u64) -> MlpConfig {
        let n = &self.neuralnet;
        let m = self.array.num_elements();
        MlpConfig {
            location_width: n.location_width,
            beam_width: n.beam_width,
            hidden_width: n.hidden_width,
            hidden_layers: n.hidden_layers,
            dropout: n.dropout,
            learning_rate: n.learning_rate,
            beta1: n.beta1,
            beta2: n.beta2,
            epsilon: n.epsilon,
            init_seed,
            ..MlpConfig::for_network(self.training.paps, m)
        }
    }

    /// Parses and validates. Errors carry the offending line where known.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate().map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(annotate(text, &msg)),
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        let body = toml::to_string_pretty(self).expect("configuration serializes");
        format!("{HEADER}\n{body}")
    }
}

/// Prefixes a validation message with the line of the key it names, if
/// that key appears in the text. Messages start with `<section>: ` and
/// mention the key by name.
fn annotate(text: &str, msg: &str) -> String {
    let Some((section, rest)) = msg.split_once(": ") else {
        return msg.to_string();
    };
    let header = format!("[{section}]");
    let mut in_section = false;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            in_section = t == header;
            continue;
        }
        if !in_section {
            continue;
        }
        if let Some((key, _)) = t.split_once('=') {
            let key = key.trim();
            if !key.is_empty()
                && rest
                    .split(|c: char| !(c.is_alphanumeric() || c == '_'))
                    .any(|w| w == key)
            {
                return format!("line {}: {msg}", i + 1);
            }
        }
    }
    msg.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
        assert!(text.contains("[training]"));
        assert!(text.contains("episodes = 50000"));
    }

    #[test]
    fn partial_config_takes_defaults() {
        let cfg = RunConfig::from_toml_str("seed = 9\n[training]\nepisodes = 100\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.training.episodes, 100);
        assert_eq!(cfg.training.paps, 5);
        assert_eq!(cfg.layout, NetworkLayout::default());
    }

    #[test]
    fn unknown_keys_rejected_with_line() {
        let err = RunConfig::from_toml_str("[training]\nepisodes = 10\nbogus = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn invariant_violation_points_at_line() {
        let err = RunConfig::from_toml_str("seed = 1\n\n[training]\nepisodes = 10\npaps = 6\n")
            .unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::InvalidConfig(_)));
        assert!(msg.contains("line 5"), "{msg}");
    }

    #[test]
    fn codebook_bits_zero_means_unquantized() {
        let mut cfg = RunConfig::default();
        cfg.codebook.phase_bits = 0;
        assert_eq!(cfg.build_codebook().unwrap().phase_bits(), None);
        assert_eq!(
            RunConfig::default().build_codebook().unwrap().phase_bits(),
            Some(6)
        );
    }
}
