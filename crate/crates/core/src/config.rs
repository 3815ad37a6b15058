//! JSON run configuration shared by every CLI command.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{validate_ratios, FeatureSchema, SplitRatios};
use crate::lstm::{Architecture, InitMode};
use crate::pruning::SwdConfig;
use crate::quantizer::QuantConfig;
use crate::trainer::{PhaseConfig, TrainConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid<T>(field: &'static str, reason: impl ToString) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid {
        field,
        reason: reason.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchitectureConfig {
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub tied_output_gate: bool,
    pub seq_len: usize,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden: 32,
            dropout: 0.1,
            tied_output_gate: false,
            seq_len: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhasesConfig {
    /// Dense, sparse and re-dense learning rates.
    pub learning_rates: [f64; 3],
    pub epochs: [usize; 3],
    pub batch_size: usize,
    pub momentum: f64,
    /// Global gradient-norm cap; `null` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for PhasesConfig {
    fn default() -> Self {
        Self {
            learning_rates: [0.1, 0.01, 0.001],
            epochs: [30, 30, 30],
            batch_size: 32,
            momentum: 0.9,
            clip_norm: Some(5.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruningConfig {
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_sparsity: f64,
    pub a0: f64,
    pub a_growth: f64,
    #[serde(rename = "t")]
    pub target: f64,
    pub mu: f64,
}

impl Default for PruningConfig {
    fn default() -> Self {
        let swd = SwdConfig::default();
        Self {
            initial: 0.25,
            final_sparsity: 0.8,
            a0: swd.a0,
            a_growth: swd.a_growth,
            target: swd.target,
            mu: swd.mu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EarlyStopConfig {
    pub patience: usize,
    /// Whether early stopping is active in the dense, sparse and re-dense
    /// phases. Off for the sparse phase so the sparsity ramp completes, and
    /// off for the dense phase because validation AUC plateaus for several
    /// epochs before the nonlinear part of the boundary is learned.
    pub phases: [bool; 3],
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        Self {
            patience: 5,
            phases: [false, false, true],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Needed by `preprocess`; the other commands work on encoded files.
    pub schema: Option<FeatureSchema>,
    pub split: SplitRatios,
    pub seed: u64,
    pub architecture: ArchitectureConfig,
    pub phases: PhasesConfig,
    pub pruning: PruningConfig,
    pub quantization: QuantConfig,
    pub early_stop: EarlyStopConfig,
    pub threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: None,
            split: (0.7, 0.15, 0.15),
            seed: 42,
            architecture: ArchitectureConfig::default(),
            phases: PhasesConfig::default(),
            pruning: PruningConfig::default(),
            quantization: QuantConfig::default(),
            early_stop: EarlyStopConfig::default(),
            threshold: 0.5,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(schema) = &self.schema {
            schema.validate().or_else(|e| invalid("schema", e))?;
        }
        validate_ratios(self.split).or_else(|e| invalid("split", e))?;
        let a = &self.architecture;
        if a.layers == 0 || a.hidden == 0 {
            return invalid("architecture", "layers and hidden must be at least 1");
        }
        if !(0.0..1.0).contains(&a.dropout) {
            return invalid("architecture.dropout", "must lie in [0, 1)");
        }
        if a.seq_len == 0 {
            return invalid("architecture.seq_len", "must be at least 1");
        }
        let p = &self.phases;
        if p.learning_rates.iter().any(|lr| !(lr.is_finite() && *lr >= 0.0)) {
            return invalid("phases.learning_rates", "must be finite and non-negative");
        }
        if p.epochs.contains(&0) {
            return invalid("phases.epochs", "must be at least 1");
        }
        if p.batch_size == 0 {
            return invalid("phases.batch_size", "must be at least 1");
        }
        if !(0.0..1.0).contains(&p.momentum) {
            return invalid("phases.momentum", "must lie in [0, 1)");
        }
        if let Some(c) = p.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return invalid("phases.clip_norm", "must be positive");
            }
        }
        let r = &self.pruning;
        let unit = |v: f64| (0.0..1.0).contains(&v);
        if !unit(r.initial) || !unit(r.final_sparsity) || r.initial > r.final_sparsity {
            return invalid("pruning", "need 0 <= initial <= final < 1");
        }
        if !(r.a0.is_finite() && r.a0 > 0.0) {
            return invalid("pruning.a0", "must be positive");
        }
        if !(r.a_growth.is_finite() && r.a_growth >= 1.0) {
            return invalid("pruning.a_growth", "must be at least 1");
        }
        if !(r.target > 0.0 && r.target <= 1.0) {
            return invalid("pruning.t", "must lie in (0, 1]");
        }
        if !(r.mu.is_finite() && r.mu >= 0.0) {
            return invalid("pruning.mu", "must be non-negative");
        }
        self.quantization.validate().or_else(|e| invalid("quantization", e))?;
        if self.early_stop.patience == 0 {
            return invalid("early_stop.patience", "must be at least 1");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return invalid("threshold", "must lie in (0, 1)");
        }
        Ok(())
    }

    /// Training configuration for records of `input_size` features per
    /// timestep.
    pub fn train_config(&self, input_size: usize) -> TrainConfig {
        let a = &self.architecture;
        let p = &self.phases;
        let phase = |k: usize| PhaseConfig {
            learning_rate: p.learning_rates[k],
            epochs: p.epochs[k],
            batch_size: p.batch_size,
            early_stop: self.early_stop.phases[k],
        };
        TrainConfig {
            arch: Architecture {
                input_size,
                hidden_sizes: vec![a.hidden; a.layers],
                seq_len: a.seq_len,
                dropout_rate: a.dropout,
                tied_output_gate: a.tied_output_gate,
            },
            dense: phase(0),
            sparse: phase(1),
            redense: phase(2),
            momentum: p.momentum,
            weight_decay: self.pruning.mu,
            swd: SwdConfig {
                a0: self.pruning.a0,
                a_growth: self.pruning.a_growth,
                target: self.pruning.target,
                mu: self.pruning.mu,
            },
            initial_sparsity: self.pruning.initial,
            final_sparsity: self.pruning.final_sparsity,
            patience: self.early_stop.patience,
            clip_norm: p.clip_norm,
            threshold: self.threshold,
            init: InitMode::GlorotNormal,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let t = cfg.train_config(10);
        assert_eq!(t.arch.hidden_sizes, vec![32, 32, 32]);
        assert_eq!(t.dense.learning_rate, 0.1);
        assert_eq!(t.sparse.learning_rate, 0.01);
        assert_eq!(t.redense.learning_rate, 0.001);
        assert_eq!(t.momentum, 0.9);
        assert_eq!(t.swd.a0, 0.001);
        assert_eq!(t.swd.target, 0.5);
        assert_eq!((t.initial_sparsity, t.final_sparsity), (0.25, 0.8));
        t.validate().unwrap();
        assert_eq!(t, TrainConfig::new(10));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_json(r#"{"sed": 1}"#), Err(ConfigError::Parse(_))));
        assert!(matches!(
            RunConfig::from_json(r#"{"phases": {"lr": [1, 2, 3]}}"#),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = RunConfig::from_json(r#"{"pruning": {"final": 0.9}, "quantization": {"fixed_range": true}}"#).unwrap();
        assert_eq!(cfg.pruning.final_sparsity, 0.9);
        assert_eq!(cfg.pruning.initial, 0.25);
        assert!(cfg.quantization.fixed_range);
        assert_eq!(cfg.quantization.q_min, -128);
    }

    #[test]
    fn out_of_range_fields_are_rejected() {
        for bad in [
            r#"{"split": [0.5, 0.5, 0.5]}"#,
            r#"{"phases": {"learning_rates": [-0.1, 0.01, 0.001]}}"#,
            r#"{"phases": {"momentum": 1.0}}"#,
            r#"{"pruning": {"initial": 0.9, "final": 0.8}}"#,
            r#"{"pruning": {"t": 0.0}}"#,
            r#"{"quantization": {"q_min": 5, "q_max": 5}}"#,
            r#"{"architecture": {"dropout": 1.0}}"#,
            r#"{"threshold": 1.5}"#,
            r#"{"early_stop": {"patience": 0}}"#,
        ] {
            assert!(matches!(RunConfig::from_json(bad), Err(ConfigError::Invalid { .. })), "{bad}");
        }
    }
}
