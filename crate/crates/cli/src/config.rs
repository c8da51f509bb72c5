//! Experiment configuration as read from JSON.
//!
//! Every block rejects unknown keys and fills omitted keys with defaults.
//! The echoed config written next to each run has every default spelled out
//! so it reproduces the run on its own.

use std::fs;
use std::path::{Path, PathBuf};

use ilora_core::bench::{PretrainSpec, StreamSpec};
use ilora_core::model::Arch;
use ilora_core::optim::OptimizerKind;
use ilora_core::replay::SamplingMode;
use ilora_core::strategies::{Deploy, StrategyConfig, StrategyKind};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Network shape apart from the input and output widths, which come from
/// the stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub hidden: usize,
    pub embed: usize,
    pub rank: usize,
    pub alpha: f64,
    pub adapter_init_std: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        let a = Arch::default();
        Self {
            hidden: a.hidden,
            embed: a.embed,
            rank: a.rank,
            alpha: a.alpha,
            adapter_init_std: a.adapter_init_std,
        }
    }
}

/// Strategy choice and its method-specific hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyBlock {
    pub kind: StrategyKind,
    pub gamma: f64,
    pub lambda_ema: f64,
    pub update_frequency: usize,
    pub lambda_ewc: f64,
    pub rho: f64,
    pub replay_sampling: SamplingMode,
    pub deploy: Option<Deploy>,
}

impl Default for StrategyBlock {
    fn default() -> Self {
        let s = StrategyConfig::default();
        Self {
            kind: s.kind,
            gamma: s.gamma,
            lambda_ema: s.lambda_ema,
            update_frequency: s.update_frequency,
            lambda_ewc: s.lambda_ewc,
            rho: s.rho,
            replay_sampling: s.replay_sampling,
            deploy: s.deploy,
        }
    }
}

/// Optimization budget shared by every strategy. Each task runs
/// `epochs · ceil(n_train / batch_size)` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_ratio: f64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let s = StrategyConfig::default();
        Self {
            epochs: s.epochs,
            batch_size: s.batch_size,
            lr: s.lr,
            warmup_ratio: s.warmup_ratio,
            optimizer: s.optimizer,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub stream: StreamSpec,
    pub arch: ArchConfig,
    pub strategy: StrategyBlock,
    pub training: TrainingConfig,
    pub pretrain: PretrainSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            // an absent config is the caller's mistake, not a lost artifact
            std::io::ErrorKind::NotFound => {
                CliError::Config(format!("config file {} not found", path.display()))
            }
            _ => CliError::reading(path, e),
        })?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn arch(&self) -> Arch {
        Arch {
            input_dim: self.stream.input_dim,
            hidden: self.arch.hidden,
            embed: self.arch.embed,
            classes: self.stream.classes,
            rank: self.arch.rank,
            alpha: self.arch.alpha,
            adapter_init_std: self.arch.adapter_init_std,
        }
    }

    pub fn strategy(&self) -> StrategyConfig {
        let s = &self.strategy;
        let t = &self.training;
        StrategyConfig {
            kind: s.kind,
            epochs: t.epochs,
            batch_size: t.batch_size,
            gamma: s.gamma,
            lambda_ema: s.lambda_ema,
            update_frequency: s.update_frequency,
            lambda_ewc: s.lambda_ewc,
            rho: s.rho,
            replay_sampling: s.replay_sampling,
            optimizer: t.optimizer,
            lr: t.lr,
            warmup_ratio: t.warmup_ratio,
            deploy: s.deploy,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.stream.validate()?;
        self.arch().validate()?;
        self.strategy().validate()?;
        let p = &self.pretrain;
        if p.batch_size == 0
            || !p.lr.is_finite()
            || p.lr <= 0.0
            || !(0.0..=1.0).contains(&p.warmup_ratio)
        {
            return Err(CliError::Config(
                "pretrain needs batch_size >= 1, lr > 0 and warmup_ratio in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Self-describing copy: defaults filled in, output location dropped so
    /// the echo is the same wherever the run was written.
    pub fn echo(&self) -> Self {
        let mut e = self.clone();
        e.strategy.deploy = Some(self.strategy().deploy());
        e.output_dir = None;
        e
    }

    pub fn to_pretty_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.strategy(), StrategyConfig::default());
        assert_eq!(c.arch(), Arch::default());
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        for text in [
            r#"{"sed": 1}"#,
            r#"{"stream": {"taks": 3}}"#,
            r#"{"strategy": {"kind": "ER", "lamda_ema": 0.5}}"#,
            r#"{"training": {"epoch": 2}}"#,
            r#"{"arch": {"rank": 4, "width": 9}}"#,
        ] {
            assert!(
                matches!(ExperimentConfig::from_json(text), Err(CliError::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            r#"{"strategy": {"lambda_ema": 2.0}}"#,
            r#"{"training": {"batch_size": 0}}"#,
            r#"{"stream": {"classes": 40}}"#,
            r#"{"strategy": {"kind": "SEQ", "deploy": "long_term"}}"#,
            r#"{"strategy": {"kind": "XYZ"}}"#,
        ] {
            let err = ExperimentConfig::from_json(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn echo_materializes_and_round_trips() {
        let c = ExperimentConfig::from_json(
            r#"{"seed": 3, "strategy": {"kind": "ER"}, "output_dir": "x"}"#,
        )
        .unwrap();
        let e = c.echo();
        assert_eq!(e.strategy.deploy, Some(Deploy::Working));
        assert_eq!(e.output_dir, None);
        let back = ExperimentConfig::from_json(&e.to_pretty_json()).unwrap();
        assert_eq!(back, e);
        assert_eq!(back.echo(), e);
    }
}
