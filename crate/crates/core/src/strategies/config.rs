use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::OptimizerKind;
use crate::replay::SamplingMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StrategyKind {
    /// Plain sequential fine-tuning.
    Seq,
    /// Experience replay: current task mixed with stored examples.
    Er,
    /// Elastic weight consolidation.
    Ewc,
    /// Averaged gradient episodic memory.
    Agem,
    /// Joint training on every task at once.
    Mtl,
    /// Fast/slow dual-memory adapters.
    Ilora,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Seq,
        StrategyKind::Er,
        StrategyKind::Ewc,
        StrategyKind::Agem,
        StrategyKind::Mtl,
        StrategyKind::Ilora,
    ];

    pub fn uses_memory(self) -> bool {
        matches!(
            self,
            StrategyKind::Er | StrategyKind::Agem | StrategyKind::Ilora
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Seq => "SEQ",
            StrategyKind::Er => "ER",
            StrategyKind::Ewc => "EWC",
            StrategyKind::Agem => "AGEM",
            StrategyKind::Mtl => "MTL",
            StrategyKind::Ilora => "ILORA",
        }
    }
}

/// Which parameter set is evaluated and reported as "the model".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deploy {
    Working,
    LongTerm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the embedding-deviation term (ILORA).
    pub gamma: f64,
    /// EMA ratio of the slow learner (ILORA).
    pub lambda_ema: f64,
    /// Apply the EMA every `update_frequency` fast-learner steps (ILORA).
    pub update_frequency: usize,
    pub lambda_ewc: f64,
    /// Fraction of each task kept in episodic memory (ER, AGEM, ILORA).
    pub rho: f64,
    pub replay_sampling: SamplingMode,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub warmup_ratio: f64,
    /// Defaults to the slow learner for ILORA and the working weights
    /// otherwise.
    pub deploy: Option<Deploy>,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            kind: StrategyKind::Ilora,
            epochs: 5,
            batch_size: 16,
            gamma: 1.0,
            lambda_ema: 0.95,
            update_frequency: 1,
            lambda_ewc: 100.0,
            rho: 0.1,
            replay_sampling: SamplingMode::Uniform,
            optimizer: OptimizerKind::Adam,
            lr: 1e-2,
            warmup_ratio: 0.2,
            deploy: None,
        }
    }
}

impl StrategyConfig {
    pub fn for_kind(kind: StrategyKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn deploy(&self) -> Deploy {
        self.deploy.unwrap_or(match self.kind {
            StrategyKind::Ilora => Deploy::LongTerm,
            _ => Deploy::Working,
        })
    }

    /// Copy with `deploy` filled in, for self-describing echoes.
    pub fn materialized(&self) -> Self {
        Self {
            deploy: Some(self.deploy()),
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::contract(msg));
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return fail(format!("gamma must be finite and >= 0, got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda_ema) {
            return fail(format!(
                "lambda_ema must lie in [0, 1], got {}",
                self.lambda_ema
            ));
        }
        if self.update_frequency == 0 {
            return fail("update_frequency must be >= 1".into());
        }
        if !self.lambda_ewc.is_finite() || self.lambda_ewc < 0.0 {
            return fail(format!(
                "lambda_ewc must be finite and >= 0, got {}",
                self.lambda_ewc
            ));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return fail(format!("rho must lie in [0, 1], got {}", self.rho));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return fail(format!("lr must be finite and > 0, got {}", self.lr));
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return fail(format!(
                "warmup_ratio must lie in [0, 1], got {}",
                self.warmup_ratio
            ));
        }
        if self.deploy == Some(Deploy::LongTerm) && self.kind != StrategyKind::Ilora {
            return fail(format!(
                "deploy = long_term requires kind ILORA, got {}",
                self.kind.name()
            ));
        }
        Ok(())
    }
}
