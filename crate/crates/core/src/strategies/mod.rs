//! Continual-training engine shared by every strategy.

mod config;
mod engine;

pub use config::{Deploy, StrategyConfig, StrategyKind};
pub use engine::{
    ilora_step, init_adapters, run_sequence, run_sequence_observed, steps_for, train_task, Aux,
    DualMemoryState, RunRecord, StepEvent, TaskPair,
};
