//! Parameter updates: Adam with linear warmup, the slow-learner moving
//! average, EWC, and A-GEM projection.

mod adam;
mod agem;
mod ema;
mod ewc;

pub use adam::{adam_step, AdamState, OptimizerKind};
pub use agem::{agem_project, GradRef};
pub use ema::ema_update;
pub use ewc::{empirical_fisher, ewc_fisher, ewc_penalty_grad, EwcState};
