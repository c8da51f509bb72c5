//! Desk-scale continual learning with dual-memory low-rank adapters.
//!
//! A frozen two-layer backbone carries trainable low-rank adapters. A fast
//! learner is trained by gradient descent with replay and an embedding
//! consistency term, while a slow learner tracks it by exponential moving
//! average and is the deployed model. Baselines (sequential fine-tuning,
//! experience replay, EWC, A-GEM, multi-task) share the same engine, and the
//! connectivity module probes the geometry between per-task checkpoints.

pub mod bench;
pub mod connectivity;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod optim;
pub mod replay;
pub mod strategies;

pub use error::{Error, Result};
