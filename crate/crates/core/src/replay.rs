//! Episodic memory of raw past examples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Batch;
use crate::numerics::Rng;

/// How [`ReplayBuffer::sample`] spreads draws across stored tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Uniform over the union of stored rows.
    #[default]
    Uniform,
    /// Pick a stored task uniformly, then a row within it.
    Stratified,
}

#[derive(Debug, Clone, PartialEq)]
struct TaskStore {
    task_id: usize,
    /// Row indices into the ingested task, ascending.
    indices: Vec<usize>,
    rows: Batch,
}

/// Per-task reservoir holding `floor(rho · n)` rows of each ingested task
/// (at least one when `rho > 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    rho: f64,
    mode: SamplingMode,
    stores: Vec<TaskStore>,
}

impl ReplayBuffer {
    pub fn new(rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::contract(format!(
                "replay rate must lie in [0, 1], got {rho}"
            )));
        }
        Ok(Self {
            rho,
            mode: SamplingMode::Uniform,
            stores: Vec::new(),
        })
    }

    pub fn with_mode(mut self, mode: SamplingMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Number of rows kept for a task of `n` rows.
    pub fn quota(&self, n: usize) -> usize {
        if n == 0 || self.rho == 0.0 {
            return 0;
        }
        ((self.rho * n as f64).floor() as usize).clamp(1, n)
    }

    /// Stores a uniform sample without replacement of the task's rows,
    /// kept in their original order.
    pub fn ingest_task(&mut self, task_id: usize, data: &Batch, rng: &mut Rng) -> Result<()> {
        if self.stores.iter().any(|s| s.task_id == task_id) {
            return Err(Error::contract(format!("task {task_id} already ingested")));
        }
        let k = self.quota(data.len());
        let mut indices = rng.sample_without_replacement(data.len(), k);
        indices.sort_unstable();
        let rows = data.select(&indices);
        self.stores.push(TaskStore {
            task_id,
            indices,
            rows,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.stores.iter().map(|s| s.rows.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task_ids(&self) -> Vec<usize> {
        self.stores.iter().map(|s| s.task_id).collect()
    }

    /// Indices (into the original task data) kept for `task_id`.
    pub fn stored_indices(&self, task_id: usize) -> Option<&[usize]> {
        self.stores
            .iter()
            .find(|s| s.task_id == task_id)
            .map(|s| s.indices.as_slice())
    }

    /// All stored rows, tasks in ingest order.
    pub fn all(&self, input_dim: usize) -> Batch {
        self.stores.iter().fold(Batch::empty(input_dim), |acc, s| {
            acc.concat(&s.rows)
                .expect("stored rows share the input width")
        })
    }

    /// Draws `batch_size` rows with replacement.
    pub fn sample(&self, batch_size: usize, rng: &mut Rng) -> Result<Batch> {
        self.sample_tagged(batch_size, rng).map(|(b, _)| b)
    }

    /// Like [`sample`](Self::sample), also returning the source task of each row.
    pub fn sample_tagged(&self, batch_size: usize, rng: &mut Rng) -> Result<(Batch, Vec<usize>)> {
        let total = self.len();
        if total == 0 {
            return Err(Error::EmptyBuffer);
        }
        let nonempty: Vec<&TaskStore> = self.stores.iter().filter(|s| !s.rows.is_empty()).collect();
        let mut picks: Vec<(usize, usize)> = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            match self.mode {
                SamplingMode::Uniform => {
                    let mut idx = rng.below(total);
                    for (si, s) in nonempty.iter().enumerate() {
                        if idx < s.rows.len() {
                            picks.push((si, idx));
                            break;
                        }
                        idx -= s.rows.len();
                    }
                }
                SamplingMode::Stratified => {
                    let si = rng.below(nonempty.len());
                    let row = rng.below(nonempty[si].rows.len());
                    picks.push((si, row));
                }
            }
        }
        let width = nonempty[0].rows.x.cols();
        let mut data = Vec::with_capacity(batch_size * width);
        let mut y = Vec::with_capacity(batch_size);
        let mut tasks = Vec::with_capacity(batch_size);
        for (si, r) in picks {
            let s = nonempty[si];
            data.extend_from_slice(s.rows.x.row(r));
            y.push(s.rows.y[r]);
            tasks.push(s.task_id);
        }
        let x = crate::numerics::Matrix::from_vec(batch_size, width, data)?;
        Ok((Batch::new(x, y)?, tasks))
    }
}
