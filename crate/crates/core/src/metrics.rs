//! Accuracy bookkeeping and the two scalar continual-learning metrics.
//!
//! `R[t][j]` is the accuracy on task `j` after training task `t`; only
//! `j ≤ t` is defined. All task indices in this module are 1-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AdaptedNet, Batch, ParamVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMatrix {
    tasks: usize,
    /// Full `T × T` storage; entries above the diagonal are ignored.
    values: Vec<Vec<f64>>,
}

impl ResultMatrix {
    pub fn new(tasks: usize) -> Result<Self> {
        if tasks == 0 {
            return Err(Error::contract("result matrix needs at least one task"));
        }
        Ok(Self {
            tasks,
            values: vec![vec![0.0; tasks]; tasks],
        })
    }

    /// Builds from rows where row `t` (1-based) holds at least `t` entries;
    /// extra entries are stored but never read by the metrics.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let mut m = Self::new(rows.len())?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() < i + 1 || row.len() > rows.len() {
                return Err(Error::dims("ResultMatrix::from_rows", i + 1, row.len()));
            }
            for (j, &v) in row.iter().enumerate() {
                if j <= i {
                    m.set(i + 1, j + 1, v)?;
                } else {
                    m.values[i][j] = v;
                }
            }
        }
        Ok(m)
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    fn check(&self, t: usize, j: usize) -> Result<()> {
        if t == 0 || t > self.tasks || j == 0 || j > t {
            return Err(Error::contract(format!(
                "R[{t}][{j}] outside the defined region of a {}-task matrix",
                self.tasks
            )));
        }
        Ok(())
    }

    pub fn set(&mut self, t: usize, j: usize, accuracy: f64) -> Result<()> {
        self.check(t, j)?;
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(Error::contract(format!(
                "accuracy {accuracy} outside [0, 1]"
            )));
        }
        self.values[t - 1][j - 1] = accuracy;
        Ok(())
    }

    pub fn get(&self, t: usize, j: usize) -> Result<f64> {
        self.check(t, j)?;
        Ok(self.values[t - 1][j - 1])
    }

    /// Defined entries as `(after_task, eval_task, accuracy)`, row-major.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.tasks * (self.tasks + 1) / 2);
        for t in 1..=self.tasks {
            for j in 1..=t {
                out.push((t, j, self.values[t - 1][j - 1]));
            }
        }
        out
    }
}

/// Mean accuracy over the `t` tasks learned so far: `(1/t)·Σ_{i≤t} R[t][i]`.
pub fn acc_t(r: &ResultMatrix, t: usize) -> Result<f64> {
    if t == 0 || t > r.tasks {
        return Err(Error::contract(format!("t = {t} outside 1..={}", r.tasks)));
    }
    let row = &r.values[t - 1][..t];
    Ok(row.iter().sum::<f64>() / t as f64)
}

/// Backward transfer `(1/(t−1))·Σ_{j<t} (R[t][j] − R[j][j])`; undefined
/// below `t = 2`.
pub fn bwt_t(r: &ResultMatrix, t: usize) -> Result<f64> {
    if t < 2 {
        return Err(Error::UndefinedMetric(format!("BWT needs t >= 2, got {t}")));
    }
    if t > r.tasks {
        return Err(Error::contract(format!("t = {t} outside 1..={}", r.tasks)));
    }
    let sum: f64 = (1..t)
        .map(|j| r.values[t - 1][j - 1] - r.values[j - 1][j - 1])
        .sum();
    Ok(sum / (t - 1) as f64)
}

/// Change in accuracy on a held-out anchor task: `acc(after) − acc(before)`.
pub fn general_retention(
    net: &AdaptedNet,
    theta_before: &ParamVector,
    theta_after: &ParamVector,
    anchor_eval: &Batch,
) -> Result<f64> {
    let before = net.predict_accuracy(theta_before, anchor_eval)?;
    let after = net.predict_accuracy(theta_after, anchor_eval)?;
    Ok(retention_delta(before, after))
}

pub fn retention_delta(before: f64, after: f64) -> f64 {
    after - before
}
