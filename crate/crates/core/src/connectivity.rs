//! Probes of the geometry between continual minima: the linear path between
//! adjacent checkpoints, accuracy along it, weight distance, linear CKA of
//! representations, and a two-direction embedding-deviation landscape.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AdaptedNet, Batch, ParamVector};
use crate::numerics::{matmul_tn, Matrix};

/// Point `(1 − λ)·θ_a + λ·θ_b` on the segment between two parameter sets.
/// `λ = 0` and `λ = 1` return exact copies of the endpoints.
pub fn interpolate(
    theta_a: &ParamVector,
    theta_b: &ParamVector,
    lambda: f64,
) -> Result<ParamVector> {
    theta_b.check_len(theta_a.len(), "interpolate")?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::contract(format!(
            "interpolation ratio must lie in [0, 1], got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return Ok(theta_a.clone());
    }
    if lambda == 1.0 {
        return Ok(theta_b.clone());
    }
    // Step from the nearer endpoint so that swapping the endpoints and
    // using `1 − λ` reproduces the same arithmetic.
    let values = if lambda < 0.5 {
        theta_a
            .iter()
            .zip(theta_b.iter())
            .map(|(a, b)| a + lambda * (b - a))
            .collect()
    } else {
        let mu = 1.0 - lambda;
        theta_a
            .iter()
            .zip(theta_b.iter())
            .map(|(a, b)| b + mu * (a - b))
            .collect()
    };
    Ok(ParamVector::new(values))
}

/// `points` evenly spaced values `i / (points − 1)`, so 0 and 1 are exact.
pub fn uniform_grid(points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::contract("a lambda grid needs at least two points"));
    }
    let last = (points - 1) as f64;
    Ok((0..points).map(|i| i as f64 / last).collect())
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.first() != Some(&0.0) || grid.last() != Some(&1.0) {
        return Err(Error::contract("lambda grid must start at 0 and end at 1"));
    }
    if grid
        .windows(2)
        .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
    {
        return Err(Error::contract("lambda grid must be strictly ascending"));
    }
    Ok(())
}

/// Accuracy along the segment between the checkpoints of tasks `t` and `t+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSweep {
    /// `t`: the sweep runs from the task-`t` checkpoint to task `t+1`.
    pub transition: usize,
    pub lambda_grid: Vec<f64>,
    /// Mean accuracy on tasks `1..=t`.
    pub ap: Vec<f64>,
    /// Accuracy on task `t+1`.
    pub an: Vec<f64>,
    /// Unweighted mean accuracy over tasks `1..=t+1`.
    pub aall: Vec<f64>,
}

impl LambdaSweep {
    /// Grid indices where `Aall` strictly exceeds both endpoint values.
    pub fn interior_peaks(&self) -> Vec<usize> {
        let n = self.aall.len();
        let ends = self.aall[0].max(self.aall[n - 1]);
        (1..n.saturating_sub(1))
            .filter(|&i| self.aall[i] > ends)
            .collect()
    }
}

pub fn sweep_lambda(
    net: &AdaptedNet,
    theta_t: &ParamVector,
    theta_t1: &ParamVector,
    past_evals: &[&Batch],
    new_eval: &Batch,
    grid: &[f64],
) -> Result<LambdaSweep> {
    validate_grid(grid)?;
    if past_evals.is_empty() {
        return Err(Error::contract("sweep needs at least one previous task"));
    }
    let t = past_evals.len();
    let mut sweep = LambdaSweep {
        transition: t,
        lambda_grid: grid.to_vec(),
        ap: Vec::with_capacity(grid.len()),
        an: Vec::with_capacity(grid.len()),
        aall: Vec::with_capacity(grid.len()),
    };
    for &lambda in grid {
        let theta = interpolate(theta_t, theta_t1, lambda)?;
        let past: Vec<f64> = past_evals
            .iter()
            .map(|b| net.predict_accuracy(&theta, b))
            .collect::<Result<_>>()?;
        let new = net.predict_accuracy(&theta, new_eval)?;
        let past_sum: f64 = past.iter().sum();
        sweep.ap.push(past_sum / t as f64);
        sweep.an.push(new);
        sweep.aall.push((past_sum + new) / (t + 1) as f64);
    }
    Ok(sweep)
}

/// Euclidean norm of `θ_a − θ_b`.
pub fn weight_distance(theta_a: &ParamVector, theta_b: &ParamVector) -> Result<f64> {
    theta_b.check_len(theta_a.len(), "weight_distance")?;
    Ok(theta_a
        .iter()
        .zip(theta_b.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

fn center_columns(x: &Matrix) -> Matrix {
    let n = x.rows() as f64;
    let means: Vec<f64> = x.column_sums().into_iter().map(|s| s / n).collect();
    let mut out = x.clone();
    for r in 0..out.rows() {
        for (v, m) in out.row_mut(r).iter_mut().zip(&means) {
            *v -= m;
        }
    }
    out
}

/// Linear centered kernel alignment between two representations of the same
/// `n` inputs:
///
/// ```text
/// ‖Y_cᵀ X_c‖²_F / (‖X_cᵀ X_c‖_F · ‖Y_cᵀ Y_c‖_F)
/// ```
///
/// with column-centered `X_c`, `Y_c`. A constant representation has no
/// centered variance and is reported as [`Error::Degenerate`].
pub fn linear_cka(x: &Matrix, y: &Matrix) -> Result<f64> {
    if x.rows() != y.rows() {
        return Err(Error::dims("linear_cka", x.rows(), y.rows()));
    }
    if x.rows() < 2 {
        return Err(Error::contract("CKA needs at least two samples"));
    }
    let xc = center_columns(x);
    let yc = center_columns(y);
    let xx = matmul_tn(&xc, &xc)?.frobenius();
    let yy = matmul_tn(&yc, &yc)?.frobenius();
    if xx == 0.0 || yy == 0.0 {
        return Err(Error::Degenerate(
            "representation is constant across samples".into(),
        ));
    }
    let yx = matmul_tn(&yc, &xc)?.frobenius_sq();
    Ok(yx / (xx * yy))
}

/// Embedding deviation over a 2-D slice of parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeGrid {
    pub anchor: ParamVector,
    pub d1: ParamVector,
    pub d2: ParamVector,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `values[i][j]` is the score at `(a[i], b[j])`.
    pub values: Matrix,
}

/// Mean over samples and coordinates of `(f_o(x; θ) − f_o(x; θ_ref))²`.
pub fn deviation_score(
    net: &AdaptedNet,
    theta_ref: &ParamVector,
    theta: &ParamVector,
    probe: &Batch,
) -> Result<f64> {
    let base = net.embed(theta_ref, &probe.x)?;
    deviation_from(net, &base, theta, probe)
}

fn deviation_from(
    net: &AdaptedNet,
    base: &Matrix,
    theta: &ParamVector,
    probe: &Batch,
) -> Result<f64> {
    let z = net.embed(theta, &probe.x)?;
    let diff = z.sub(base)?;
    Ok(diff.frobenius_sq() / diff.as_slice().len() as f64)
}

/// Scores `θ0 + a·d1 + b·d2` against `θ0` for every `(a, b)` pair.
pub fn landscape_grid(
    net: &AdaptedNet,
    theta0: &ParamVector,
    d1: &ParamVector,
    d2: &ParamVector,
    a_grid: &[f64],
    b_grid: &[f64],
    probe: &Batch,
) -> Result<LandscapeGrid> {
    d1.check_len(theta0.len(), "landscape_grid d1")?;
    d2.check_len(theta0.len(), "landscape_grid d2")?;
    if probe.is_empty() {
        return Err(Error::contract("landscape probe set is empty"));
    }
    if a_grid.is_empty() || b_grid.is_empty() {
        return Err(Error::contract("landscape grids must be nonempty"));
    }
    let base = net.embed(theta0, &probe.x)?;
    let mut values = Matrix::zeros(a_grid.len(), b_grid.len());
    for (i, &a) in a_grid.iter().enumerate() {
        for (j, &b) in b_grid.iter().enumerate() {
            let score = if a == 0.0 && b == 0.0 {
                0.0
            } else {
                let theta = ParamVector::new(
                    theta0
                        .iter()
                        .zip(d1.iter())
                        .zip(d2.iter())
                        .map(|((t, u), v)| t + a * u + b * v)
                        .collect(),
                );
                deviation_from(net, &base, &theta, probe)?
            };
            values.set(i, j, score);
        }
    }
    Ok(LandscapeGrid {
        anchor: theta0.clone(),
        d1: d1.clone(),
        d2: d2.clone(),
        a: a_grid.to_vec(),
        b: b_grid.to_vec(),
        values,
    })
}
