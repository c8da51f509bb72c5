use crate::error::{Error, Result};
use crate::model::{AdaptedNet, Batch, ParamVector};

/// Anchor and diagonal Fisher recorded at the end of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct EwcState {
    pub theta_star: ParamVector,
    pub fisher: Vec<f64>,
    pub lambda_ewc: f64,
}

/// Mean of squared per-sample gradients. `grad_of(i)` returns the gradient
/// of the log-likelihood of sample `i`; sign is irrelevant.
pub fn empirical_fisher<F>(n: usize, len: usize, mut grad_of: F) -> Result<Vec<f64>>
where
    F: FnMut(usize) -> Result<Vec<f64>>,
{
    if n == 0 {
        return Err(Error::contract("Fisher estimate needs at least one sample"));
    }
    let mut acc = vec![0.0; len];
    for i in 0..n {
        let g = grad_of(i)?;
        if g.len() != len {
            return Err(Error::dims("empirical_fisher", len, g.len()));
        }
        for (a, v) in acc.iter_mut().zip(&g) {
            *a += v * v;
        }
    }
    let n = n as f64;
    for a in &mut acc {
        *a /= n;
    }
    Ok(acc)
}

/// Empirical diagonal Fisher of the adapter parameters over every sample of
/// `dataset`, using the observed labels.
pub fn ewc_fisher(net: &AdaptedNet, theta: &ParamVector, dataset: &Batch) -> Result<Vec<f64>> {
    dataset.validate(net.arch().input_dim, net.arch().classes)?;
    empirical_fisher(dataset.len(), theta.len(), |i| {
        let single = dataset.select(&[i]);
        let (_, g) = net.loss_and_grad(theta, &single, 0.0, None)?;
        Ok(g.into_vec())
    })
}

/// `Σ_tasks (λ/2)·Σᵢ Fᵢ(θᵢ − θ*ᵢ)²` and its gradient `Σ_tasks λ·F⊙(θ − θ*)`.
pub fn ewc_penalty_grad(theta: &ParamVector, states: &[EwcState]) -> Result<(f64, ParamVector)> {
    let mut penalty = 0.0;
    let mut grad = vec![0.0; theta.len()];
    for s in states {
        s.theta_star.check_len(theta.len(), "ewc_penalty_grad")?;
        if s.fisher.len() != theta.len() {
            return Err(Error::dims("ewc_penalty_grad", theta.len(), s.fisher.len()));
        }
        let mut sum = 0.0;
        for (((g, &t), &ts), &f) in grad
            .iter_mut()
            .zip(theta.iter())
            .zip(s.theta_star.iter())
            .zip(&s.fisher)
        {
            let d = t - ts;
            sum += f * d * d;
            *g += s.lambda_ewc * f * d;
        }
        penalty += 0.5 * s.lambda_ewc * sum;
    }
    Ok((penalty, ParamVector::new(grad)))
}
