use crate::error::{Error, Result};
use crate::model::ParamVector;

/// Slow-learner update `θˡ ← λ·θˡ + (1 − λ)·θʷ`.
///
/// Evaluated as `θʷ + λ·(θˡ − θʷ)`, which makes `θˡ = θʷ` an exact fixed
/// point. The endpoints return copies of the respective input so that
/// `λ = 0` and `λ = 1` are bit-exact.
pub fn ema_update(
    theta_l: &ParamVector,
    theta_w: &ParamVector,
    lambda: f64,
) -> Result<ParamVector> {
    theta_w.check_len(theta_l.len(), "ema_update")?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::contract(format!(
            "EMA ratio must lie in [0, 1], got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return Ok(theta_w.clone());
    }
    if lambda == 1.0 {
        return Ok(theta_l.clone());
    }
    Ok(ParamVector::new(
        theta_l
            .iter()
            .zip(theta_w.iter())
            .map(|(l, w)| w + lambda * (l - w))
            .collect(),
    ))
}
