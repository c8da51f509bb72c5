use crate::error::{Error, Result};
use crate::model::ParamVector;
use crate::numerics::dot;

/// Average gradient over a memory batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GradRef {
    pub g_ref: ParamVector,
}

/// Projects `g` onto the half-space `⟨g, g_ref⟩ ≥ 0`.
///
/// Gradients already inside the half-space, and any gradient when the
/// reference has zero norm, are returned unchanged (bit-exact).
pub fn agem_project(g: &ParamVector, reference: &GradRef) -> Result<ParamVector> {
    let r = &reference.g_ref;
    r.check_len(g.len(), "agem_project")?;
    if !r.is_finite() {
        return Err(Error::NonFinite("A-GEM reference gradient".into()));
    }
    let rr = dot(r.as_slice(), r.as_slice());
    if rr == 0.0 {
        return Ok(g.clone());
    }
    let gr = dot(g.as_slice(), r.as_slice());
    if gr >= 0.0 {
        return Ok(g.clone());
    }
    g.axpy(-gr / rr, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec())
    }

    fn gref(v: &[f64]) -> GradRef {
        GradRef { g_ref: pv(v) }
    }

    #[test]
    fn orthogonal_passes_through() {
        assert_eq!(
            agem_project(&pv(&[1.0, 0.0]), &gref(&[0.0, 1.0])).unwrap(),
            pv(&[1.0, 0.0])
        );
    }

    #[test]
    fn conflicting_is_projected() {
        assert_eq!(
            agem_project(&pv(&[1.0, -1.0]), &gref(&[0.0, 1.0])).unwrap(),
            pv(&[1.0, 0.0])
        );
    }

    #[test]
    fn zero_reference_is_identity() {
        let g = pv(&[0.4, -2.0]);
        assert_eq!(agem_project(&g, &gref(&[0.0, 0.0])).unwrap(), g);
    }

    #[test]
    fn random_sweep_inner_product_and_idempotence() {
        let mut rng = Rng::new(50);
        for _ in 0..200 {
            let g = pv(&rng.gaussian_vec(50, 0.0, 1.0));
            let r = gref(&rng.gaussian_vec(50, 0.0, 1.0));
            let out = agem_project(&g, &r).unwrap();
            assert!(dot(out.as_slice(), r.g_ref.as_slice()) >= -1e-12);
            let again = agem_project(&out, &r).unwrap();
            for (a, b) in again.iter().zip(out.iter()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn length_mismatch() {
        assert!(agem_project(&pv(&[1.0]), &gref(&[1.0, 2.0])).is_err());
    }
}
