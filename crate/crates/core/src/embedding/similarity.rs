use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimilarityError {
    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
}

/// `dot(u, v) / (|u| |v|)`, clamped to `[-1, 1]` against rounding.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, SimilarityError> {
    if u.len() != v.len() {
        return Err(SimilarityError::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_form_cases() {
        assert_eq!(cosine_similarity(&[3.0, -2.0], &[3.0, -2.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn undefined_inputs_are_errors() {
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(SimilarityError::ZeroVector));
        assert_eq!(cosine_similarity(&[1.0], &[1.0, 0.0]), Err(SimilarityError::DimensionMismatch(1, 2)));
    }

    fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, dim).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn symmetric_and_scale_invariant(
            (u, v) in (1usize..16).prop_flat_map(|d| (nonzero_vec(d), nonzero_vec(d))),
            alpha in 1e-3f64..1e3,
        ) {
            let uv = cosine_similarity(&u, &v).unwrap();
            let vu = cosine_similarity(&v, &u).unwrap();
            prop_assert!((uv - vu).abs() <= 1e-12);
            let scaled: Vec<f64> = u.iter().map(|x| x * alpha).collect();
            prop_assert!((cosine_similarity(&scaled, &v).unwrap() - uv).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&uv));
        }
    }
}
