use crate::error::{Error, Result};
use crate::linalg::{dot, norm2};

/// `min_{s = ±1} ‖x̂ − s·x‖₂ / ‖x‖₂`.
pub fn relative_distance(xhat: &[f64], x: &[f64]) -> Result<f64> {
    if xhat.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: xhat.len() });
    }
    let nx = norm2(x);
    if nx == 0.0 {
        return Err(Error::ZeroVector("relative distance against a zero truth"));
    }
    let mut minus = 0.0;
    let mut plus = 0.0;
    for (a, b) in xhat.iter().zip(x) {
        minus += (a - b) * (a - b);
        plus += (a + b) * (a + b);
    }
    Ok(minus.min(plus).sqrt() / nx)
}

/// `xᵀ(x̂ / ‖x̂‖₂)`; equals the cosine of the angle when `‖x‖₂ = 1`.
pub fn cosine_similarity(xhat: &[f64], x: &[f64]) -> Result<f64> {
    if xhat.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: xhat.len() });
    }
    let nh = norm2(xhat);
    if nh == 0.0 {
        return Err(Error::ZeroVector("cosine similarity of a zero estimate"));
    }
    Ok(dot(x, xhat) / nh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        let x = [0.3, -0.2, 0.5];
        assert_eq!(relative_distance(&x, &x).unwrap(), 0.0);
        assert_eq!(relative_distance(&[-0.3, 0.2, -0.5], &x).unwrap(), 0.0);
        assert_eq!(relative_distance(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 2f64.sqrt());
        assert!(matches!(relative_distance(&[1.0], &[0.0]), Err(Error::ZeroVector(_))));
    }

    #[test]
    fn cosine_examples() {
        let x = [0.6, 0.8];
        assert!((cosine_similarity(&[1.2, 1.6], &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_similarity(&[-0.6, -0.8], &x).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[0.8, -0.6], &x).unwrap(), 0.0);
        assert!(cosine_similarity(&[0.0, 0.0], &x).is_err());
    }

    proptest! {
        #[test]
        fn distance_is_sign_invariant(
            pair in (1usize..12).prop_flat_map(|n| (
                prop::collection::vec(-1.0f64..1.0, n),
                prop::collection::vec(-1.0f64..1.0, n),
            ))
        ) {
            let (xhat, x) = pair;
            prop_assume!(norm2(&x) > 1e-6);
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            prop_assert_eq!(relative_distance(&xhat, &x).unwrap(), relative_distance(&xhat, &neg).unwrap());
        }
    }
}
