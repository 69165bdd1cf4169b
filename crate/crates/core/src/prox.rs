//! Proximal operators: scalar soft thresholding, the l1 prox, and the
//! orthant projection used by the reduced post-identification iteration.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ProxError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid sign pattern: {0}")]
    InvalidSignPattern(String),
}

/// Sign convention used by all diagnostics in this crate: `sgn(0) = +1`.
#[inline]
pub fn sgn<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one()
    } else {
        -T::one()
    }
}

/// Scalar soft threshold `S_nu(v) = [|v| - nu]_+ sgn(v)`.
#[inline]
pub fn soft_threshold<T: Scalar>(v: T, nu: T) -> T {
    let m = v.abs() - nu;
    if m > T::zero() {
        m * sgn(v)
    } else {
        T::zero()
    }
}

/// Componentwise soft threshold: the proximal operator of `nu * ||.||_1`.
pub fn prox_l1<T: Scalar>(z: &[T], nu: T) -> Vec<T> {
    z.iter().map(|&v| soft_threshold(v, nu)).collect()
}

/// Per-index sign pattern over an index set, entries in `{-1, +1}`.
///
/// Built from the constant gradient `h*` restricted to the boundary set,
/// where the natural orthant for the reduced problem is `-sgn(h*_i) x_i >= 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignPattern {
    signs: Vec<i8>,
}

impl SignPattern {
    pub fn new(signs: Vec<i8>) -> Result<Self, ProxError> {
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(ProxError::InvalidSignPattern(
                "entries must be +1 or -1".into(),
            ));
        }
        Ok(Self { signs })
    }

    /// Pattern `-sgn(h*_i)` over the given entries of `h*`.
    pub fn from_h_star<T: Scalar>(h_star_on_set: &[T]) -> Self {
        Self {
            signs: h_star_on_set
                .iter()
                .map(|&h| if sgn(h) > T::zero() { -1 } else { 1 })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }
}

/// Projection onto the orthant `{x : s_i x_i >= 0}`: keeps feasible
/// coordinates, zeroes the rest.
pub fn project_orthant<T: Scalar>(x: &[T], s: &SignPattern) -> Result<Vec<T>, ProxError> {
    if x.len() != s.len() {
        return Err(ProxError::DimensionMismatch(format!(
            "vector length {} vs sign pattern length {}",
            x.len(),
            s.len()
        )));
    }
    Ok(x.iter()
        .zip(s.signs())
        .map(|(&xi, &si)| {
            let signed = if si > 0 { xi } else { -xi };
            if signed >= T::zero() {
                xi
            } else {
                T::zero()
            }
        })
        .collect())
}

/// Checks the subdifferential optimality condition `z - p in nu d||.||_1(p)`
/// componentwise, to tolerance `tol`.
pub fn check_prox_optimality<T: Scalar>(
    z: &[T],
    p: &[T],
    nu: T,
    tol: T,
) -> Result<bool, ProxError> {
    if z.len() != p.len() {
        return Err(ProxError::DimensionMismatch(format!(
            "lengths {} vs {}",
            z.len(),
            p.len()
        )));
    }
    Ok(z.iter().zip(p).all(|(&zi, &pi)| {
        if pi != T::zero() {
            (zi - pi - nu * sgn(pi)).abs() <= tol
        } else {
            zi.abs() <= nu + tol
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    #[test]
    fn soft_threshold_basic() {
        assert_eq!(soft_threshold(2.0, 0.5), 1.5);
        assert_eq!(soft_threshold(0.3, 0.5), 0.0);
        assert_eq!(soft_threshold(-1.0, 1.0), 0.0);
        assert_eq!(soft_threshold(-2.0, 0.5), -1.5);
        assert_eq!(soft_threshold(0.0, 0.0), 0.0);
    }

    #[test]
    fn prox_l1_componentwise() {
        assert_eq!(prox_l1(&[2.0, -0.3], 0.5), vec![1.5, 0.0]);
        assert_eq!(prox_l1(&[2.0, -0.3], 0.0), vec![2.0, -0.3]);
        assert_eq!(prox_l1(&[0.0, 0.0], 0.7), vec![0.0, 0.0]);
    }

    #[test]
    fn orthant_projection_cases() {
        let s = SignPattern::new(vec![1, -1]).unwrap();
        assert_eq!(project_orthant(&[2.0, 3.0], &s).unwrap(), vec![2.0, 0.0]);
        let feasible = project_orthant(&[2.0, -3.0], &s).unwrap();
        assert_eq!(feasible, vec![2.0, -3.0]);
        let all_pos = SignPattern::new(vec![1, 1]).unwrap();
        assert_eq!(
            project_orthant(&[-1.0, -1.0], &all_pos).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn orthant_projection_dimension_mismatch() {
        let s = SignPattern::new(vec![1]).unwrap();
        assert!(project_orthant(&[1.0, 2.0], &s).is_err());
    }

    #[test]
    fn sign_pattern_from_h_star() {
        let p = SignPattern::from_h_star(&[-1.0, 1.0, 0.0]);
        // sgn(0) = +1, so the orthant sign for a zero entry is -1.
        assert_eq!(p.signs(), &[1, -1, -1]);
    }

    #[test]
    fn prox_optimality_examples() {
        assert!(check_prox_optimality(&[2.0], &[1.5], 0.5, 1e-12).unwrap());
        assert!(check_prox_optimality(&[0.3], &[0.0], 0.5, 1e-12).unwrap());
        assert!(!check_prox_optimality(&[2.0], &[1.9], 0.5, 1e-12).unwrap());
    }

    #[test]
    fn prox_satisfies_optimality_on_random_points() {
        let mut rng = SplitMix64::new(2024);
        for _ in 0..1000 {
            let n = 1 + rng.next_below(8) as usize;
            let z: Vec<f64> = (0..n).map(|_| 3.0 * rng.next_gaussian()).collect();
            let nu = rng.next_f64();
            let p = prox_l1(&z, nu);
            assert!(check_prox_optimality(&z, &p, nu, 1e-12).unwrap());
        }
    }

    #[test]
    fn shrinkage_gap_when_signs_disagree() {
        // |b| >= nu and sgn(a) != sgn(b)  =>  |S(a) - S(b)| <= |a - b| - nu.
        let mut rng = SplitMix64::new(11);
        for _ in 0..1000 {
            let nu = rng.next_f64() + 1e-3;
            let b_mag = nu + rng.next_f64();
            let flip = rng.next_f64() < 0.5;
            let b = if flip { b_mag } else { -b_mag };
            let a_mag = 2.0 * rng.next_f64();
            let a = if flip { -a_mag } else { a_mag };
            let lhs = (soft_threshold(a, nu) - soft_threshold(b, nu)).abs();
            assert!(lhs <= (a - b).abs() - nu + 1e-12, "a={a} b={b} nu={nu}");
        }
    }

    #[test]
    fn shrinkage_gap_when_one_side_vanishes() {
        // S(a) != 0 = S(b)  =>  |S(a) - S(b)| <= |a - b| - (nu - |b|).
        let mut rng = SplitMix64::new(12);
        for _ in 0..1000 {
            let nu = rng.next_f64() + 1e-3;
            let a_sign = if rng.next_f64() < 0.5 { 1.0 } else { -1.0 };
            let a = a_sign * (nu + rng.next_f64() + 1e-9);
            let b = (2.0 * rng.next_f64() - 1.0) * nu * 0.999;
            let sa = soft_threshold(a, nu);
            let sb = soft_threshold(b, nu);
            assert_ne!(sa, 0.0);
            assert_eq!(sb, 0.0);
            let lhs = (sa - sb).abs();
            assert!(lhs <= (a - b).abs() - (nu - b.abs()) + 1e-12, "a={a} b={b} nu={nu}");
        }
    }

    proptest! {
        #[test]
        fn soft_threshold_nonexpansive(
            a in -100.0f64..100.0,
            b in -100.0f64..100.0,
            nu in 0.0f64..50.0,
        ) {
            let lhs = (soft_threshold(a, nu) - soft_threshold(b, nu)).abs();
            prop_assert!(lhs <= (a - b).abs() + 1e-12);
        }

        #[test]
        fn orthant_projection_idempotent_and_nonexpansive(
            seed in any::<u64>(),
            n in 1usize..12,
        ) {
            let mut rng = SplitMix64::new(seed);
            let signs: Vec<i8> = (0..n).map(|_| if rng.next_f64() < 0.5 { 1 } else { -1 }).collect();
            let s = SignPattern::new(signs).unwrap();
            let x: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
            let px = project_orthant(&x, &s).unwrap();
            let ppx = project_orthant(&px, &s).unwrap();
            prop_assert_eq!(&px, &ppx);
            let py = project_orthant(&y, &s).unwrap();
            let d_proj: f64 = px.iter().zip(&py).map(|(u, v)| (u - v) * (u - v)).sum();
            let d_orig: f64 = x.iter().zip(&y).map(|(u, v)| (u - v) * (u - v)).sum();
            prop_assert!(d_proj.sqrt() <= d_orig.sqrt() + 1e-12);
        }
    }
}
