//! The C¹ penalty family replacing the bilateral constraint.
//!
//! ```text
//!            ⎧ 0          r ≥ 0
//! β_δ(r) = 1/δ ⎨ -r²        -1/2 ≤ r ≤ 0
//!            ⎩ r + 1/4    r ≤ -1/2
//! ```

use thiserror::Error;

use crate::grid::Field;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("penalty parameter must be finite and > 0, got {0}")]
pub struct InvalidPenalty(pub f64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams {
    delta: f64,
}

impl PenaltyParams {
    pub fn new(delta: f64) -> Result<Self, InvalidPenalty> {
        if delta.is_finite() && delta > 0.0 {
            Ok(Self { delta })
        } else {
            Err(InvalidPenalty(delta))
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Nonpositive, nondecreasing.
    pub fn beta(&self, r: f64) -> f64 {
        let v = if r >= 0.0 {
            0.0
        } else if r >= -0.5 {
            -r * r
        } else {
            r + 0.25
        };
        v / self.delta
    }

    /// Nonnegative, bounded by `1/δ`.
    pub fn beta_prime(&self, r: f64) -> f64 {
        let v = if r >= 0.0 {
            0.0
        } else if r >= -0.5 {
            -2.0 * r
        } else {
            1.0
        };
        v / self.delta
    }

    /// Branchwise derivative of `beta_prime`. At the kinks the middle branch
    /// owns `(-1/2, 0]`.
    pub fn beta_second(&self, r: f64) -> f64 {
        if r > 0.0 || r <= -0.5 {
            0.0
        } else {
            -2.0 / self.delta
        }
    }

    pub fn beta_field(&self, r: &Field) -> Field {
        r.map(|v| self.beta(v))
    }

    pub fn beta_prime_field(&self, r: &Field) -> Field {
        r.map(|v| self.beta_prime(v))
    }

    pub fn beta_second_field(&self, r: &Field) -> Field {
        r.map(|v| self.beta_second(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(delta: f64) -> PenaltyParams {
        PenaltyParams::new(delta).unwrap()
    }

    #[test]
    fn branch_values() {
        let b = p(0.1);
        assert_eq!(b.beta(0.3), 0.0);
        assert!((b.beta(-0.25) + 0.625).abs() < 1e-14);
        assert!((b.beta(-1.0) + 7.5).abs() < 1e-14);

        assert_eq!(b.beta_prime(1.0), 0.0);
        assert!((b.beta_prime(-0.25) - 5.0).abs() < 1e-14);
        assert!((b.beta_prime(-2.0) - 10.0).abs() < 1e-14);

        assert_eq!(b.beta_second(1.0), 0.0);
        assert!((b.beta_second(-0.25) + 20.0).abs() < 1e-14);
        assert_eq!(b.beta_second(-2.0), 0.0);
    }

    #[test]
    fn second_derivative_at_kinks() {
        let b = p(0.5);
        assert_eq!(b.beta_second(0.0), -4.0);
        assert_eq!(b.beta_second(-0.5), 0.0);
        assert_eq!(b.beta_second(f64::MIN_POSITIVE), 0.0);
    }

    #[test]
    fn rejects_nonpositive_delta() {
        assert!(PenaltyParams::new(0.0).is_err());
        assert!(PenaltyParams::new(-1.0).is_err());
        assert!(PenaltyParams::new(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn signs(r in -5.0f64..5.0, delta in 1e-6f64..10.0) {
            let b = p(delta);
            prop_assert!(b.beta(r) <= 0.0);
            prop_assert!(b.beta_prime(r) >= 0.0);
            prop_assert!(b.beta_prime(r) <= 1.0 / delta * (1.0 + 1e-15));
            prop_assert!(b.beta_second(r) <= 0.0);
        }

        #[test]
        fn monotone(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let pen = p(0.01);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(pen.beta(lo) <= pen.beta(hi));
            prop_assert!(pen.beta_prime(lo) >= pen.beta_prime(hi));
        }
    }
}
