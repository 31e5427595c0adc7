//! Parameter transformations `p = φ(u)` used to impose positivity or bounds
//! on model parameters while the solver iterates on the unconstrained
//! internal coordinate `u`.

use core::fmt;

use crate::math;

/// Per-parameter transformation between internal coordinate `u` and model
/// parameter `p`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Transform {
    #[default]
    Identity,
    /// `p = exp(u)`, keeps `p > 0`.
    Exponential,
    /// `p = A + (B − A)/2 · (1 + sin u)`, keeps `A ≤ p ≤ B`.
    Sinusoidal { lower: f64, upper: f64 },
    /// `p = C + (1 − √(1 + u²))`, keeps `p ≤ C`.
    RootSquareUpper { bound: f64 },
    /// `p = C − (1 − √(1 + u²))`, keeps `p ≥ C`.
    RootSquareLower { bound: f64 },
}

/// `p` lies outside the range of the transformation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutOfRange {
    pub transform: Transform,
    pub value: f64,
}

impl fmt::Display for OutOfRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.transform {
            Transform::Identity => write!(f, "parameter value {} is not finite", self.value),
            Transform::Exponential => {
                write!(f, "parameter value {} must be positive for exp transform", self.value)
            }
            Transform::Sinusoidal { lower, upper } => write!(
                f,
                "parameter value {} outside [{lower}, {upper}] of sin transform",
                self.value
            ),
            Transform::RootSquareUpper { bound } => {
                write!(f, "parameter value {} exceeds upper bound {bound}", self.value)
            }
            Transform::RootSquareLower { bound } => {
                write!(f, "parameter value {} below lower bound {bound}", self.value)
            }
        }
    }
}

impl core::error::Error for OutOfRange {}

impl Transform {
    /// `p = φ(u)`.
    pub fn forward(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => u,
            Transform::Exponential => math::exp(u),
            Transform::Sinusoidal { lower, upper } => {
                lower + 0.5 * (upper - lower) * (1.0 + math::sin(u))
            }
            Transform::RootSquareUpper { bound } => bound + (1.0 - math::hypot(1.0, u)),
            Transform::RootSquareLower { bound } => bound - (1.0 - math::hypot(1.0, u)),
        }
    }

    /// `u = φ⁻¹(p)`. The sinusoidal inverse takes the principal branch
    /// `u ∈ [−π/2, π/2]`, the root-square inverses take `u ≥ 0`.
    pub fn backward(&self, p: f64) -> Result<f64, OutOfRange> {
        let err = OutOfRange {
            transform: *self,
            value: p,
        };
        if !p.is_finite() {
            return Err(err);
        }
        match *self {
            Transform::Identity => Ok(p),
            Transform::Exponential => {
                if p > 0.0 {
                    Ok(math::ln(p))
                } else {
                    Err(err)
                }
            }
            Transform::Sinusoidal { lower, upper } => {
                if p < lower || p > upper {
                    return Err(err);
                }
                let s = (2.0 * (p - lower) / (upper - lower) - 1.0).clamp(-1.0, 1.0);
                Ok(math::asin(s))
            }
            Transform::RootSquareUpper { bound } => {
                if p > bound {
                    return Err(err);
                }
                Ok(root_square_inverse(bound - p))
            }
            Transform::RootSquareLower { bound } => {
                if p < bound {
                    return Err(err);
                }
                Ok(root_square_inverse(p - bound))
            }
        }
    }

    /// `dp/du` at `u`.
    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => 1.0,
            Transform::Exponential => math::exp(u),
            Transform::Sinusoidal { lower, upper } => 0.5 * (upper - lower) * math::cos(u),
            Transform::RootSquareUpper { .. } => -u / math::hypot(1.0, u),
            Transform::RootSquareLower { .. } => u / math::hypot(1.0, u),
        }
    }

    pub(crate) fn validate(&self) -> bool {
        match *self {
            Transform::Sinusoidal { lower, upper } => {
                lower.is_finite() && upper.is_finite() && lower < upper
            }
            Transform::RootSquareUpper { bound } | Transform::RootSquareLower { bound } => {
                bound.is_finite()
            }
            _ => true,
        }
    }
}

/// Solves `√(1 + u²) − 1 = d` for `u ≥ 0` without cancellation:
/// `u² = d (d + 2)`.
fn root_square_inverse(d: f64) -> f64 {
    math::sqrt(d * (d + 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_PI_2;
    use proptest::prelude::*;

    const SIN02: Transform = Transform::Sinusoidal {
        lower: 0.0,
        upper: 2.0,
    };

    #[test]
    fn forward_examples() {
        assert_eq!(Transform::Exponential.forward(0.0), 1.0);
        assert_eq!(SIN02.forward(FRAC_PI_2), 2.0);
        assert_eq!(Transform::RootSquareUpper { bound: 5.0 }.forward(0.0), 5.0);
    }

    #[test]
    fn backward_examples() {
        assert_eq!(Transform::Exponential.backward(1.0).unwrap(), 0.0);
        assert_eq!(SIN02.backward(1.0).unwrap(), 0.0);
        assert!(Transform::Exponential.backward(-1.0).is_err());
        assert!(SIN02.backward(2.5).is_err());
        assert!(Transform::RootSquareUpper { bound: 1.0 }.backward(1.5).is_err());
        assert!(Transform::RootSquareLower { bound: 1.0 }.backward(0.5).is_err());
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(Transform::Exponential.derivative(0.0), 1.0);
        assert_eq!(SIN02.derivative(0.0), 1.0);
        assert_eq!(Transform::RootSquareUpper { bound: 5.0 }.derivative(0.0), 0.0);
    }

    fn any_transform() -> impl Strategy<Value = Transform> {
        prop_oneof![
            Just(Transform::Identity),
            Just(Transform::Exponential),
            (-10.0..10.0f64, 0.1..20.0f64).prop_map(|(a, w)| Transform::Sinusoidal {
                lower: a,
                upper: a + w
            }),
            (-10.0..10.0f64).prop_map(|c| Transform::RootSquareUpper { bound: c }),
            (-10.0..10.0f64).prop_map(|c| Transform::RootSquareLower { bound: c }),
        ]
    }

    proptest! {
        #[test]
        fn roundtrip_on_range(t in any_transform(), u in -3.0..3.0f64) {
            // any p in the range is reachable as forward(u)
            let p = t.forward(u);
            let back = t.forward(t.backward(p).unwrap());
            prop_assert!((back - p).abs() <= 1e-12 * p.abs().max(1.0));
        }

        #[test]
        fn bounded_outputs(u in -1e6..1e6f64, c in -10.0..10.0f64, w in 0.1..5.0f64) {
            let s = Transform::Sinusoidal { lower: c, upper: c + w };
            let p = s.forward(u);
            prop_assert!(p >= c && p <= c + w);
            prop_assert!(s.derivative(u).abs() <= 0.5 * w + 1e-15);
            let upper = Transform::RootSquareUpper { bound: c };
            let lower = Transform::RootSquareLower { bound: c };
            prop_assert!(upper.forward(u) <= c);
            prop_assert!(lower.forward(u) >= c);
            prop_assert!(upper.derivative(u).abs() <= 1.0);
        }

        #[test]
        fn derivative_matches_difference(t in any_transform(), u in -2.0..2.0f64) {
            let h = 1e-6;
            let fd = (t.forward(u + h) - t.forward(u - h)) / (2.0 * h);
            prop_assert!((fd - t.derivative(u)).abs() <= 1e-6 * t.derivative(u).abs().max(1.0));
        }
    }
}
