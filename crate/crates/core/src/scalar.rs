//! Floating-point scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Real scalar the solvers are generic over: `f32` or `f64`.
///
/// Tolerances quoted in the docs assume `f64`; `f32` works but only at
/// single-precision accuracy.
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal out of range for scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Smallest representable value strictly above `self` (for finite, non-negative
    /// inputs it is one or two ulps up).
    #[inline]
    fn nudge_up(self) -> Self {
        let scale = self.abs().max(Self::min_positive_value());
        self + scale * Self::epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nudge_is_strictly_above() {
        for x in [0.0f64, 1e-300, 0.25, 1.0, 7.5, 1e10] {
            let y = x.nudge_up();
            assert!(y > x);
            assert!(y - x <= 2.0 * x.abs().max(f64::MIN_POSITIVE) * f64::EPSILON);
        }
        assert!(0.5f32.nudge_up() > 0.5f32);
    }
}
