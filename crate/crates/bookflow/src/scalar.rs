use std::fmt::{Debug, Display};
use std::ops::{AddAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the point-process and statistics math is generic
/// over: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + AddAssign + SubAssign + Debug + Display + Send + Sync + 'static
{
    /// Shorthand for converting an `f64` constant into the scalar type.
    #[inline]
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("constant not representable in scalar type")
    }

    /// Smallest representable value strictly greater than `self`.
    ///
    /// Used to break timestamp ties so event streams stay strictly ordered.
    fn next_above(self) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn next_above(self) -> Self {
        self.next_up()
    }
}

impl Scalar for f64 {
    #[inline]
    fn next_above(self) -> Self {
        self.next_up()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn next_above_is_strictly_greater() {
        let t = 86_400.0_f64;
        assert!(t.next_above() > t);
        assert_eq!(t.next_above().next_down(), t);
        let s = 1.5_f32;
        assert!(s.next_above() > s);
    }
}
