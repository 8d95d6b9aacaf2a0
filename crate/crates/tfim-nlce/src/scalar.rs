//! Floating-point abstraction for the simulation kernels.
//!
//! Every numerical routine in this crate is generic over [`Scalar`] so the
//! same code runs in `f32` and `f64`. The crate root exports concrete
//! `f64` aliases for the common case.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, RemAssign, SubAssign};

use num_traits as nt;

/// Real scalar usable in state vectors, gradients, and eigensolvers.
///
/// The supertraits cover arithmetic (`nt::Float`), math constants
/// (`nt::FloatConst`), conversion from literals (`nt::FromPrimitive`),
/// iterator reduction (`Sum`), in-place operators, threading (`Send +
/// Sync`), and formatting. Implemented for `f32` and `f64`.
pub trait Scalar:
    nt::Float
    + nt::FloatConst
    + nt::FromPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + RemAssign
    + Send
    + Sync
    + Debug
    + Display
    + LowerExp
    + 'static
{
    /// Tolerance for unitarity / normalization checks: `max(1e-12, 64 eps)`.
    ///
    /// The floor keeps `f64` checks meaningful while the `64 eps` term
    /// loosens them appropriately for `f32`.
    fn unit_tol() -> Self {
        let floor = cast::<Self>(1e-12);
        let eps64 = Self::epsilon() * cast::<Self>(64.0);
        if eps64 > floor {
            eps64
        } else {
            floor
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` literal into the active scalar type.
///
/// Panics only if the target type cannot represent any `f64`, which does
/// not happen for the two implementors.
#[inline]
pub fn cast<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("f64 literal converts into scalar type")
}

/// Converts a `usize` count into the active scalar type.
///
/// Counts in this crate (sites, bonds, shots) stay far below 2^53, so the
/// conversion is exact in `f64` and merely rounded in `f32`.
#[inline]
pub fn cast_usize<S: Scalar>(n: usize) -> S {
    S::from_usize(n).expect("usize count converts into scalar type")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_tol_f64_is_floor() {
        assert_eq!(<f64 as Scalar>::unit_tol(), 1e-12);
    }

    #[test]
    fn unit_tol_f32_scales_with_eps() {
        let tol = <f32 as Scalar>::unit_tol();
        assert!(tol > 1e-6 && tol < 1e-4);
    }

    #[test]
    fn cast_roundtrip() {
        assert_eq!(cast::<f64>(0.25), 0.25);
        assert_eq!(cast::<f32>(0.25), 0.25f32);
        assert_eq!(cast_usize::<f64>(12), 12.0);
    }
}
