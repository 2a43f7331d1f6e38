//! Scalar abstraction shared by the linear-algebra modules.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the spectral and Grassmannian code: `f32` or `f64`.
///
/// Method calls go through [`RealField`]; `num-traits` supplies the
/// conversions. `num_traits::Float` is deliberately not a supertrait because
/// its method names collide with `RealField`'s.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Converts an `f64` literal into this scalar.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    /// Lossy conversion to `f64` for reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// A tolerance that is `nominal` in double precision but never tighter
    /// than a few hundred ulps of the scalar type.
    fn tol(nominal: f64) -> Self {
        let floor = Self::default_epsilon() * Self::lit(512.0);
        let t = Self::lit(nominal);
        if t > floor {
            t
        } else {
            floor
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_floor_depends_on_precision() {
        assert_eq!(f64::tol(1e-10), 1e-10);
        assert!(f32::tol(1e-10) > 1e-5);
        assert_eq!(f32::lit(0.5), 0.5f32);
    }
}
