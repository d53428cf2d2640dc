use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the analytic modules are generic over.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal; exact for `f64`, rounded for `f32`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }

    /// Tolerance used for simplex-sum checks: 1e-12 for `f64`, scaled up to
    /// the type's precision otherwise.
    fn simplex_tol(len: usize) -> Self {
        let eps = Self::epsilon() * Self::lit(8.0 * len.max(1) as f64);
        eps.max(Self::lit(1e-12))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
