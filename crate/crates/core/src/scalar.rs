use std::fmt::{Debug, Display};
use std::iter::{Product, Sum};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps, Signed, ToPrimitive};

/// Floating-point scalar used throughout the toolkit.
///
/// Implemented for `f32` and `f64`. The bound set is the union of what the
/// FFT backend needs (rustfft's `FftNum` is blanket-implemented for any
/// `Copy + FromPrimitive + Signed + Sync + Send + Debug + 'static` type) and
/// the float operations the estimators use, so everything downstream can be
/// written once against this trait.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Signed
    + NumAssignOps
    + Sum
    + Product
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant. Panics only if the value is not
    /// representable, which never happens for the literals used here.
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    /// Lossy view as f64, for error reporting and text output.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
