use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the evidence algebra is written against: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Tolerance used when validating that masses sum to one.
    const MASS_TOLERANCE: Self;
    /// Tolerance used when deciding that a conflict degree equals one.
    const CONFLICT_TOLERANCE: Self;
    /// Slack allowed on quantities recovered through iterative consensus.
    const CONSENSUS_TOLERANCE: Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable in scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl Scalar for f64 {
    const MASS_TOLERANCE: Self = 1e-12;
    const CONFLICT_TOLERANCE: Self = 1e-12;
    const CONSENSUS_TOLERANCE: Self = 1e-9;
}

impl Scalar for f32 {
    const MASS_TOLERANCE: Self = 1e-5;
    const CONFLICT_TOLERANCE: Self = 1e-6;
    const CONSENSUS_TOLERANCE: Self = 1e-4;
}
