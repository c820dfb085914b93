//! Numeric abstractions shared by the scoring and clustering code.
//!
//! Scoring arithmetic only needs a field with ordering, so it is written
//! against [`Scalar`] and runs unchanged on `f32`, `f64` and exact
//! rationals. Clustering needs square roots and is written against
//! [`num_traits::Float`].

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, ToPrimitive};

/// A real-valued field element usable by the scoring code.
pub trait Scalar: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug {
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Lossy conversion for reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Exact outcome indicator: 1 for yes, 0 for no.
    fn indicator(yes: bool) -> Self {
        if yes {
            Self::one()
        } else {
            Self::zero()
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
impl Scalar for Ratio<i64> {}
impl Scalar for Ratio<i128> {}
