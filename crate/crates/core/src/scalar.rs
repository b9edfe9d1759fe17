//! Scalar abstraction for the numeric kernels.
//!
//! The math modules (`net`, `control`, `env`, `linalg`) are generic over
//! [`Real`] so they run at f32 or f64. The shipped pipeline and the store
//! format instantiate everything at f64 (see the crate-root aliases).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar: f32 or f64.
pub trait Real: Float + FromPrimitive + Debug + Display + Default + 'static {
    /// Lossless-as-possible conversion from an f64 literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal convertible to scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}
