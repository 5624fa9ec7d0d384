//! Exact section maps for infinite staircase surfaces and wind-tree billiards.

pub mod coding;
pub mod observables;
pub mod ring_iet;
pub mod scalar;
pub mod section;
pub mod singular;
pub mod skew;
pub mod staircase;
pub mod windtree;

pub use num_rational::BigRational;
pub use scalar::{Scalar, ScalarError};

/// Exact rational scalar used by every singularity and partition computation.
pub type Rational = BigRational;

pub type RationalStaircase = staircase::Staircase<Rational>;
pub type FloatStaircase = staircase::Staircase<f64>;
pub type RationalWidths = staircase::WidthSequence<Rational>;
pub type RationalPoint = staircase::SectionPoint<Rational>;
