//! Exact-rational toolkit for non-concentrated collections of affine flats,
//! discrete measures on them, stable position certificates, projections,
//! thin graphs and a Beck-type dichotomy for finite point sets.
//!
//! All geometry is exact over `Q`; floating point only appears in fitted
//! exponents and constants.

pub mod beck;
pub mod decompose;
pub mod exactlin;
pub mod flatcollect;
pub mod flats;
pub mod measures;
pub mod project;
pub mod rng;
pub mod scene;
pub mod stability;
pub mod thin;

pub use exactlin::{Matrix, Scalar};
pub use flats::AffineFlat;
pub use measures::DiscreteMeasure;
