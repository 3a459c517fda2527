//! Numerical verification engine for the geometry of lightlike
//! hypersurfaces: induced degenerate-metric objects, Weyl screen
//! connections, their curvatures, and the closed-form identities relating
//! them, all validated against independent brute-force oracles on sample
//! grids.

// Index loops mirror the tensor formulas; guards are how float constants
// are matched; the jet arithmetic deliberately shadows operator names.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::redundant_guards)]
#![allow(clippy::should_implement_trait)]
#![allow(clippy::len_without_is_empty)]

pub mod ambient;
pub mod degcalc;
pub mod fixtures;
pub mod foliation;
pub mod hypersurface;
pub mod error;
pub mod expr;
pub mod jet;
pub mod kaehler;
pub mod report;
pub mod spec;
pub mod suites;
pub mod weyl;

pub use error::{Error, Result};
