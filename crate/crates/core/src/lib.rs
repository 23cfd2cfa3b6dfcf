//! Numerical toolkit for the critical Lane–Emden problem
//! `-Δu = |u|^{4/(N-2)} u` on an annulus `{a < |x| < b}`.
//!
//! The crate builds the positive radial solution, certifies its
//! non-degeneracy mode by mode, projects Aubin–Talenti bubbles onto the
//! annulus, assembles the radial solution minus k bubbles placed on a
//! regular polygon, and measures its error term and reduced energy.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ansatz;
pub mod bubble;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod norms;
pub mod numerics;
pub mod projection;
pub mod radial;
pub mod spectrum;

pub use error::{LabError, Result};
pub use geometry::{AnnulusGeometry, PolygonConfig, SymmetryProbe};
