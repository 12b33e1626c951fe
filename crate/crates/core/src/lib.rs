//! Contact mapping-torus plugs over the unit ball of ℂ^m.
//!
//! The crate builds the return map `φ = φ₊ ∘ φ₋` of a plug (a rotation by
//! roughly `2π/n` composed with negative bumps on a packing of small balls),
//! evaluates its action and Calabi invariant in closed form, cross-checks them
//! against independent numerical oracles, and assembles the results into
//! certificates for the volume, the minimal Reeb period and the systolic ratio
//! of the resulting contact form on `S^{2m+1}`. A separate module handles the
//! radial collar profiles used near the binding of an open book.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bump;
pub mod certificate;
pub mod collar;
pub mod cutoff;
pub mod error;
pub mod geometry;
pub mod packing;
pub mod plug;
pub mod quadrature;
pub mod radial;
pub mod sampling;
pub mod sphere;

pub use certificate::{Certificate, Check, Evidence};
pub use error::{Error, Result};
pub use geometry::Point;
