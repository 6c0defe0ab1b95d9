//! Certified output bounds for feed-forward networks under norm-bounded input
//! perturbations, and certified training built on the same bounds.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, timing and the
//! command-line driver live in the `certiprop` crate.
//!
//! Bounding engines:
//! - interval bound propagation ([`bounds::ibp_bounds`]),
//! - linear bound propagation, the forward input-affine recursion
//!   ([`bounds::lbp_bounds`]),
//! - back-substitution with bounded depth and the full back-substitution
//!   ([`bounds::crown_bounds`]),
//! - hybrids that bound hidden layers with IBP or LBP and the output with a
//!   full back-substitution ([`bounds::hybrid_bounds`]).

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod bounds;
pub mod data;
mod error;
pub mod linalg;
mod math;
pub mod netdef;
pub mod oracle;
pub mod relax;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use netdef::{ActivationKind, ActivationSpec, AffineLayer, Layer, MarginSpec, Network};
