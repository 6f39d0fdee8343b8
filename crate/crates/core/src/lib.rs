//! Two-dimensional plane-strain collocation boundary elements for quasistatic
//! linear visco-elasticity.
//!
//! Every implicit time step of a rheology `ξ2 σ'' + ξ1 σ' + ξ0 σ = C e(χ2 u'' +
//! χ1 u' + χ0 u)` is rewritten as an elastostatic problem in an auxiliary
//! displacement `v`. The boundary-element system is therefore assembled and
//! factorized once; each step only transforms boundary data, back-substitutes
//! and recovers the physical displacement and traction histories.

// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod case;
pub mod contact;
pub mod coupling;
pub mod error;
pub mod kernels;
mod linalg;
pub mod model;
pub mod postprocess;
pub mod quadrature;
pub mod timestepper;

pub use error::{Error, Result};
