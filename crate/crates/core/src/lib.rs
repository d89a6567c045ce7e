//! Regularized Landau equation with very soft potentials, together with the
//! regularity diagnostics built around it: entropy and truncated-entropy
//! functionals, the De Giorgi iteration, a dyadic singular-set scanner with
//! Vitali covering, and the axisymmetric long-range bounds.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod axisym;
pub mod collision;
pub mod config;
pub mod conv;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod inequalities;
pub mod kernel;
mod par;
pub mod regularity;
pub mod stepper;

pub use error::{Error, Result};
