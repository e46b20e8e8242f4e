// NaN-rejecting guards are written as negated comparisons; index loops mirror
// the component notation of the numerics.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dynamics;
pub mod error;
pub mod evans;
pub mod kernelsum;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod profile;
pub mod quad;

pub use error::{Error, Result};
