// NaN must fail validation, which `!(x > 0.0)` does and `x <= 0.0` does not
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod error;
pub mod io;
pub mod kernel;
pub mod metrics;
pub mod solver;
pub mod space;
pub mod synth;
