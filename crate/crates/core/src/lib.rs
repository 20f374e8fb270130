//! Physics-informed neural network surrogates for steady, incompressible,
//! laminar flow in two and three dimensions.

// `!(x > 0.0)` is used on purpose to reject NaN alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod autodiff;
pub mod evaluation;
mod linalg;
pub mod network;
pub mod optim;
pub mod physics;
pub mod sampling;
pub mod training;
