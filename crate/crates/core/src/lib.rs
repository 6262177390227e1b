// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auth;
pub mod codec;
pub mod controller;
pub mod estimator;
pub mod geo;
pub mod server;
pub mod sim;
