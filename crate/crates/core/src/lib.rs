#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytics;
pub mod coefficients;
pub mod dynamics;
pub mod error;
pub mod quadrature;
pub mod reservoir;
pub mod scenario;
