//! Sliding-mode navigation of a differential-drive robot among moving and
//! deforming obstacles.

// `!(x < y)` is how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod feasibility;
pub mod obstacle;
pub mod robot;
pub mod scenario;
pub mod sensing;
pub mod sim;
pub mod trace;
pub mod verify;

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;
