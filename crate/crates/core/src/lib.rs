#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod applications;
pub mod geometry;
pub mod orbit;
pub mod report;
pub mod solver;
pub mod systems;
