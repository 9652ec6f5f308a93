//! Kinematics, planning and visual-servoing toolkit for a 7-DoF serial arm.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod harness;
pub mod ik;
pub mod kinematics;
pub mod liegroup;
pub mod metrics;
pub mod planner;
pub mod pose;
pub mod robot_model;
