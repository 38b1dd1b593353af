//! Simulation toolkit for an underactuated coupled-linkage dexterous hand:
//! actuator characterization, force calibration, hybrid speed-force control,
//! width-to-grasp planning, grasp wrench analysis and a grasp-strategy benchmark.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actuator;
pub mod bench;
pub mod calibration;
pub mod hand_model;
pub mod hybrid;
pub mod kv;
pub mod planner;
pub mod wrench;
