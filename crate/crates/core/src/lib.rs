//! Black start of a transmission backbone from a grid-forming PV-battery
//! plant: a three-phase electromagnetic transient engine, the plant's
//! control chain and DC side, the staged energization harness with its
//! stability metrics, and a Newton-Raphson power-flow reference.

// Negated comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod dcside;
pub mod emt;
pub mod harness;
pub mod network;
pub mod plant;
pub mod powerflow;
pub mod schedule;
