//! Time integration of the flow: a Lagrangian triangle-mesh backend and a
//! scalar backend that evolves `λ` as a graph over a fixed leaf.

mod control;
mod graph;
mod lagrangian;

pub use control::{GraphOperator, StepControl};
pub use graph::*;
pub use lagrangian::{
    advance_to, chart_velocity, run, speed, stable_dt, step_lagrangian, FlowProblem, FlowState, RunOutcome, RunStatus,
};
