//! The supremum versioning algorithm (SVA) and a harness that runs
//! workloads through it under controlled schedules.

pub mod engine;
pub mod harness;
