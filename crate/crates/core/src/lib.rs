//! Histories of transactional memory executions, the programs that produce
//! them, and checkers for opacity, last-use opacity and the classical
//! database properties.

pub mod checkers;
pub mod history;
pub mod program;
pub mod fixtures;
pub mod par;
pub mod random;
