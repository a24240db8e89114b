//! Greedy D-optimal sensor selection for Bayesian inverse problems governed
//! by linear time-invariant systems.

pub mod bench;
pub mod config;
pub mod kstore;
pub mod linalg;
pub mod lti;
pub mod parallel;
pub mod selector;
pub mod source;

pub use kstore::{write_k, KStore, StoreError};
pub use lti::{assemble_k, DataSpaceHessian, LtiProblem};
pub use selector::{greedy_select, naive_select, ObjectiveMode, SelectError, SelectionState, SelectionTrace};
pub use source::BlockSource;
