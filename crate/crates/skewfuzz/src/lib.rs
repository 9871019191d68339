//! Performance-workload fuzzing for partitioned dataflow programs.
//!
//! The crate bundles an in-process partitioned dataflow engine with
//! per-partition performance instrumentation, monitor templates that turn
//! metric vectors into symptom verdicts and feedback scores, a typed
//! catalog of skew-inspired mutations, pseudo-inverse functions that lift
//! intermediate datasets back to program inputs, and the phased fuzzing
//! orchestrator that ties them together.

pub mod benchmarks;
pub mod dataflow;
pub mod error;
pub mod fuzzer;
pub mod inverse;
pub mod metrics;
pub mod monitor;
pub mod mutation;
pub mod value;

pub use error::{Error, Result};
