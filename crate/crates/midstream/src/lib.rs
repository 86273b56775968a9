//! Deterministic, provider-agnostic agent-workflow engine.
//!
//! The pipeline proposes several candidate solutions in parallel, corrects
//! each one locally, refines them against each other by rotating every
//! candidate through the anchor role, runs a quality-gated revision loop
//! that re-works only failing candidates, and ranks the survivors. External
//! knowledge arrives either through an explicit sandboxed tool loop or
//! implicitly: a monitor watches the generation stream in overlapping
//! character windows and splices retrieved evidence into the stream the
//! moment uncertainty shows, without suspending the reasoning flow.
//!
//! Everything is metered. Each provider call, monitor probe, retrieval, and
//! tool round contributes a ledger delta, and run ledgers are exact merges
//! of those deltas, so the cost of every workflow regime can be compared
//! line by line. A scripted provider replays canned completions keyed by
//! content hash, which makes whole pipeline runs byte-reproducible for
//! testing.

pub mod artifacts;
pub mod calls;
pub mod error;
pub mod fixtures;
pub mod judge;
pub mod ledger;
pub mod monitor;
pub mod orchestrator;
pub mod provider;
pub mod report;
pub mod retrieval;
pub mod score;
pub mod stages;
pub mod tools;
pub mod types;

pub use error::EngineError;
pub use ledger::CostLedger;
pub use types::{
    Candidate, Mode, Problem, QualityReport, RankerKind, ReportMap, Stage, Weights,
    WorkflowConfig,
};
