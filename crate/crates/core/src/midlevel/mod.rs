//! Plan checking, heuristic repair and sequencing below the language planners.

mod check;
mod error;
mod repair;
mod sequencer;

pub use check::{check, nearest_name};
pub use error::{ErrorKind, FailedCommand, PlanError, RepairRule};
pub use repair::{repair, RepairAction, RepairContext, RepairKind, Unrepairable, MAX_REPAIR_DEPTH};
pub use sequencer::{
    sequence, LogicalExecutor, SequenceOutcome, SequenceReport, SequencerOptions, StepExecutor,
    MAX_REPAIRS_PER_STEP,
};
