use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::action::{ActionCommand, Plan};
use crate::world::{apply, StateDelta, WorldState};

use super::check::check;
use super::error::{ErrorKind, PlanError};
use super::repair::{repair, RepairAction, RepairContext};

/// Repairs allowed per original step before giving up on it.
pub const MAX_REPAIRS_PER_STEP: u32 = 3;

/// Executes one logically valid command. The orchestrator plugs the
/// low-level feasibility layer in here; [`LogicalExecutor`] skips it.
pub trait StepExecutor {
    fn execute(&mut self, state: &WorldState, cmd: &ActionCommand) -> Result<(WorldState, StateDelta), PlanError>;
}

/// Applies commands directly to the world model.
pub struct LogicalExecutor;

impl StepExecutor for LogicalExecutor {
    fn execute(&mut self, state: &WorldState, cmd: &ActionCommand) -> Result<(WorldState, StateDelta), PlanError> {
        apply(state, cmd).map_err(|e| {
            PlanError::unrecoverable(ErrorKind::Runtime, cmd, e.to_string(), "revise this step")
        })
    }
}

#[derive(Debug, Clone)]
pub struct SequencerOptions {
    pub repair_enabled: bool,
    pub repair: RepairContext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SequenceOutcome {
    Completed,
    /// `steps_done` counts commands executed before the failure.
    Failed { error: PlanError, steps_done: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub outcome: SequenceOutcome,
    pub state: WorldState,
    pub executed: Vec<ActionCommand>,
    pub deltas: Vec<StateDelta>,
    pub repairs: Vec<RepairAction>,
    /// Number of times a repair rule was invoked successfully.
    pub repair_count: u32,
}

impl SequenceReport {
    pub fn completed(&self) -> bool {
        self.outcome == SequenceOutcome::Completed
    }

    pub fn error(&self) -> Option<&PlanError> {
        match &self.outcome {
            SequenceOutcome::Failed { error, .. } => Some(error),
            SequenceOutcome::Completed => None,
        }
    }
}

/// Runs `plan` step by step: check, repair when allowed, execute. Stops at
/// the first error that cannot be handled at this level. Error step indices
/// refer to the original plan.
pub fn sequence(
    state: &WorldState,
    plan: &Plan,
    executor: &mut dyn StepExecutor,
    opts: &SequencerOptions,
) -> SequenceReport {
    let mut working = plan.clone();
    // Original step index each working step derives from.
    let mut origin: Vec<usize> = (0..plan.len()).collect();
    let mut repairs_per_origin: BTreeMap<usize, u32> = BTreeMap::new();
    let mut report = SequenceReport {
        outcome: SequenceOutcome::Completed,
        state: state.clone(),
        executed: Vec::new(),
        deltas: Vec::new(),
        repairs: Vec::new(),
        repair_count: 0,
    };
    let mut i = 0;
    while i < working.len() {
        let cmd = working.steps[i].clone();
        let orig = origin[i];
        let failure = match check(&report.state, &cmd) {
            Ok(()) => match executor.execute(&report.state, &cmd) {
                Ok((next, delta)) => {
                    report.state = next;
                    report.deltas.push(delta);
                    report.executed.push(cmd);
                    i += 1;
                    continue;
                }
                Err(e) => e,
            },
            Err(e) if e.recoverable && opts.repair_enabled => {
                let used = repairs_per_origin.entry(orig).or_insert(0);
                if *used >= MAX_REPAIRS_PER_STEP {
                    e.escalated()
                } else {
                    *used += 1;
                    match repair(&report.state, &working, &e.clone().at(i), &opts.repair) {
                        Ok((fixed, actions)) => {
                            let added = fixed.len() + 1 - working.len();
                            origin.splice(i..=i, std::iter::repeat_n(orig, added));
                            working = fixed;
                            report.repairs.extend(actions);
                            report.repair_count += 1;
                            continue;
                        }
                        Err(u) => u.escalate(&e),
                    }
                }
            }
            Err(e) => e.escalated(),
        };
        report.outcome = SequenceOutcome::Failed {
            error: failure.at(orig),
            steps_done: report.executed.len(),
        };
        return report;
    }
    report
}
