use std::fmt;

use serde::{Deserialize, Serialize};

use crate::action::{ActionCommand, EntityId, Hand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    Syntactic,
    /// A command names an object that does not exist.
    Semantic,
    Logical,
    Physical,
    Runtime,
    /// The plan ran to completion but the goal check failed.
    GoalNotAchieved,
}

/// The command a [`PlanError`] refers to: parsed, or raw text when parsing failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailedCommand {
    Command(ActionCommand),
    Raw(String),
}

impl fmt::Display for FailedCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailedCommand::Command(c) => write!(f, "{c}"),
            FailedCommand::Raw(r) => f.write_str(r),
        }
    }
}

/// Which repair rule a recoverable error calls for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepairRule {
    TakeThenPut { object: EntityId },
    TakeThenPour { source: EntityId },
    OpenContainerFirst { container: EntityId },
    FreeHand,
    UnscrewBeforePour { vessel: EntityId },
    SwitchHand { to: Hand },
}

impl RepairRule {
    pub fn name(&self) -> &'static str {
        match self {
            RepairRule::TakeThenPut { .. } => "take-then-put",
            RepairRule::TakeThenPour { .. } => "take-then-pour",
            RepairRule::OpenContainerFirst { .. } => "open-container-first",
            RepairRule::FreeHand => "free-hand",
            RepairRule::UnscrewBeforePour { .. } => "unscrew-before-pour",
            RepairRule::SwitchHand { .. } => "switch-hand",
        }
    }
}

/// A classified failure carrying the error/reason/suggestion triplet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanError {
    pub kind: ErrorKind,
    pub recoverable: bool,
    pub failed_command: FailedCommand,
    pub step_index: usize,
    pub what: String,
    pub why: String,
    pub how: String,
    /// Set exactly when `recoverable` is true.
    pub rule: Option<RepairRule>,
}

impl PlanError {
    pub fn unrecoverable(kind: ErrorKind, cmd: &ActionCommand, why: impl Into<String>, how: impl Into<String>) -> Self {
        PlanError {
            kind,
            recoverable: false,
            failed_command: FailedCommand::Command(cmd.clone()),
            step_index: 0,
            what: cmd.to_string(),
            why: why.into(),
            how: how.into(),
            rule: None,
        }
    }

    pub fn recoverable(cmd: &ActionCommand, rule: RepairRule, why: impl Into<String>, how: impl Into<String>) -> Self {
        PlanError {
            kind: ErrorKind::Logical,
            recoverable: true,
            failed_command: FailedCommand::Command(cmd.clone()),
            step_index: 0,
            what: cmd.to_string(),
            why: why.into(),
            how: how.into(),
            rule: Some(rule),
        }
    }

    pub fn at(mut self, step_index: usize) -> Self {
        self.step_index = step_index;
        self
    }

    /// Same error, but no longer eligible for mid-level repair.
    pub fn escalated(mut self) -> Self {
        self.recoverable = false;
        self.rule = None;
        self
    }

    pub fn command(&self) -> Option<&ActionCommand> {
        match &self.failed_command {
            FailedCommand::Command(c) => Some(c),
            FailedCommand::Raw(_) => None,
        }
    }
}

impl fmt::Display for PlanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} error on '{}': {}", self.kind, self.what, self.why)
    }
}

impl std::error::Error for PlanError {}
