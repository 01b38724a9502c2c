use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::WorldState;

/// The three language agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentRole {
    /// Talks to the user, answers questions, routes tasks.
    Alex,
    /// Writes the structured task specification.
    Travi,
    /// Turns the specification into action commands.
    Ropa,
}

/// Prefix Alex uses to hand a physical task to the planners.
pub const TASK_PREFIX: &str = "TASK:";

const ALEX_SYSTEM: &str = "You are Alex, the assistant of a two-armed kitchen robot. \
If the user asks a question, answer it briefly from the scene description. \
If the user asks for something to be done physically, reply with a single line \
starting with TASK: followed by the task in your own words. \
When you receive an execution report, summarise it for the user in one sentence.";

const TRAVI_SYSTEM: &str = "You are Travi, the task planner of a two-armed kitchen robot. \
Given a task, the scene description and feedback from earlier attempts, write a specification \
with the lines Goal:, Objects:, State:, Remaining steps: and Feedback:. \
Think about which objects are needed and in which order. Continue from the current state; \
steps that already ran are not undone.";

const ROPA_SYSTEM: &str = "You are Ropa, the action planner of a two-armed kitchen robot. \
Translate the specification into commands, one per line, using only: \
get <object> <from> [left|right]; put <object> <destination>; pour <from> <into> <ml>; \
open_door <object>; close_door <object>; screw <object>; unscrew <object>; \
finger_push <object>; wait <seconds>. Use object names exactly as given. \
Reply with the commands only.";

impl AgentRole {
    pub const ALL: [AgentRole; 3] = [AgentRole::Alex, AgentRole::Travi, AgentRole::Ropa];

    pub fn name(self) -> &'static str {
        match self {
            AgentRole::Alex => "Alex",
            AgentRole::Travi => "Travi",
            AgentRole::Ropa => "Ropa",
        }
    }

    pub fn system_message(self) -> &'static str {
        match self {
            AgentRole::Alex => ALEX_SYSTEM,
            AgentRole::Travi => TRAVI_SYSTEM,
            AgentRole::Ropa => ROPA_SYSTEM,
        }
    }

    /// Only Alex keeps a conversation across requests.
    pub fn uses_dialogue_history(self) -> bool {
        self == AgentRole::Alex
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

/// Structured facts about the episode that accompany every backend call.
/// Language-model backends ignore it (everything they need is in the
/// conversation); the scripted oracle plans from it.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningContext {
    pub request: String,
    pub state: WorldState,
    /// Feedback messages sent so far in this episode, oldest first.
    pub feedback: Vec<String>,
    pub round: u32,
    pub seed: u64,
}

pub struct BackendRequest<'a> {
    pub role: AgentRole,
    pub conversation: &'a [Message],
    pub context: &'a PlanningContext,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server returned status {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("{0}")]
    Config(String),
}

/// Anything that can play the three agents.
pub trait PlannerBackend: Send + Sync {
    fn name(&self) -> &str;
    /// True when identical requests always produce identical responses.
    fn is_deterministic(&self) -> bool;
    fn respond(&self, request: &BackendRequest<'_>) -> Result<String, BackendError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn only_alex_keeps_history() {
        let with: Vec<_> = AgentRole::ALL.into_iter().filter(|r| r.uses_dialogue_history()).collect();
        assert_eq!(with, vec![AgentRole::Alex]);
        assert!(AgentRole::ALL.iter().all(|r| !r.system_message().is_empty()));
    }
}
