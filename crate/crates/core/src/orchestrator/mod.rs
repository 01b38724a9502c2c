//! Agents, feedback loop and backends.

mod agents;
mod config;
mod engine;
pub mod llm;
pub mod scripted;

pub use agents::*;
pub use config::*;
pub use engine::*;
pub use llm::{LlmBackend, LlmSettings};
pub use scripted::{BehaviorKnobs, ScriptedBackend};
