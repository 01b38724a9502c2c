pub mod action;
pub mod cli;
pub mod lowlevel;
pub mod metrics;
pub mod midlevel;
pub mod orchestrator;
pub mod scenario;
pub mod world;
