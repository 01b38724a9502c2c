//! Run an underspecified plan through the sequencer with and without
//! mid-level repair.

use corrective_planner::action::{eid, parse_plan};
use corrective_planner::midlevel::{sequence, LogicalExecutor, RepairContext, SequencerOptions};
use corrective_planner::orchestrator::{format_feedback, FeedbackLevel};
use corrective_planner::scenario::ScenarioSpec;

fn main() {
    let spec = ScenarioSpec::bundled("barman").unwrap();
    // Forgets to pick things up, to open the fridge and to unscrew the bottle.
    let plan = parse_plan("put glass tray\nput lime_slice glass\npour vodka_bottle glass 40\nput vodka_bottle table").unwrap();

    for repair_enabled in [false, true] {
        let opts = SequencerOptions {
            repair_enabled,
            repair: RepairContext::new(eid("table")),
        };
        let report = sequence(&spec.initial_state, &plan, &mut LogicalExecutor, &opts);
        println!("repair {}:", if repair_enabled { "on" } else { "off" });
        for cmd in &report.executed {
            println!("    {cmd}");
        }
        for r in &report.repairs {
            println!("    [{}] {:?} at {}: {} command(s)", r.rule, r.kind, r.at, r.commands.len());
        }
        match report.error() {
            None => println!("    completed with {} repairs\n", report.repair_count),
            Some(e) => println!("    stopped: {}\n", format_feedback(e, FeedbackLevel::WhatWhyHow)),
        }
    }
}
