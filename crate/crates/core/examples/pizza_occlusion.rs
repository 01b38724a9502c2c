//! The salt shaker hides the olives; feasibility feedback tells the planner
//! to move it first.

use corrective_planner::orchestrator::{handle_request, BehaviorKnobs, ConfigSymbol, EngineConfig, ScriptedBackend};
use corrective_planner::scenario::ScenarioSpec;

fn main() {
    let spec = ScenarioSpec::bundled("pizza").unwrap();
    let backend = ScriptedBackend::new(spec.clone(), BehaviorKnobs::default());
    for symbol in [ConfigSymbol::BL, ConfigSymbol::MH2] {
        let ep = handle_request(
            &spec.request_for("Mushroom and Olive"),
            &spec.initial_state,
            &EngineConfig::preset(symbol, 0),
            &backend,
            &spec,
        );
        println!("{symbol}: {:?} after {} replans", ep.outcome, ep.hl_replans);
        for f in &ep.feedback_msgs {
            println!("    feedback: {f}");
        }
        for cmd in &ep.executed {
            println!("    {cmd}");
        }
        println!("    Alex: {}\n", ep.reply);
    }
}
