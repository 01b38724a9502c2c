//! Random block-stacking tasks solved without any correction.

use corrective_planner::cli::{run_trial, BackendChoice};
use corrective_planner::orchestrator::{BehaviorKnobs, ConfigSymbol};
use corrective_planner::scenario::{generate_blocks, GroundTruth};
use corrective_planner::world::describe_state;

fn main() {
    let backend = BackendChoice::scripted(BehaviorKnobs::default());
    for seed in 0..3 {
        let spec = generate_blocks(4, seed);
        let GroundTruth::Blocks(goal) = &spec.ground_truth else { unreachable!() };
        println!("seed {seed}: {}", goal.describe(spec.table()));
        println!("    start: {}", describe_state(&spec.initial_state));
        let (record, ep) = run_trial(&spec, "goal", ConfigSymbol::BL, seed, &backend);
        let plan: Vec<String> = ep.executed.iter().map(|c| c.to_string()).collect();
        println!("    plan: {}", plan.join("; "));
        println!("    executable {}, correct {:?}\n", record.executable, record.correct);
    }
}
