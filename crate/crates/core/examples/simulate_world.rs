//! Apply commands to the bar scene, print what each one changed and restore
//! an earlier snapshot.

use corrective_planner::action::parse_command;
use corrective_planner::scenario::ScenarioSpec;
use corrective_planner::world::{apply, describe_state, SnapshotStore};

fn main() {
    let spec = ScenarioSpec::bundled("barman").unwrap();
    let mut state = spec.initial_state.clone();
    let mut store = SnapshotStore::new();
    let start = store.snapshot(&state);
    println!("{}\n", describe_state(&state));

    for line in ["get glass table", "put glass tray", "open_door fridge", "get lime_slice fridge", "put lime_slice glass"] {
        let cmd = parse_command(line).unwrap();
        match apply(&state, &cmd) {
            Ok((next, delta)) => {
                println!("{cmd}");
                for c in &delta.changed {
                    let who = c.entity.as_ref().map(|e| format!("{e}.")).unwrap_or_default();
                    println!("    {who}{}: {} -> {}", c.field, c.old.as_deref().unwrap_or("-"), c.new.as_deref().unwrap_or("-"));
                }
                state = next;
            }
            Err(e) => println!("{cmd}: rejected ({e})"),
        }
    }

    println!("\nsubstance totals: {:?}", state.substance_totals());
    let restored = store.restore(&start).unwrap();
    println!("restored snapshot matches the start: {}", restored == spec.initial_state);
}
