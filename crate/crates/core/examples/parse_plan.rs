//! Parse a plan written in the action language and report malformed lines.

use corrective_planner::action::{parse_command, parse_plan};

const PLAN: &str = "
get glass table
put glass tray
open_door fridge
get lime_slice fridge right
put lime_slice glass
pour vodka_bottle glass 40
wait 2
";

fn main() {
    let plan = parse_plan(PLAN).expect("plan parses");
    println!("{} steps:", plan.len());
    for (i, cmd) in plan.steps.iter().enumerate() {
        println!("  {i}: {:<12} {cmd}", cmd.verb().keyword());
    }

    for bad in ["grab lime table", "pour gin glass lots", "put lime", "get lime table middle", ""] {
        match parse_command(bad) {
            Ok(cmd) => println!("{bad:?} -> {cmd}"),
            Err(e) => println!("{bad:?} -> {}", e.reason()),
        }
    }

    let err = parse_plan("get glass table\nput glass\n").unwrap_err();
    println!("line {} fails: {}", err.line.unwrap_or(0), err.reason());
}
