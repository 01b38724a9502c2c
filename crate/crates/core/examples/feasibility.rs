//! Expand a command into hand and grasp candidates, rank them, and render the
//! failure at each feedback level when nothing is feasible.

use corrective_planner::action::{eid, parse_command, Hand};
use corrective_planner::lowlevel::{select, FaultEntry, FaultInjection, InjectedFault};
use corrective_planner::orchestrator::{format_feedback, FeedbackLevel};
use corrective_planner::world::{Category, Entity, Parent, Reach, WorldState};

fn thing(id: &str, category: Category, parent: Parent) -> Entity {
    Entity::new(eid(id), category, parent)
}

fn main() {
    let table = thing("table", Category::Surface, Parent::World);
    let mut olives = thing("olives", Category::Ingredient, Parent::Entity(eid("table")));
    olives.reach_cost.insert(Hand::Left, Reach::Cost(2.5));
    let salt = thing("salt", Category::Ingredient, Parent::Entity(eid("table")));
    let state = WorldState::from_entities([table.clone(), olives.clone(), salt.clone()]).unwrap();

    let cmd = parse_command("get olives table").unwrap();
    let verdict = select(&cmd, &state, &mut FaultInjection::none());
    println!("{cmd}:");
    for p in &verdict.ranked {
        println!("    {:?} {:?} -> {:?}", p.hand, p.grasp, p.cost);
    }

    let mut blocker = salt;
    blocker.is_blocker_for.insert(eid("olives"));
    let blocked = WorldState::from_entities([table, olives, blocker]).unwrap();
    let verdict = select(&cmd, &blocked, &mut FaultInjection::none());
    let err = verdict.failure.expect("salt is in the way");
    for level in FeedbackLevel::ALL {
        println!("{level:?}: {}", format_feedback(&err, level));
    }

    let mut faults = FaultInjection::new(vec![FaultEntry {
        pattern: "get olives *".into(),
        occurrence: 1,
        inject: InjectedFault::RuntimeHardware,
    }]);
    for attempt in 1..=2 {
        let v = select(&cmd, &state, &mut faults);
        match v.failure {
            Some(e) => println!("attempt {attempt}: {}", format_feedback(&e, FeedbackLevel::WhatWhyHow)),
            None => println!("attempt {attempt}: ok with the {:?} hand", v.winner.unwrap().hand),
        }
    }
}
