use super::{CapState, DoorState, Entity, Parent, PowerState, WorldState};
use crate::action::{EntityId, Hand};

fn join_and(parts: &[String]) -> String {
    match parts {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn attributes(e: &Entity) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(door) = e.door {
        out.push(match door {
            DoorState::Open => "its door is open".to_string(),
            DoorState::Closed => "its door is closed".to_string(),
        });
    }
    if let Some(cap) = e.cap {
        out.push(match cap {
            CapState::Screwed => "it is screwed".to_string(),
            CapState::Unscrewed => "it is unscrewed".to_string(),
        });
    }
    if let Some(power) = e.power {
        out.push(match power {
            PowerState::On => "it is switched on".to_string(),
            PowerState::Off => "it is switched off".to_string(),
        });
    }
    if !e.contents.is_empty() {
        let parts: Vec<String> = e
            .contents
            .iter()
            .map(|(s, ml)| format!("{ml} ml of {s}"))
            .collect();
        out.push(format!("it contains {}", join_and(&parts)));
    } else if e.capacity_ml.is_some() {
        out.push("it is empty".to_string());
    }
    out
}

fn with_attributes(mut sentence: String, e: &Entity) -> String {
    let attrs = attributes(e);
    if !attrs.is_empty() {
        sentence.push_str("; ");
        sentence.push_str(&join_and(&attrs));
    }
    sentence.push('.');
    sentence
}

fn reference(state: &WorldState, id: &EntityId) -> String {
    match state.get(id).map(|e| &e.parent) {
        Some(Parent::World) => format!("the {id}"),
        _ => id.to_string(),
    }
}

fn describe_subtree(state: &WorldState, id: &EntityId, out: &mut Vec<String>) {
    for child in state.children(id) {
        let e = &state.entities[child];
        let parent = &state.entities[id];
        let sentence = format!(
            "{child} is {} {}",
            parent.category.preposition(),
            reference(state, id)
        );
        out.push(with_attributes(sentence, e));
        describe_subtree(state, child, out);
    }
}

/// Deterministic natural-language summary of the state. Entities are visited
/// depth-first in alphabetical order; hand contents come last.
pub fn describe_state(state: &WorldState) -> String {
    let mut out = Vec::new();
    for root in state.roots() {
        let e = &state.entities[root];
        if !attributes(e).is_empty() {
            out.push(with_attributes(format!("The {root} is in the scene"), e));
        }
        describe_subtree(state, root, &mut out);
    }
    let held: Vec<(Hand, &EntityId)> = Hand::BOTH
        .into_iter()
        .filter_map(|h| state.held(h).map(|e| (h, e)))
        .collect();
    if held.is_empty() {
        out.push("The robot's hands are empty.".to_string());
    }
    for (hand, id) in held {
        let e = &state.entities[id];
        out.push(with_attributes(
            format!("The robot's {hand} hand holds {id}"),
            e,
        ));
        describe_subtree(state, id, &mut out);
    }
    out.join(" ")
}

#[cfg(test)]
mod tests {
    use super::super::{fixtures::*, Category, Entity, WorldState};
    use super::*;
    use crate::action::eid;

    #[test]
    fn empty_world() {
        assert_eq!(
            describe_state(&WorldState::new()),
            "The robot's hands are empty."
        );
    }

    #[test]
    fn stacked_blocks() {
        let block = |id: &str, parent: &str| {
            Entity::new(eid(id), Category::Block, Parent::Entity(eid(parent)))
        };
        let s = WorldState::from_entities([
            surface("table"),
            block("green_block", "table"),
            block("red_block", "green_block"),
        ])
        .unwrap();
        assert_eq!(
            describe_state(&s),
            "green_block is on the table. red_block is on green_block. The robot's hands are empty."
        );
    }

    #[test]
    fn bottle_golden() {
        // Written by hand from the sentence templates above.
        let mut fridge = fridge("fridge", DoorState::Closed);
        fridge.graspable = false;
        let s = WorldState::from_entities([
            surface("shelf"),
            bottle("gin_bottle", "shelf", &[("gin", 700)], CapState::Screwed),
            fridge,
            item("lime_slice", "fridge"),
            held(vessel("glass", "shelf", 300, &[("rum", 60), ("vodka", 40)]), Hand::Right),
        ])
        .unwrap();
        assert_eq!(
            describe_state(&s),
            "The fridge is in the scene; its door is closed. \
             lime_slice is in the fridge. \
             gin_bottle is on the shelf; it is screwed and it contains 700 ml of gin. \
             The robot's right hand holds glass; it contains 60 ml of rum and 40 ml of vodka."
        );
    }
}
