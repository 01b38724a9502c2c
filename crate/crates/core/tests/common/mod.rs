#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use corrective_planner::action::{eid, ActionCommand, Hand};
use corrective_planner::world::{CapState, Category, DoorState, Entity, Parent, WorldState};

pub fn parent(p: &str) -> Parent {
    match p {
        "@world" => Parent::World,
        "@left" => Parent::Hand(Hand::Left),
        "@right" => Parent::Hand(Hand::Right),
        id => Parent::Entity(eid(id)),
    }
}

pub fn ent(id: &str, category: Category, at: &str) -> Entity {
    Entity::new(eid(id), category, parent(at))
}

pub fn surface(id: &str) -> Entity {
    ent(id, Category::Surface, "@world")
}

pub fn item(id: &str, at: &str) -> Entity {
    ent(id, Category::Ingredient, at)
}

pub fn vessel(id: &str, at: &str, capacity: u32, contents: &[(&str, u32)]) -> Entity {
    let mut e = ent(id, Category::LiquidVessel, at);
    e.capacity_ml = Some(capacity);
    e.contents = contents.iter().map(|(s, v)| (s.to_string(), *v)).collect();
    e
}

pub fn bottle(id: &str, at: &str, contents: &[(&str, u32)], cap: CapState) -> Entity {
    let mut e = vessel(id, at, 700, contents);
    e.cap = Some(cap);
    e
}

pub fn fridge(id: &str, door: DoorState) -> Entity {
    let mut e = ent(id, Category::Container, "@world");
    e.door = Some(door);
    e
}

pub fn world(entities: Vec<Entity>) -> WorldState {
    WorldState::from_entities(entities).expect("test world is valid")
}

const SUBSTANCES: [&str; 3] = ["gin", "juice", "water"];
pub const GRASPABLE: [&str; 6] = ["glass", "cup", "gin_bottle", "juice_bottle", "lime", "salt"];
pub const PLACES: [&str; 4] = ["table", "shelf", "fridge", "box"];

fn random_contents(rng: &mut ChaCha8Rng, capacity: u32) -> Vec<(String, u32)> {
    let mut left = capacity;
    let mut out = Vec::new();
    for s in SUBSTANCES {
        if rng.random_bool(0.4) && left > 0 {
            let v = rng.random_range(1..=left.min(300));
            left -= v;
            out.push((s.to_string(), v));
        }
    }
    out
}

/// A small kitchen with randomized placement, door, caps and fill levels.
pub fn random_kitchen(seed: u64) -> WorldState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entities = vec![surface("table"), surface("shelf")];
    let door = if rng.random_bool(0.5) { DoorState::Open } else { DoorState::Closed };
    entities.push(fridge("fridge", door));
    entities.push(ent("box", Category::Container, "@world"));
    let mut left_free = true;
    let mut right_free = true;
    for id in GRASPABLE {
        let mut at = *PLACES.choose(&mut rng).unwrap();
        if rng.random_bool(0.3) {
            if left_free && rng.random_bool(0.5) {
                at = "@left";
                left_free = false;
            } else if right_free {
                at = "@right";
                right_free = false;
            }
        }
        let e = match id {
            "glass" | "cup" => {
                let cap = if id == "glass" { 300 } else { 200 };
                let c = random_contents(&mut rng, cap);
                let c: Vec<(&str, u32)> = c.iter().map(|(s, v)| (s.as_str(), *v)).collect();
                vessel(id, at, cap, &c)
            }
            "gin_bottle" | "juice_bottle" => {
                let c = random_contents(&mut rng, 700);
                let c: Vec<(&str, u32)> = c.iter().map(|(s, v)| (s.as_str(), *v)).collect();
                let cap = if rng.random_bool(0.5) { CapState::Screwed } else { CapState::Unscrewed };
                bottle(id, at, &c, cap)
            }
            _ => item(id, at),
        };
        entities.push(e);
    }
    world(entities)
}

/// A random command over the kitchen's names; may be ill-formed for the state.
pub fn random_command(rng: &mut ChaCha8Rng, state: &WorldState) -> ActionCommand {
    let pick = |rng: &mut ChaCha8Rng| eid(GRASPABLE.choose(rng).unwrap());
    let any = |rng: &mut ChaCha8Rng| {
        let all: Vec<&str> = GRASPABLE.iter().chain(PLACES.iter()).copied().collect();
        eid(all.choose(rng).unwrap())
    };
    match rng.random_range(0..7) {
        0 => {
            let object = pick(rng);
            let source = match state.get(&object).map(|e| e.parent.clone()) {
                Some(Parent::Entity(p)) if rng.random_bool(0.8) => p,
                _ => any(rng),
            };
            ActionCommand::Get {
            object,
            source,
            hand: match rng.random_range(0..3) {
                0 => Some(Hand::Left),
                1 => Some(Hand::Right),
                _ => None,
            },
        }
        }
        1 | 2 => ActionCommand::Put {
            object: pick(rng),
            destination: any(rng),
        },
        3 => ActionCommand::Pour {
            source: pick(rng),
            destination: pick(rng),
            amount: rng.random_range(1..200),
        },
        4 => ActionCommand::OpenDoor { object: eid("fridge") },
        5 => ActionCommand::Unscrew { object: pick(rng) },
        _ => ActionCommand::CloseDoor { object: eid("fridge") },
    }
}
