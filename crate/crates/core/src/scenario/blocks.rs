use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_blocks, BlocksGoal, GroundTruth, ScenarioSpec};
use crate::action::{eid, EntityId};
use crate::world::{Category, Entity, Parent, WorldState};

pub const BLOCK_COLORS: [&str; 8] = [
    "red", "green", "blue", "yellow", "orange", "purple", "white", "black",
];

fn random_stacks(blocks: &[EntityId], rng: &mut ChaCha8Rng) -> Vec<Vec<EntityId>> {
    let mut order = blocks.to_vec();
    order.shuffle(rng);
    let mut stacks: Vec<Vec<EntityId>> = Vec::new();
    for b in order {
        if stacks.is_empty() || rng.random_bool(0.4) {
            stacks.push(vec![b]);
        } else {
            let i = rng.random_range(0..stacks.len());
            stacks[i].push(b);
        }
    }
    stacks
}

/// A random blocks-world problem with `n` blocks (at most 8). The initial
/// configuration never already satisfies the goal.
pub fn generate_blocks(n: usize, seed: u64) -> ScenarioSpec {
    assert!((1..=BLOCK_COLORS.len()).contains(&n), "1 to 8 blocks");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = eid("table");
    let blocks: Vec<EntityId> = BLOCK_COLORS[..n]
        .iter()
        .map(|c| eid(&format!("{c}_block")))
        .collect();
    loop {
        let initial = random_stacks(&blocks, &mut rng);
        let mut goal = BlocksGoal {
            stacks: random_stacks(&blocks, &mut rng),
        };
        goal.stacks.sort();
        let mut entities = vec![Entity::new(table.clone(), Category::Surface, Parent::World)];
        for stack in &initial {
            for (i, b) in stack.iter().enumerate() {
                let parent = if i == 0 { table.clone() } else { stack[i - 1].clone() };
                entities.push(Entity::new(b.clone(), Category::Block, Parent::Entity(parent)));
            }
        }
        let state = WorldState::from_entities(entities).expect("generated blocks are a forest");
        if n > 1 && check_blocks(&goal, &table, &state).is_met() {
            continue;
        }
        return ScenarioSpec {
            name: format!("blocks-{n}-{seed}"),
            initial_state: state,
            staging_surface: table,
            serving_location: None,
            ground_truth: GroundTruth::Blocks(goal),
            faults: Vec::new(),
            request_template: "Rearrange the blocks so that {goal}.".to_string(),
            goal_backprompt: true,
        };
    }
}
