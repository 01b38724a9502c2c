mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_command, random_kitchen};
use corrective_planner::action::{eid, Plan};
use corrective_planner::midlevel::{check, repair, RepairContext, RepairKind};
use corrective_planner::world::apply_state;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    /// A repaired step, wherever it sits in the plan, expands into commands
    /// that all pass the checker in order and leaves the rest of the plan alone.
    #[test]
    fn repairs_simulate_cleanly(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = random_kitchen(seed);
        let mut prefix = Vec::new();
        for _ in 0..rng.random_range(0..4) {
            let cmd = random_command(&mut rng, &state);
            if check(&state, &cmd).is_ok() {
                if let Ok(next) = apply_state(&state, &cmd) {
                    prefix.push(cmd);
                    state = next;
                }
            }
        }
        let Some((cmd, err)) = (0..50).find_map(|_| {
            let cmd = random_command(&mut rng, &state);
            match check(&state, &cmd) {
                Err(e) if e.recoverable => Some((cmd, e)),
                _ => None,
            }
        }) else {
            return Ok(());
        };
        let at = prefix.len();
        let tail: Vec<_> = (0..rng.random_range(0..3)).map(|_| random_command(&mut rng, &state)).collect();
        let mut steps = prefix.clone();
        steps.push(cmd.clone());
        steps.extend(tail.iter().cloned());
        let plan = Plan::new(steps);
        let Ok((amended, actions)) = repair(&state, &plan, &err.at(at), &RepairContext::new(eid("table"))) else {
            return Ok(());
        };
        let window = amended.len() + 1 - plan.len();
        prop_assert_eq!(&amended.steps[..at], &prefix[..]);
        prop_assert_eq!(&amended.steps[at + window..], &tail[..]);
        prop_assert!(!actions.is_empty());
        prop_assert!(actions.iter().any(|a| a.kind == RepairKind::Substitute) || amended.steps[at..at + window].contains(&cmd));
        let mut s = state.clone();
        for c in &amended.steps[at..at + window] {
            prop_assert!(check(&s, c).is_ok(), "`{}` fails in\n{}", c, amended.render());
            s = apply_state(&s, c).unwrap();
        }
    }
}
