use proptest::prelude::*;

use corrective_planner::cli::validate_scenario;
use corrective_planner::scenario::{generate_blocks, load_scenario, ScenarioSpec};

#[test]
fn bundled_scenarios_replay_their_ground_truth() {
    for name in ["barman", "pizza", "blocks"] {
        let spec = ScenarioSpec::bundled(name).unwrap();
        assert_eq!(validate_scenario(&spec), Vec::<String>::new(), "{name}");
    }
}

#[test]
fn bundled_scenarios_round_trip() {
    for name in ["barman", "pizza", "blocks"] {
        let spec = ScenarioSpec::bundled(name).unwrap();
        assert_eq!(load_scenario(&spec.to_document()).unwrap(), spec, "{name}");
    }
}

#[test]
fn barman_has_ten_recipes() {
    assert_eq!(ScenarioSpec::bundled("barman").unwrap().recipes().len(), 10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generated_blocks_are_valid(n in 2usize..7, seed in any::<u64>()) {
        let spec = generate_blocks(n, seed);
        prop_assert_eq!(generate_blocks(n, seed), spec.clone());
        prop_assert!(validate_scenario(&spec).is_empty());
        prop_assert_eq!(load_scenario(&spec.to_document()).unwrap(), spec);
    }
}
