use proptest::prelude::*;

use corrective_planner::action::{eid, ActionCommand};
use corrective_planner::cli::{run_trial, BackendChoice};
use corrective_planner::midlevel::{ErrorKind, PlanError};
use corrective_planner::orchestrator::{format_feedback, parse_feedback, BehaviorKnobs, ConfigSymbol, FeedbackLevel};
use corrective_planner::scenario::ScenarioSpec;

fn text() -> impl Strategy<Value = String> {
    "[a-z][a-z _0-9]{0,30}"
}

proptest! {
    #[test]
    fn feedback_levels_nest(obj in "[a-z]{1,8}", why in text(), how in text()) {
        let err = PlanError::unrecoverable(ErrorKind::Physical, &ActionCommand::OpenDoor { object: eid(&obj) }, why.clone(), how.clone());
        let msgs: Vec<String> = FeedbackLevel::ALL.iter().map(|l| format_feedback(&err, *l)).collect();
        for pair in msgs.windows(2) {
            let shorter = pair[0].strip_suffix('.').unwrap();
            prop_assert!(pair[1].starts_with(shorter));
            prop_assert!(pair[1].len() > pair[0].len());
        }
        for (level, msg) in FeedbackLevel::ALL.iter().zip(&msgs) {
            let parsed = parse_feedback(msg).unwrap();
            prop_assert_eq!(parsed.level(), *level);
            prop_assert_eq!(parsed.what, format!("open_door {obj}"));
        }
        let full = parse_feedback(&msgs[2]).unwrap();
        prop_assert_eq!(full.why, Some(why));
        prop_assert_eq!(full.how, Some(how));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trials_are_reproducible(goal in 0usize..10, config in 0usize..8, seed in any::<u64>()) {
        let spec = ScenarioSpec::bundled("barman").unwrap();
        let goal = spec.goal_names()[goal].clone();
        let backend = BackendChoice::scripted(BehaviorKnobs::ablation());
        let config = ConfigSymbol::ALL[config];
        let (mut ra, mut ea) = run_trial(&spec, &goal, config, seed, &backend);
        let (rb, eb) = run_trial(&spec, &goal, config, seed, &backend);
        ra.durations = rb.durations.clone();
        ea.timings = eb.timings.clone();
        prop_assert_eq!(ra, rb);
        prop_assert_eq!(ea, eb);
    }
}
