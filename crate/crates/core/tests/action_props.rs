use proptest::prelude::*;

use corrective_planner::action::{eid, parse_command, parse_plan, ActionCommand, EntityId, Hand, Plan};

fn name() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,10}".prop_filter("reserved word", |s| EntityId::is_valid(s))
}

fn command() -> impl Strategy<Value = ActionCommand> {
    let hand = prop_oneof![Just(None), Just(Some(Hand::Left)), Just(Some(Hand::Right))];
    prop_oneof![
        (name(), name(), hand).prop_map(|(o, s, hand)| ActionCommand::Get {
            object: eid(&o),
            source: eid(&s),
            hand,
        }),
        (name(), name()).prop_map(|(o, d)| ActionCommand::Put {
            object: eid(&o),
            destination: eid(&d),
        }),
        (name(), name(), 1u32..5000).prop_map(|(s, d, amount)| ActionCommand::Pour {
            source: eid(&s),
            destination: eid(&d),
            amount,
        }),
        name().prop_map(|o| ActionCommand::OpenDoor { object: eid(&o) }),
        name().prop_map(|o| ActionCommand::CloseDoor { object: eid(&o) }),
        name().prop_map(|o| ActionCommand::Screw { object: eid(&o) }),
        name().prop_map(|o| ActionCommand::Unscrew { object: eid(&o) }),
        name().prop_map(|o| ActionCommand::FingerPush { object: eid(&o) }),
        (1u32..600).prop_map(|duration| ActionCommand::Wait { duration }),
    ]
}

proptest! {
    #[test]
    fn parsing_never_panics(line in ".{0,60}") {
        let _ = parse_command(&line);
        let _ = parse_plan(&line);
    }

    #[test]
    fn parsing_word_soup_never_panics(words in prop::collection::vec("[a-z_0-9]{0,8}|get|put|pour|left|right|-3|0", 0..6)) {
        let _ = parse_command(&words.join(" "));
    }

    #[test]
    fn rendered_commands_parse_back(cmd in command()) {
        let text = cmd.to_string();
        prop_assert_eq!(parse_command(&text).unwrap(), cmd.clone());
        prop_assert_eq!(parse_command(&format!("  {}  ", text.replace(' ', "   "))).unwrap(), cmd);
    }

    #[test]
    fn rendered_plans_parse_back(steps in prop::collection::vec(command(), 0..8)) {
        let plan = Plan::new(steps);
        let back = parse_plan(&plan.render()).unwrap();
        prop_assert_eq!(back.steps, plan.steps);
    }

    #[test]
    fn commands_survive_json(cmd in command()) {
        let json = serde_json::to_string(&cmd).unwrap();
        prop_assert_eq!(serde_json::from_str::<ActionCommand>(&json).unwrap(), cmd);
    }
}
