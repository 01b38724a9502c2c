use crate::action::{ActionCommand, EntityId, Hand};
use crate::world::{CapState, DoorState, Parent, WorldState};

use super::error::{ErrorKind, PlanError, RepairRule};

fn held_summary(state: &WorldState) -> String {
    let parts: Vec<String> = Hand::BOTH
        .into_iter()
        .filter_map(|h| state.held(h).map(|e| format!("the {h} hand holds {e}")))
        .collect();
    parts.join(" and ")
}

fn held_names(state: &WorldState) -> String {
    let names: Vec<String> = Hand::BOTH
        .into_iter()
        .filter_map(|h| state.held(h).map(|e| e.to_string()))
        .collect();
    names.join(" or ")
}

/// Closest existing entity name, if one is plausibly what was meant.
pub fn nearest_name(state: &WorldState, name: &EntityId) -> Option<EntityId> {
    let target = name.as_str().to_ascii_lowercase();
    let mut best: Option<(f64, &EntityId)> = None;
    for id in state.entities.keys() {
        let score = strsim::normalized_damerau_levenshtein(&target, &id.as_str().to_ascii_lowercase());
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, id));
        }
    }
    best.filter(|(s, _)| *s >= 0.5).map(|(_, id)| id.clone())
}

fn check_names(state: &WorldState, cmd: &ActionCommand) -> Result<(), PlanError> {
    for e in cmd.entities() {
        if !state.contains(e) {
            let how = match nearest_name(state, e) {
                Some(n) => format!("use {n} instead of {e}"),
                None => "use one of the objects listed in the scene description".to_string(),
            };
            return Err(PlanError::unrecoverable(
                ErrorKind::Semantic,
                cmd,
                format!("there is no object named {e}"),
                how,
            ));
        }
    }
    Ok(())
}

fn opener(state: &WorldState, id: &EntityId) -> &'static str {
    match state.get(id) {
        Some(e) if e.door == Some(DoorState::Closed) => "open_door",
        _ => "unscrew",
    }
}

fn closed_word(state: &WorldState, id: &EntityId) -> &'static str {
    match state.get(id) {
        Some(e) if e.door == Some(DoorState::Closed) => "closed",
        _ => "screwed shut",
    }
}

fn sealed_error(state: &WorldState, cmd: &ActionCommand, sealed: &EntityId) -> PlanError {
    PlanError::recoverable(
        cmd,
        RepairRule::OpenContainerFirst {
            container: sealed.clone(),
        },
        format!("{sealed} is {}", closed_word(state, sealed)),
        format!("{} {sealed} first", opener(state, sealed)),
    )
}

fn need_free_hand(state: &WorldState, cmd: &ActionCommand) -> Result<(), PlanError> {
    if state.free_hands().is_empty() {
        return Err(PlanError::recoverable(
            cmd,
            RepairRule::FreeHand,
            format!("no hand is free because {}", held_summary(state)),
            format!("put {} down first", held_names(state)),
        ));
    }
    Ok(())
}

fn logical(cmd: &ActionCommand, why: String, how: String) -> PlanError {
    PlanError::unrecoverable(ErrorKind::Logical, cmd, why, how)
}

/// Classifies `cmd` against `state` without executing it. Name resolution
/// comes first, then the logical rulebook.
pub fn check(state: &WorldState, cmd: &ActionCommand) -> Result<(), PlanError> {
    check_names(state, cmd)?;
    match cmd {
        ActionCommand::Get {
            object,
            source,
            hand,
        } => {
            let obj = &state.entities[object];
            if let Parent::Hand(h) = obj.parent {
                return Err(logical(
                    cmd,
                    format!("{object} is already in the {h} hand"),
                    format!("skip getting {object}"),
                ));
            }
            if !obj.graspable {
                return Err(logical(
                    cmd,
                    format!("{object} cannot be grasped"),
                    format!("do not pick up {object}"),
                ));
            }
            if !state.is_ancestor(source, object) {
                let actual = obj.parent.entity().cloned();
                let how = match actual {
                    Some(p) => format!("get {object} from {p}"),
                    None => format!("check where {object} is"),
                };
                return Err(logical(cmd, format!("{object} is not in or on {source}"), how));
            }
            if let Some(sealed) = state.outermost_sealed_ancestor(object) {
                return Err(sealed_error(state, cmd, sealed));
            }
            let free = state.free_hands();
            if free.is_empty() {
                return Err(logical(
                    cmd,
                    format!("getting {object} with all hands full, {}", held_summary(state)),
                    format!("put {} somewhere before getting {object}", held_names(state)),
                ));
            }
            if let Some(h) = hand {
                if let Some(busy) = state.held(*h) {
                    let to = h.other();
                    return Err(PlanError::recoverable(
                        cmd,
                        RepairRule::SwitchHand { to },
                        format!("the {h} hand is holding {busy}"),
                        format!("use the {to} hand"),
                    ));
                }
            }
            Ok(())
        }
        ActionCommand::Put {
            object,
            destination,
        } => {
            if state.hand_holding(object).is_none() {
                return Err(PlanError::recoverable(
                    cmd,
                    RepairRule::TakeThenPut {
                        object: object.clone(),
                    },
                    format!("{object} is not in hand"),
                    format!("get {object} first"),
                ));
            }
            if destination == object || state.is_ancestor(object, destination) {
                return Err(logical(
                    cmd,
                    format!("{object} cannot be put on or into itself"),
                    format!("choose a destination other than {destination}"),
                ));
            }
            let sealed = if state.entities[destination].is_sealed() {
                Some(destination)
            } else {
                state.outermost_sealed_ancestor(destination)
            };
            if let Some(sealed) = sealed {
                return Err(sealed_error(state, cmd, sealed));
            }
            Ok(())
        }
        ActionCommand::Pour {
            source,
            destination,
            ..
        } => {
            if state.hand_holding(source).is_none() {
                return Err(PlanError::recoverable(
                    cmd,
                    RepairRule::TakeThenPour {
                        source: source.clone(),
                    },
                    format!("{source} is not in hand"),
                    format!("get {source} first"),
                ));
            }
            if source == destination {
                return Err(logical(
                    cmd,
                    format!("{source} cannot be poured into itself"),
                    "pour into a different vessel".to_string(),
                ));
            }
            if let Some(container) = state.enclosing_container(destination) {
                return Err(logical(
                    cmd,
                    format!("{destination} is inside {container}"),
                    format!("take {destination} out of {container} before pouring"),
                ));
            }
            let dst = &state.entities[destination];
            match dst.free_capacity_ml() {
                None => {
                    return Err(logical(
                        cmd,
                        format!("{destination} cannot hold liquids"),
                        "pour into a glass or another vessel".to_string(),
                    ))
                }
                Some(0) => {
                    return Err(logical(
                        cmd,
                        format!("{destination} is full"),
                        "pour into a different vessel".to_string(),
                    ))
                }
                Some(_) => {}
            }
            let sealed = if dst.is_sealed() {
                Some(destination)
            } else {
                state.outermost_sealed_ancestor(destination)
            };
            if let Some(sealed) = sealed {
                return Err(sealed_error(state, cmd, sealed));
            }
            let src = &state.entities[source];
            if src.is_sealed() {
                return Err(PlanError::recoverable(
                    cmd,
                    RepairRule::UnscrewBeforePour {
                        vessel: source.clone(),
                    },
                    format!("{source} is {}", closed_word(state, source)),
                    format!("{} {source} first", opener(state, source)),
                ));
            }
            if src.fill_ml() == 0 {
                return Err(logical(
                    cmd,
                    format!("{source} is empty"),
                    format!("pour from a vessel that still contains something instead of {source}"),
                ));
            }
            Ok(())
        }
        ActionCommand::OpenDoor { object } | ActionCommand::CloseDoor { object } => {
            let want = if matches!(cmd, ActionCommand::OpenDoor { .. }) {
                DoorState::Open
            } else {
                DoorState::Closed
            };
            match state.entities[object].door {
                None => Err(logical(
                    cmd,
                    format!("{object} has no door"),
                    format!("do not {} {object}", cmd.verb().keyword()),
                )),
                Some(d) if d == want => Err(logical(
                    cmd,
                    format!("the door of {object} is already {}", door_word(want)),
                    format!("skip this {} step", cmd.verb().keyword()),
                )),
                Some(_) => need_free_hand(state, cmd),
            }
        }
        ActionCommand::Screw { object } | ActionCommand::Unscrew { object } => {
            let want = if matches!(cmd, ActionCommand::Screw { .. }) {
                CapState::Screwed
            } else {
                CapState::Unscrewed
            };
            match state.entities[object].cap {
                None => Err(logical(
                    cmd,
                    format!("{object} has no cap"),
                    format!("do not {} {object}", cmd.verb().keyword()),
                )),
                Some(c) if c == want => Err(logical(
                    cmd,
                    format!("{object} is already {}", cap_word(want)),
                    format!("skip this {} step", cmd.verb().keyword()),
                )),
                Some(_) => need_free_hand(state, cmd),
            }
        }
        ActionCommand::FingerPush { object } => {
            if state.entities[object].power.is_none() {
                return Err(logical(
                    cmd,
                    format!("{object} has no button to push"),
                    format!("do not push {object}"),
                ));
            }
            need_free_hand(state, cmd)
        }
        ActionCommand::Wait { .. } => Ok(()),
    }
}

fn door_word(d: DoorState) -> &'static str {
    match d {
        DoorState::Open => "open",
        DoorState::Closed => "closed",
    }
}

fn cap_word(c: CapState) -> &'static str {
    match c {
        CapState::Screwed => "screwed",
        CapState::Unscrewed => "unscrewed",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::fixtures::*;

    fn kitchen() -> WorldState {
        WorldState::from_entities([
            surface("table"),
            fridge("fridge", DoorState::Closed),
            item("milk", "fridge"),
            item("salt", "table"),
            item("pepper", "table"),
            vessel("glass", "table", 300, &[]),
            bottle("rum_bottle", "table", &[("rum", 700)], CapState::Screwed),
        ])
        .unwrap()
    }

    fn cmd(s: &str) -> ActionCommand {
        s.parse().unwrap()
    }

    #[test]
    fn unknown_name_suggests_nearest() {
        let err = check(&kitchen(), &cmd("get rum_botle table")).unwrap_err();
        assert_eq!(err.kind, ErrorKind::Semantic);
        assert!(!err.recoverable);
        assert_eq!(err.why, "there is no object named rum_botle");
        assert_eq!(err.how, "use rum_bottle instead of rum_botle");
    }

    #[test]
    fn rule_and_recoverability_agree() {
        let s = kitchen();
        for line in ["get milk fridge", "put salt table", "pour rum_bottle glass 50", "get salt fridge"] {
            if let Err(e) = check(&s, &cmd(line)) {
                assert_eq!(e.recoverable, e.rule.is_some(), "{line}");
            }
        }
    }

    #[test]
    fn valid_commands_pass() {
        let s = kitchen();
        assert_eq!(check(&s, &cmd("get salt table")), Ok(()));
        assert_eq!(check(&s, &cmd("open_door fridge")), Ok(()));
        assert_eq!(check(&s, &cmd("wait 3")), Ok(()));
    }
}
