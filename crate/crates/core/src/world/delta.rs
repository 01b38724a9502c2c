use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Parent, StateDigest, WorldState};
use crate::action::{ActionCommand, EntityId, Hand};

/// One changed field. `entity` is `None` for robot-level fields
/// (`hand.left`, `hand.right`, `clock_s`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldChange {
    pub entity: Option<EntityId>,
    pub field: String,
    pub old: Option<String>,
    pub new: Option<String>,
}

/// Audit record of a single transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDelta {
    pub command: ActionCommand,
    #[serde(with = "digest_hex")]
    pub before_hash: StateDigest,
    #[serde(with = "digest_hex")]
    pub after_hash: StateDigest,
    pub changed: Vec<FieldChange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("state digest does not match the delta's before hash")]
    DigestMismatch,
    #[error("cannot replay change to {0}")]
    BadChange(String),
}

mod digest_hex {
    use super::StateDigest;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &StateDigest, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(d)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<StateDigest, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = hex::decode(text).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("digest must be 32 bytes"))?;
        Ok(StateDigest(arr))
    }
}

fn opt<T: ToString>(v: Option<T>) -> Option<String> {
    v.map(|x| x.to_string())
}

fn lower<T: serde::Serialize>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(|x| {
        serde_json::to_value(x)
            .ok()
            .and_then(|j| j.as_str().map(str::to_string))
            .unwrap_or_default()
    })
}

impl StateDelta {
    pub(super) fn between(command: ActionCommand, before: &WorldState, after: &WorldState) -> Self {
        let mut changed = Vec::new();
        for (id, a) in &before.entities {
            let b = &after.entities[id];
            let mut push = |field: &str, old: Option<String>, new: Option<String>| {
                if old != new {
                    changed.push(FieldChange {
                        entity: Some(id.clone()),
                        field: field.to_string(),
                        old,
                        new,
                    });
                }
            };
            push("parent", Some(a.parent.to_string()), Some(b.parent.to_string()));
            push("door", lower(&a.door), lower(&b.door));
            push("cap", lower(&a.cap), lower(&b.cap));
            push("power", lower(&a.power), lower(&b.power));
            let substances: std::collections::BTreeSet<&String> =
                a.contents.keys().chain(b.contents.keys()).collect();
            for s in substances {
                push(
                    &format!("contents.{s}"),
                    opt(a.contents.get(s)),
                    opt(b.contents.get(s)),
                );
            }
        }
        for h in Hand::BOTH {
            let old = before.held(h).map(|e| e.to_string());
            let new = after.held(h).map(|e| e.to_string());
            if old != new {
                changed.push(FieldChange {
                    entity: None,
                    field: format!("hand.{h}"),
                    old,
                    new,
                });
            }
        }
        if before.clock_s != after.clock_s {
            changed.push(FieldChange {
                entity: None,
                field: "clock_s".into(),
                old: Some(before.clock_s.to_string()),
                new: Some(after.clock_s.to_string()),
            });
        }
        StateDelta {
            command,
            before_hash: before.digest(),
            after_hash: after.digest(),
            changed,
        }
    }

    /// Re-applies the recorded field changes to `state`, which must match
    /// `before_hash`.
    pub fn replay(&self, state: &WorldState) -> Result<WorldState, ReplayError> {
        if state.digest() != self.before_hash {
            return Err(ReplayError::DigestMismatch);
        }
        let mut next = state.clone();
        for change in &self.changed {
            let bad = || ReplayError::BadChange(change.field.clone());
            match &change.entity {
                None if change.field == "clock_s" => {
                    next.clock_s = change
                        .new
                        .as_deref()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(bad)?;
                }
                None => {
                    let hand = match change.field.as_str() {
                        "hand.left" => Hand::Left,
                        "hand.right" => Hand::Right,
                        _ => return Err(bad()),
                    };
                    let held = match &change.new {
                        Some(v) => Some(EntityId::new(v.clone()).map_err(|_| bad())?),
                        None => None,
                    };
                    next.hands.insert(hand, held);
                }
                Some(id) => {
                    let e = next.entities.get_mut(id).ok_or_else(bad)?;
                    let value = change.new.clone();
                    let parse_json = |v: &str| serde_json::Value::String(v.to_string());
                    match change.field.as_str() {
                        "parent" => {
                            e.parent = value
                                .ok_or_else(bad)?
                                .parse::<Parent>()
                                .map_err(|_| bad())?
                        }
                        "door" => {
                            e.door = value
                                .map(|v| serde_json::from_value(parse_json(&v)))
                                .transpose()
                                .map_err(|_| bad())?
                        }
                        "cap" => {
                            e.cap = value
                                .map(|v| serde_json::from_value(parse_json(&v)))
                                .transpose()
                                .map_err(|_| bad())?
                        }
                        "power" => {
                            e.power = value
                                .map(|v| serde_json::from_value(parse_json(&v)))
                                .transpose()
                                .map_err(|_| bad())?
                        }
                        field => {
                            let substance = field.strip_prefix("contents.").ok_or_else(bad)?;
                            match value {
                                Some(v) => {
                                    e.contents
                                        .insert(substance.to_string(), v.parse().map_err(|_| bad())?);
                                }
                                None => {
                                    e.contents.remove(substance);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{apply, fixtures::*};
    use super::*;

    #[test]
    fn replay_reproduces_after_state() {
        let s = WorldState::from_entities([
            surface("table"),
            surface("shelf"),
            held(vessel("shaker", "table", 500, &[("rum", 100), ("gin", 20)]), Hand::Left),
            vessel("glass", "table", 200, &[]),
            item("salt", "table"),
        ])
        .unwrap();
        for line in ["pour shaker glass 70", "get salt table", "put shaker shelf", "wait 4"] {
            let (next, delta) = apply(&s, &line.parse().unwrap()).unwrap();
            let replayed = delta.replay(&s).unwrap();
            assert_eq!(replayed, next, "{line}");
            assert_eq!(replayed.digest(), delta.after_hash);
        }
    }

    #[test]
    fn replay_rejects_wrong_base() {
        let s = WorldState::from_entities([surface("table"), item("salt", "table")]).unwrap();
        let (next, delta) = apply(&s, &"get salt table".parse().unwrap()).unwrap();
        assert_eq!(delta.replay(&next), Err(ReplayError::DigestMismatch));
    }
}
