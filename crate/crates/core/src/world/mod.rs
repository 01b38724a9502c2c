//! Discrete world simulation: entities in a containment forest, the robot's
//! two hand slots, fill levels and door/cap/power states.
//!
//! [`WorldState`] is a plain value. [`apply`] never mutates its input and
//! returns the successor state together with a [`StateDelta`].

mod delta;
mod describe;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::action::{ActionCommand, EntityId, Hand};

pub use delta::{FieldChange, StateDelta};
pub use describe::describe_state;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Container,
    Surface,
    Ingredient,
    LiquidVessel,
    Device,
    Tool,
    Block,
}

impl Category {
    /// Containers hold things "in" them; everything else holds things "on" it.
    pub fn preposition(self) -> &'static str {
        match self {
            Category::Container | Category::LiquidVessel | Category::Device => "in",
            _ => "on",
        }
    }
}

/// Where an entity sits in the containment forest.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Parent {
    World,
    Hand(Hand),
    Entity(EntityId),
}

impl Parent {
    pub fn entity(&self) -> Option<&EntityId> {
        match self {
            Parent::Entity(e) => Some(e),
            _ => None,
        }
    }
}

impl fmt::Display for Parent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Parent::World => f.write_str("@world"),
            Parent::Hand(h) => write!(f, "@{h}"),
            Parent::Entity(e) => write!(f, "{e}"),
        }
    }
}

impl std::str::FromStr for Parent {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "@world" | "world" => Ok(Parent::World),
            "@left" => Ok(Parent::Hand(Hand::Left)),
            "@right" => Ok(Parent::Hand(Hand::Right)),
            other => EntityId::new(other)
                .map(Parent::Entity)
                .map_err(|e| e.to_string()),
        }
    }
}

impl Serialize for Parent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Parent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoorState {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapState {
    Screwed,
    Unscrewed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerState {
    On,
    Off,
}

/// Abstract reachability of an entity for one hand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reach {
    Cost(f64),
    Unreachable,
}

impl Reach {
    pub fn cost(self) -> Option<f64> {
        match self {
            Reach::Cost(c) => Some(c),
            Reach::Unreachable => None,
        }
    }
}

impl Serialize for Reach {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Reach::Cost(c) => s.serialize_f64(*c),
            Reach::Unreachable => s.serialize_str("unreachable"),
        }
    }
}

impl<'de> Deserialize<'de> for Reach {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(c) if c >= 0.0 && c.is_finite() => Ok(Reach::Cost(c)),
            Raw::Int(c) if c >= 0 => Ok(Reach::Cost(c as f64)),
            Raw::Text(t) if t == "unreachable" => Ok(Reach::Unreachable),
            _ => Err(serde::de::Error::custom(
                "reach cost must be a non-negative number or \"unreachable\"",
            )),
        }
    }
}

/// Reach cost assumed for hands without an explicit entry.
pub const DEFAULT_REACH_COST: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawEntity")]
pub struct Entity {
    pub id: EntityId,
    pub category: Category,
    /// Free-form kind label (e.g. `glass`, `bottle`) used by goal checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    pub parent: Parent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub door: Option<DoorState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<CapState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PowerState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_ml: Option<u32>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub contents: BTreeMap<String, u32>,
    #[serde(default)]
    pub graspable: bool,
    /// Entities this one occludes while they share a parent.
    #[serde(default, rename = "blocks", skip_serializing_if = "BTreeSet::is_empty")]
    pub is_blocker_for: BTreeSet<EntityId>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub reach_cost: BTreeMap<Hand, Reach>,
}

/// Serialized form; `graspable` defaults by category when omitted.
#[derive(Deserialize)]
struct RawEntity {
    id: EntityId,
    category: Category,
    #[serde(default)]
    kind: Option<String>,
    parent: Parent,
    #[serde(default)]
    door: Option<DoorState>,
    #[serde(default)]
    cap: Option<CapState>,
    #[serde(default)]
    power: Option<PowerState>,
    #[serde(default)]
    capacity_ml: Option<u32>,
    #[serde(default)]
    contents: BTreeMap<String, u32>,
    #[serde(default)]
    graspable: Option<bool>,
    #[serde(default, rename = "blocks")]
    is_blocker_for: BTreeSet<EntityId>,
    #[serde(default)]
    reach_cost: BTreeMap<Hand, Reach>,
}

impl From<RawEntity> for Entity {
    fn from(r: RawEntity) -> Self {
        let mut e = Entity::new(r.id, r.category, r.parent);
        if let Some(g) = r.graspable {
            e.graspable = g;
        }
        e.kind = r.kind;
        e.door = r.door;
        e.cap = r.cap;
        e.power = r.power;
        e.capacity_ml = r.capacity_ml;
        e.contents = r.contents;
        e.is_blocker_for = r.is_blocker_for;
        e.reach_cost = r.reach_cost;
        e
    }
}

impl Entity {
    pub fn new(id: EntityId, category: Category, parent: Parent) -> Self {
        Entity {
            id,
            category,
            kind: None,
            parent,
            door: None,
            cap: None,
            power: None,
            capacity_ml: None,
            contents: BTreeMap::new(),
            graspable: matches!(
                category,
                Category::Ingredient | Category::LiquidVessel | Category::Tool | Category::Block
            ),
            is_blocker_for: BTreeSet::new(),
            reach_cost: BTreeMap::new(),
        }
    }

    pub fn reach(&self, hand: Hand) -> Reach {
        self.reach_cost
            .get(&hand)
            .copied()
            .unwrap_or(Reach::Cost(DEFAULT_REACH_COST))
    }

    /// True when a closed door or a screwed cap seals this entity.
    pub fn is_sealed(&self) -> bool {
        self.door == Some(DoorState::Closed) || self.cap == Some(CapState::Screwed)
    }

    pub fn fill_ml(&self) -> u32 {
        self.contents.values().sum()
    }

    pub fn free_capacity_ml(&self) -> Option<u32> {
        self.capacity_ml
            .map(|cap| cap.saturating_sub(self.fill_ml()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub entities: BTreeMap<EntityId, Entity>,
    pub hands: BTreeMap<Hand, Option<EntityId>>,
    #[serde(default)]
    pub clock_s: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error("duplicate entity {0}")]
    Duplicate(EntityId),
    #[error("entity {entity} refers to unknown parent {parent}")]
    DanglingParent { entity: EntityId, parent: EntityId },
    #[error("entity {0} is part of a containment cycle")]
    Cycle(EntityId),
    #[error("hand {hand} and entity {entity} disagree about holding")]
    HandMismatch { hand: Hand, entity: EntityId },
    #[error("entity {entity} holds {fill} ml but its capacity is {capacity} ml")]
    OverCapacity {
        entity: EntityId,
        fill: u32,
        capacity: u32,
    },
    #[error("entity {entity} lists unknown entity {blocked} as blocked")]
    DanglingBlocker { entity: EntityId, blocked: EntityId },
}

/// Transition failure. Mirrors the logical checks, so after a clean check
/// it signals a bug upstream.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransitionError {
    #[error("there is no object named {0}")]
    UnknownEntity(EntityId),
    #[error("{0} cannot be grasped")]
    NotGraspable(EntityId),
    #[error("{0} is already held")]
    AlreadyHeld(EntityId),
    #[error("both hands are full")]
    NoFreeHand,
    #[error("the {0} hand is busy")]
    HandBusy(Hand),
    #[error("{0} is not in hand")]
    NotHeld(EntityId),
    #[error("{0} is sealed")]
    Sealed(EntityId),
    #[error("{object} cannot be placed on/in {destination}")]
    InvalidPlacement {
        object: EntityId,
        destination: EntityId,
    },
    #[error("{0} is full")]
    DestinationFull(EntityId),
    #[error("{0} cannot hold liquids")]
    NotAVessel(EntityId),
    #[error("{0} is empty")]
    SourceEmpty(EntityId),
    #[error("{object} is inside container {container}")]
    InsideContainer {
        object: EntityId,
        container: EntityId,
    },
    #[error("{0} has no door")]
    NoDoor(EntityId),
    #[error("{0} has no cap")]
    NoCap(EntityId),
    #[error("{0} has no power switch")]
    NoPower(EntityId),
    #[error("{0} is already in the requested state")]
    AlreadyInState(EntityId),
}

/// Content-addressed digest of a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateDigest(pub [u8; 32]);

impl fmt::Display for StateDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl Default for WorldState {
    fn default() -> Self {
        WorldState::new()
    }
}

impl WorldState {
    pub fn new() -> Self {
        let mut hands = BTreeMap::new();
        hands.insert(Hand::Left, None);
        hands.insert(Hand::Right, None);
        WorldState {
            entities: BTreeMap::new(),
            hands,
            clock_s: 0,
        }
    }

    /// Builds a state from entities, deriving hand slots from `@left`/`@right`
    /// parents, and validates every invariant.
    pub fn from_entities(entities: impl IntoIterator<Item = Entity>) -> Result<Self, WorldError> {
        let mut state = WorldState::new();
        for e in entities {
            if state.entities.contains_key(&e.id) {
                return Err(WorldError::Duplicate(e.id));
            }
            if let Parent::Hand(h) = e.parent {
                if state.hands[&h].is_some() {
                    return Err(WorldError::HandMismatch {
                        hand: h,
                        entity: e.id,
                    });
                }
                state.hands.insert(h, Some(e.id.clone()));
            }
            state.entities.insert(e.id.clone(), e);
        }
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        for (id, e) in &self.entities {
            if let Parent::Entity(p) = &e.parent {
                if !self.entities.contains_key(p) {
                    return Err(WorldError::DanglingParent {
                        entity: id.clone(),
                        parent: p.clone(),
                    });
                }
            }
            if let Parent::Hand(h) = e.parent {
                if self.hands.get(&h).cloned().flatten().as_ref() != Some(id) {
                    return Err(WorldError::HandMismatch {
                        hand: h,
                        entity: id.clone(),
                    });
                }
            }
            if let Some(cap) = e.capacity_ml {
                let fill = e.fill_ml();
                if fill > cap {
                    return Err(WorldError::OverCapacity {
                        entity: id.clone(),
                        fill,
                        capacity: cap,
                    });
                }
            }
            for b in &e.is_blocker_for {
                if !self.entities.contains_key(b) {
                    return Err(WorldError::DanglingBlocker {
                        entity: id.clone(),
                        blocked: b.clone(),
                    });
                }
            }
            // Walking up must terminate within |entities| steps.
            let mut cur = e.parent.clone();
            let mut steps = 0;
            while let Parent::Entity(p) = cur {
                steps += 1;
                if steps > self.entities.len() {
                    return Err(WorldError::Cycle(id.clone()));
                }
                cur = self.entities[&p].parent.clone();
            }
        }
        for (h, held) in &self.hands {
            if let Some(id) = held {
                match self.entities.get(id) {
                    Some(e) if e.parent == Parent::Hand(*h) => {}
                    _ => {
                        return Err(WorldError::HandMismatch {
                            hand: *h,
                            entity: id.clone(),
                        })
                    }
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &EntityId) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        self.entities.contains_key(id)
    }

    pub fn held(&self, hand: Hand) -> Option<&EntityId> {
        self.hands.get(&hand).and_then(|h| h.as_ref())
    }

    pub fn hand_holding(&self, id: &EntityId) -> Option<Hand> {
        Hand::BOTH.into_iter().find(|h| self.held(*h) == Some(id))
    }

    pub fn free_hands(&self) -> Vec<Hand> {
        Hand::BOTH
            .into_iter()
            .filter(|h| self.held(*h).is_none())
            .collect()
    }

    /// Ancestors from the direct parent upwards (entities only).
    pub fn ancestors(&self, id: &EntityId) -> Vec<&EntityId> {
        let mut out = Vec::new();
        let mut cur = self.entities.get(id).map(|e| &e.parent);
        while let Some(Parent::Entity(p)) = cur {
            out.push(p);
            cur = self.entities.get(p).map(|e| &e.parent);
        }
        out
    }

    /// The hand at the root of `id`'s containment chain, if any.
    pub fn root_hand(&self, id: &EntityId) -> Option<Hand> {
        let mut cur = self.entities.get(id)?;
        loop {
            match &cur.parent {
                Parent::Hand(h) => return Some(*h),
                Parent::World => return None,
                Parent::Entity(p) => cur = self.entities.get(p)?,
            }
        }
    }

    /// Nearest ancestor of category container.
    pub fn enclosing_container(&self, id: &EntityId) -> Option<&EntityId> {
        self.ancestors(id)
            .into_iter()
            .find(|a| self.entities[*a].category == Category::Container)
    }

    pub fn is_ancestor(&self, ancestor: &EntityId, of: &EntityId) -> bool {
        self.ancestors(of).into_iter().any(|a| a == ancestor)
    }

    /// Outermost sealed entity among the ancestors of `id`.
    pub fn outermost_sealed_ancestor(&self, id: &EntityId) -> Option<&EntityId> {
        self.ancestors(id)
            .into_iter()
            .rev()
            .find(|a| self.entities[*a].is_sealed())
    }

    pub fn children(&self, id: &EntityId) -> Vec<&EntityId> {
        self.entities
            .values()
            .filter(|e| e.parent == Parent::Entity(id.clone()))
            .map(|e| &e.id)
            .collect()
    }

    pub fn roots(&self) -> Vec<&EntityId> {
        self.entities
            .values()
            .filter(|e| e.parent == Parent::World)
            .map(|e| &e.id)
            .collect()
    }

    /// Total ml per substance across all entities.
    pub fn substance_totals(&self) -> BTreeMap<String, u64> {
        let mut totals = BTreeMap::new();
        for e in self.entities.values() {
            for (s, ml) in &e.contents {
                *totals.entry(s.clone()).or_insert(0) += *ml as u64;
            }
        }
        totals
    }

    fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("world state serializes")
    }

    pub fn digest(&self) -> StateDigest {
        let hash = Sha256::digest(self.canonical_bytes());
        let mut out = [0u8; 32];
        out.copy_from_slice(&hash);
        StateDigest(out)
    }

    /// Canonical structured-text form (TOML, same entity schema as scenario files).
    pub fn to_document(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            clock_s: u64,
            entities: Vec<&'a Entity>,
        }
        toml::to_string(&Doc {
            clock_s: self.clock_s,
            entities: self.entities.values().collect(),
        })
        .expect("world state serializes to toml")
    }

    pub fn from_document(text: &str) -> Result<Self, String> {
        #[derive(Deserialize)]
        struct Doc {
            #[serde(default)]
            clock_s: u64,
            #[serde(default)]
            entities: Vec<Entity>,
        }
        let doc: Doc = toml::from_str(text).map_err(|e| e.to_string())?;
        let mut state = WorldState::from_entities(doc.entities).map_err(|e| e.to_string())?;
        state.clock_s = doc.clock_s;
        Ok(state)
    }

    fn entity(&self, id: &EntityId) -> Result<&Entity, TransitionError> {
        self.entities
            .get(id)
            .ok_or_else(|| TransitionError::UnknownEntity(id.clone()))
    }

    fn entity_mut(&mut self, id: &EntityId) -> &mut Entity {
        self.entities.get_mut(id).expect("entity checked before mutation")
    }

    /// Free hand with the lowest reach cost to `target`; ties go left.
    pub fn preferred_free_hand(&self, target: &EntityId) -> Option<Hand> {
        let entity = self.entities.get(target)?;
        let mut best: Option<(Hand, f64)> = None;
        for h in self.free_hands() {
            let cost = entity.reach(h).cost().unwrap_or(f64::INFINITY);
            if best.is_none_or(|(_, c)| cost < c) {
                best = Some((h, cost));
            }
        }
        best.map(|(h, _)| h)
    }
}

/// Splits `amount` ml across `contents` proportionally, using largest
/// remainders (ties broken alphabetically) so the parts sum exactly.
pub(crate) fn proportional_split(contents: &BTreeMap<String, u32>, amount: u32) -> BTreeMap<String, u32> {
    let total: u64 = contents.values().map(|v| *v as u64).sum();
    let mut out = BTreeMap::new();
    if total == 0 || amount == 0 {
        return out;
    }
    let amount = (amount as u64).min(total);
    let mut assigned = 0u64;
    let mut remainders: Vec<(u64, &String)> = Vec::new();
    for (s, ml) in contents {
        let scaled = amount * (*ml as u64);
        let part = scaled / total;
        assigned += part;
        remainders.push((scaled % total, s));
        out.insert(s.clone(), part as u32);
    }
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
    for (_, s) in remainders.into_iter().take((amount - assigned) as usize) {
        *out.get_mut(s).unwrap() += 1;
    }
    out.retain(|_, v| *v > 0);
    out
}

/// Applies one command. Fails closed on any violated precondition.
pub fn apply(state: &WorldState, cmd: &ActionCommand) -> Result<(WorldState, StateDelta), TransitionError> {
    let next = apply_state(state, cmd)?;
    let delta = StateDelta::between(cmd.clone(), state, &next);
    Ok((next, delta))
}

/// Like [`apply`] without building the audit record; for simulation.
pub fn apply_state(state: &WorldState, cmd: &ActionCommand) -> Result<WorldState, TransitionError> {
    for e in cmd.entities() {
        state.entity(e)?;
    }
    let mut next = state.clone();
    match cmd {
        ActionCommand::Get { object, hand, .. } => {
            let obj = state.entity(object)?;
            if !obj.graspable {
                return Err(TransitionError::NotGraspable(object.clone()));
            }
            if matches!(obj.parent, Parent::Hand(_)) {
                return Err(TransitionError::AlreadyHeld(object.clone()));
            }
            if let Some(sealed) = state.outermost_sealed_ancestor(object) {
                return Err(TransitionError::Sealed(sealed.clone()));
            }
            let hand = match hand {
                Some(h) if state.held(*h).is_some() => return Err(TransitionError::HandBusy(*h)),
                Some(h) => *h,
                None => state
                    .preferred_free_hand(object)
                    .ok_or(TransitionError::NoFreeHand)?,
            };
            next.entity_mut(object).parent = Parent::Hand(hand);
            next.hands.insert(hand, Some(object.clone()));
        }
        ActionCommand::Put {
            object,
            destination,
        } => {
            let hand = state
                .hand_holding(object)
                .ok_or_else(|| TransitionError::NotHeld(object.clone()))?;
            if destination == object || state.is_ancestor(object, destination) {
                return Err(TransitionError::InvalidPlacement {
                    object: object.clone(),
                    destination: destination.clone(),
                });
            }
            if state.entity(destination)?.is_sealed() {
                return Err(TransitionError::Sealed(destination.clone()));
            }
            if let Some(sealed) = state.outermost_sealed_ancestor(destination) {
                return Err(TransitionError::Sealed(sealed.clone()));
            }
            next.entity_mut(object).parent = Parent::Entity(destination.clone());
            next.hands.insert(hand, None);
        }
        ActionCommand::Pour {
            source,
            destination,
            amount,
        } => {
            if state.hand_holding(source).is_none() {
                return Err(TransitionError::NotHeld(source.clone()));
            }
            let src = state.entity(source)?;
            let dst = state.entity(destination)?;
            if source == destination {
                return Err(TransitionError::InvalidPlacement {
                    object: source.clone(),
                    destination: destination.clone(),
                });
            }
            if let Some(container) = state.enclosing_container(destination) {
                return Err(TransitionError::InsideContainer {
                    object: destination.clone(),
                    container: container.clone(),
                });
            }
            if src.is_sealed() {
                return Err(TransitionError::Sealed(source.clone()));
            }
            if dst.is_sealed() {
                return Err(TransitionError::Sealed(destination.clone()));
            }
            if let Some(sealed) = state.outermost_sealed_ancestor(destination) {
                return Err(TransitionError::Sealed(sealed.clone()));
            }
            let free = dst
                .free_capacity_ml()
                .ok_or_else(|| TransitionError::NotAVessel(destination.clone()))?;
            if free == 0 {
                return Err(TransitionError::DestinationFull(destination.clone()));
            }
            let available = src.fill_ml();
            if available == 0 {
                return Err(TransitionError::SourceEmpty(source.clone()));
            }
            let moved = (*amount).min(available).min(free);
            let parts = proportional_split(&src.contents, moved);
            for (substance, ml) in parts {
                let s = next.entity_mut(source);
                let left = s.contents[&substance] - ml;
                if left == 0 {
                    s.contents.remove(&substance);
                } else {
                    s.contents.insert(substance.clone(), left);
                }
                *next
                    .entity_mut(destination)
                    .contents
                    .entry(substance)
                    .or_insert(0) += ml;
            }
        }
        ActionCommand::OpenDoor { object } | ActionCommand::CloseDoor { object } => {
            let want = if matches!(cmd, ActionCommand::OpenDoor { .. }) {
                DoorState::Open
            } else {
                DoorState::Closed
            };
            match state.entity(object)?.door {
                None => return Err(TransitionError::NoDoor(object.clone())),
                Some(d) if d == want => return Err(TransitionError::AlreadyInState(object.clone())),
                Some(_) => {}
            }
            if state.free_hands().is_empty() {
                return Err(TransitionError::NoFreeHand);
            }
            next.entity_mut(object).door = Some(want);
        }
        ActionCommand::Screw { object } | ActionCommand::Unscrew { object } => {
            let want = if matches!(cmd, ActionCommand::Screw { .. }) {
                CapState::Screwed
            } else {
                CapState::Unscrewed
            };
            match state.entity(object)?.cap {
                None => return Err(TransitionError::NoCap(object.clone())),
                Some(c) if c == want => return Err(TransitionError::AlreadyInState(object.clone())),
                Some(_) => {}
            }
            if state.free_hands().is_empty() {
                return Err(TransitionError::NoFreeHand);
            }
            next.entity_mut(object).cap = Some(want);
        }
        ActionCommand::FingerPush { object } => {
            let power = state
                .entity(object)?
                .power
                .ok_or_else(|| TransitionError::NoPower(object.clone()))?;
            if state.free_hands().is_empty() {
                return Err(TransitionError::NoFreeHand);
            }
            next.entity_mut(object).power = Some(match power {
                PowerState::On => PowerState::Off,
                PowerState::Off => PowerState::On,
            });
        }
        ActionCommand::Wait { duration } => {
            next.clock_s += *duration as u64;
        }
    }
    Ok(next)
}

/// Content-addressed store of states for replay and simulate-before-execute.
#[derive(Debug, Default, Clone)]
pub struct SnapshotStore {
    states: BTreeMap<StateDigest, WorldState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown state digest {0}")]
pub struct UnknownDigest(pub StateDigest);

impl SnapshotStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&mut self, state: &WorldState) -> StateDigest {
        let digest = state.digest();
        self.states.entry(digest).or_insert_with(|| state.clone());
        digest
    }

    pub fn restore(&self, digest: &StateDigest) -> Result<WorldState, UnknownDigest> {
        self.states
            .get(digest)
            .cloned()
            .ok_or(UnknownDigest(*digest))
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::action::eid;

    pub fn surface(id: &str) -> Entity {
        Entity::new(eid(id), Category::Surface, Parent::World)
    }

    pub fn on(mut e: Entity, parent: &str) -> Entity {
        e.parent = Parent::Entity(eid(parent));
        e
    }

    pub fn item(id: &str, parent: &str) -> Entity {
        Entity::new(eid(id), Category::Ingredient, Parent::Entity(eid(parent)))
    }

    pub fn vessel(id: &str, parent: &str, capacity: u32, contents: &[(&str, u32)]) -> Entity {
        let mut e = Entity::new(eid(id), Category::Container, Parent::Entity(eid(parent)));
        e.graspable = true;
        e.capacity_ml = Some(capacity);
        e.contents = contents.iter().map(|(s, v)| (s.to_string(), *v)).collect();
        e
    }

    pub fn bottle(id: &str, parent: &str, contents: &[(&str, u32)], cap: CapState) -> Entity {
        let mut e = Entity::new(eid(id), Category::LiquidVessel, Parent::Entity(eid(parent)));
        e.capacity_ml = Some(1000);
        e.cap = Some(cap);
        e.contents = contents.iter().map(|(s, v)| (s.to_string(), *v)).collect();
        e
    }

    pub fn held(mut e: Entity, hand: Hand) -> Entity {
        e.parent = Parent::Hand(hand);
        e
    }

    pub fn fridge(id: &str, door: DoorState) -> Entity {
        let mut e = Entity::new(eid(id), Category::Container, Parent::World);
        e.door = Some(door);
        e
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::action::eid;

    fn bar() -> WorldState {
        WorldState::from_entities([
            surface("table"),
            surface("shelf"),
            held(vessel("shaker", "table", 500, &[("rum", 100)]), Hand::Left),
            vessel("glass", "table", 200, &[]),
            item("salt", "table"),
        ])
        .unwrap()
    }

    #[test]
    fn pour_moves_liquid() {
        let s = bar();
        let cmd: ActionCommand = "pour shaker glass 60".parse().unwrap();
        let (next, delta) = apply(&s, &cmd).unwrap();
        assert_eq!(next.entities[&eid("glass")].contents["rum"], 60);
        assert_eq!(next.entities[&eid("shaker")].contents["rum"], 40);
        assert!(!delta.changed.is_empty());
        // input untouched
        assert_eq!(s.entities[&eid("shaker")].contents["rum"], 100);
    }

    #[test]
    fn pour_more_than_available_drains_source() {
        let s = WorldState::from_entities([
            surface("table"),
            held(vessel("shaker", "table", 500, &[("rum", 30)]), Hand::Left),
            vessel("glass", "table", 200, &[]),
        ])
        .unwrap();
        let (next, _) = apply(&s, &"pour shaker glass 50".parse().unwrap()).unwrap();
        assert!(next.entities[&eid("shaker")].contents.is_empty());
        assert_eq!(next.entities[&eid("glass")].contents["rum"], 30);
    }

    #[test]
    fn pour_into_full_vessel_fails() {
        let s = WorldState::from_entities([
            surface("table"),
            held(vessel("shaker", "table", 500, &[("rum", 30)]), Hand::Left),
            vessel("glass", "table", 20, &[("gin", 20)]),
        ])
        .unwrap();
        assert_eq!(
            apply(&s, &"pour shaker glass 5".parse().unwrap()).unwrap_err(),
            TransitionError::DestinationFull(eid("glass"))
        );
    }

    #[test]
    fn wait_advances_clock_only() {
        let s = bar();
        let (next, delta) = apply(&s, &ActionCommand::Wait { duration: 5 }).unwrap();
        assert_eq!(next.clock_s, 5);
        assert_eq!(next.entities, s.entities);
        assert_eq!(delta.changed.len(), 1);
        let (same, delta) = apply(&s, &ActionCommand::Wait { duration: 0 }).unwrap();
        assert_eq!(same, s);
        assert!(delta.changed.is_empty());
        assert_eq!(same.digest(), s.digest());
    }

    #[test]
    fn put_frees_hand() {
        let s = WorldState::from_entities([
            surface("table"),
            surface("shelf"),
            held(item("salt", "table"), Hand::Left),
        ])
        .unwrap();
        let (next, _) = apply(&s, &"put salt shelf".parse().unwrap()).unwrap();
        assert_eq!(next.entities[&eid("salt")].parent, Parent::Entity(eid("shelf")));
        assert_eq!(next.held(Hand::Left), None);
        next.validate().unwrap();
    }

    #[test]
    fn get_prefers_cheapest_free_hand() {
        let mut olives = item("olives", "table");
        olives.reach_cost.insert(Hand::Left, Reach::Cost(3.0));
        olives.reach_cost.insert(Hand::Right, Reach::Cost(1.0));
        let s = WorldState::from_entities([surface("table"), olives, item("salt", "table")]).unwrap();
        let (next, _) = apply(&s, &"get olives table".parse().unwrap()).unwrap();
        assert_eq!(next.held(Hand::Right), Some(&eid("olives")));
        // ties go left
        let (next, _) = apply(&s, &"get salt table".parse().unwrap()).unwrap();
        assert_eq!(next.held(Hand::Left), Some(&eid("salt")));
    }

    #[test]
    fn get_from_closed_container_fails_closed() {
        let s = WorldState::from_entities([fridge("fridge", DoorState::Closed), item("milk", "fridge")]).unwrap();
        assert_eq!(
            apply(&s, &"get milk fridge".parse().unwrap()).unwrap_err(),
            TransitionError::Sealed(eid("fridge"))
        );
    }

    #[test]
    fn toggles() {
        let mut micro = Entity::new(eid("microwave"), Category::Device, Parent::World);
        micro.door = Some(DoorState::Closed);
        micro.power = Some(PowerState::Off);
        let s = WorldState::from_entities([micro, surface("table"), bottle("gin", "table", &[("gin", 700)], CapState::Screwed)]).unwrap();
        let (s1, _) = apply(&s, &"open_door microwave".parse().unwrap()).unwrap();
        assert_eq!(s1.entities[&eid("microwave")].door, Some(DoorState::Open));
        assert_eq!(
            apply(&s1, &"open_door microwave".parse().unwrap()).unwrap_err(),
            TransitionError::AlreadyInState(eid("microwave"))
        );
        let (s2, _) = apply(&s1, &"finger_push microwave".parse().unwrap()).unwrap();
        assert_eq!(s2.entities[&eid("microwave")].power, Some(PowerState::On));
        let (s3, _) = apply(&s2, &"unscrew gin".parse().unwrap()).unwrap();
        assert_eq!(s3.entities[&eid("gin")].cap, Some(CapState::Unscrewed));
    }

    #[test]
    fn validation_catches_cycles_and_dangling() {
        let a = on(surface("a"), "b");
        let b = on(surface("b"), "a");
        assert!(matches!(
            WorldState::from_entities([a, b]),
            Err(WorldError::Cycle(_))
        ));
        assert!(matches!(
            WorldState::from_entities([item("x", "nowhere")]),
            Err(WorldError::DanglingParent { .. })
        ));
    }

    #[test]
    fn proportional_split_sums_exactly() {
        let contents: BTreeMap<String, u32> =
            [("a".to_string(), 1), ("b".to_string(), 1), ("c".to_string(), 1)].into();
        let parts = proportional_split(&contents, 2);
        assert_eq!(parts.values().sum::<u32>(), 2);
        assert_eq!(parts, [("a".to_string(), 1), ("b".to_string(), 1)].into());
    }

    #[test]
    fn snapshot_restore_identity() {
        let mut store = SnapshotStore::new();
        let s = bar();
        let d = store.snapshot(&s);
        assert_eq!(store.restore(&d).unwrap(), s);
        let (next, _) = apply(&s, &"pour shaker glass 10".parse().unwrap()).unwrap();
        assert_ne!(next.digest(), d);
        assert!(store.restore(&next.digest()).is_err());
    }

    #[test]
    fn document_round_trip() {
        let s = bar();
        let doc = s.to_document();
        assert_eq!(WorldState::from_document(&doc).unwrap(), s);
    }
}
