//! Feasibility layer: expands commands into hand/grasp primitives, scores
//! them against the abstract geometry and picks the cheapest.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::action::{ActionCommand, EntityId, Hand};
use crate::midlevel::{ErrorKind, PlanError};
use crate::world::{Category, Parent, Reach, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grasp {
    Top,
    Power,
}

impl Grasp {
    pub const ALL: [Grasp; 2] = [Grasp::Top, Grasp::Power];
}

impl fmt::Display for Grasp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grasp::Top => "top",
            Grasp::Power => "power",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Infeasibility {
    OutOfReach,
    ObstacleBlocking(EntityId),
    JointLimit,
    RuntimeHardware,
    HandBusy,
}

impl Infeasibility {
    /// Lower ranks are reported first when every primitive fails.
    pub fn rank(&self) -> u8 {
        match self {
            Infeasibility::OutOfReach => 0,
            Infeasibility::ObstacleBlocking(_) => 1,
            Infeasibility::JointLimit => 2,
            Infeasibility::RuntimeHardware => 3,
            Infeasibility::HandBusy => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cost {
    Finite(f64),
    Infeasible(Infeasibility),
    /// Not evaluated yet.
    Pending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub command: ActionCommand,
    /// `None` only for wait.
    pub hand: Option<Hand>,
    pub grasp: Option<Grasp>,
    pub cost: Cost,
}

impl Primitive {
    pub fn is_feasible(&self) -> bool {
        matches!(self.cost, Cost::Finite(_))
    }

    pub fn reason(&self) -> Option<&Infeasibility> {
        match &self.cost {
            Cost::Infeasible(r) => Some(r),
            _ => None,
        }
    }
}

/// Fault to inject into a matching command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectedFault {
    JointLimit,
    RuntimeHardware,
    ObstacleBlocking(EntityId),
}

impl InjectedFault {
    fn as_reason(&self) -> Infeasibility {
        match self {
            InjectedFault::JointLimit => Infeasibility::JointLimit,
            InjectedFault::RuntimeHardware => Infeasibility::RuntimeHardware,
            InjectedFault::ObstacleBlocking(b) => Infeasibility::ObstacleBlocking(b.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEntry {
    /// Command pattern: whitespace tokens, `*` matches one token, a trailing
    /// `*` matches the rest of the command.
    #[serde(rename = "match")]
    pub pattern: String,
    /// How many matching commands this entry fires on.
    #[serde(default = "one")]
    pub occurrence: u32,
    pub inject: InjectedFault,
}

fn one() -> u32 {
    1
}

impl FaultEntry {
    pub fn matches(&self, cmd: &ActionCommand) -> bool {
        pattern_matches(&self.pattern, &cmd.to_string())
    }
}

pub fn pattern_matches(pattern: &str, text: &str) -> bool {
    let pat: Vec<&str> = pattern.split_whitespace().collect();
    let toks: Vec<&str> = text.split_whitespace().collect();
    for (i, p) in pat.iter().enumerate() {
        if *p == "*" && i + 1 == pat.len() {
            return toks.len() >= i;
        }
        match toks.get(i) {
            Some(t) if *p == "*" || p.eq_ignore_ascii_case(t) => {}
            _ => return false,
        }
    }
    pat.len() == toks.len()
}

/// Fault schedule plus its per-episode firing counters.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FaultInjection {
    pub schedule: Vec<FaultEntry>,
    #[serde(skip)]
    fired: Vec<u32>,
}

impl FaultInjection {
    pub fn new(schedule: Vec<FaultEntry>) -> Self {
        let fired = vec![0; schedule.len()];
        FaultInjection { schedule, fired }
    }

    pub fn none() -> Self {
        Self::default()
    }

    /// Fresh counters for a new episode.
    pub fn reset(&mut self) {
        self.fired = vec![0; self.schedule.len()];
    }

    pub fn fired(&self) -> &[u32] {
        &self.fired
    }

    /// Consumes one firing of the first live entry matching `cmd`.
    pub fn take(&mut self, cmd: &ActionCommand) -> Option<InjectedFault> {
        self.fired.resize(self.schedule.len(), 0);
        for (entry, fired) in self.schedule.iter().zip(self.fired.iter_mut()) {
            if *fired < entry.occurrence && entry.matches(cmd) {
                *fired += 1;
                return Some(entry.inject.clone());
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub winner: Option<Primitive>,
    pub ranked: Vec<Primitive>,
    pub failure: Option<PlanError>,
}

fn eligible_hands(cmd: &ActionCommand, state: &WorldState) -> Vec<Hand> {
    match cmd {
        ActionCommand::Get { hand, .. } => state
            .free_hands()
            .into_iter()
            .filter(|h| hand.is_none_or(|want| want == *h))
            .collect(),
        ActionCommand::Put { object, .. } => state.hand_holding(object).into_iter().collect(),
        ActionCommand::Pour { source, .. } => state.hand_holding(source).into_iter().collect(),
        ActionCommand::Wait { .. } => Vec::new(),
        _ => state.free_hands(),
    }
}

/// Candidate primitives for `cmd`: eligible hands times grasp types.
pub fn expand(cmd: &ActionCommand, state: &WorldState) -> Vec<Primitive> {
    if let ActionCommand::Wait { .. } = cmd {
        return vec![Primitive {
            command: cmd.clone(),
            hand: None,
            grasp: None,
            cost: Cost::Finite(0.0),
        }];
    }
    let mut out = Vec::new();
    for hand in eligible_hands(cmd, state) {
        for grasp in Grasp::ALL {
            out.push(Primitive {
                command: cmd.clone(),
                hand: Some(hand),
                grasp: Some(grasp),
                cost: Cost::Pending,
            });
        }
    }
    out
}

/// Entity whose reach and obstacles matter for `cmd`.
fn reach_target(cmd: &ActionCommand) -> Option<&EntityId> {
    match cmd {
        ActionCommand::Put { destination, .. } | ActionCommand::Pour { destination, .. } => Some(destination),
        other => other.primary_object(),
    }
}

pub fn grasp_penalty(grasp: Grasp, category: Category, is_vessel: bool) -> f64 {
    match grasp {
        Grasp::Top if matches!(category, Category::Ingredient | Category::Block) => 0.0,
        Grasp::Power if is_vessel => 0.0,
        _ => 1.0,
    }
}

fn obstacle(cmd: &ActionCommand, target: &EntityId, state: &WorldState) -> Option<EntityId> {
    let t = state.get(target)?;
    if let Parent::Entity(_) = &t.parent {
        for e in state.entities.values() {
            if e.parent == t.parent && e.id != *target && e.is_blocker_for.contains(target) {
                return Some(e.id.clone());
            }
        }
    }
    // Stacked blocks: the top one has to go first.
    let stacked = matches!(cmd, ActionCommand::Get { .. } | ActionCommand::Put { .. });
    if stacked && t.category == Category::Block {
        if let Some(top) = state.children(target).into_iter().next() {
            return Some(top.clone());
        }
    }
    None
}

/// Scores one primitive. `fault` is the fault injected into this command, if any.
pub fn evaluate(p: &Primitive, state: &WorldState, fault: Option<&InjectedFault>) -> Primitive {
    let mut out = p.clone();
    let Some(hand) = p.hand else {
        out.cost = Cost::Finite(0.0);
        return out;
    };
    if let Some(f) = fault {
        out.cost = Cost::Infeasible(f.as_reason());
        return out;
    }
    let Some(target) = reach_target(&p.command) else {
        out.cost = Cost::Finite(0.0);
        return out;
    };
    if let Some(b) = obstacle(&p.command, target, state) {
        out.cost = Cost::Infeasible(Infeasibility::ObstacleBlocking(b));
        return out;
    }
    let Some(t) = state.get(target) else {
        out.cost = Cost::Infeasible(Infeasibility::OutOfReach);
        return out;
    };
    let reach = match t.reach(hand) {
        Reach::Cost(c) => c,
        Reach::Unreachable => {
            out.cost = Cost::Infeasible(Infeasibility::OutOfReach);
            return out;
        }
    };
    let penalty = match (p.grasp, p.command.primary_object().and_then(|o| state.get(o))) {
        (Some(g), Some(obj)) => grasp_penalty(
            g,
            obj.category,
            obj.category == Category::LiquidVessel || obj.capacity_ml.is_some(),
        ),
        _ => 0.0,
    };
    out.cost = Cost::Finite(reach + penalty);
    out
}

fn rank_key(p: &Primitive) -> (u8, f64, u8, Option<Hand>, Option<Grasp>) {
    match &p.cost {
        Cost::Finite(c) => (0, *c, 0, p.hand, p.grasp),
        Cost::Infeasible(r) => (1, 0.0, r.rank(), p.hand, p.grasp),
        Cost::Pending => (2, 0.0, 0, p.hand, p.grasp),
    }
}

fn compare(a: &Primitive, b: &Primitive) -> Ordering {
    let (ka, kb) = (rank_key(a), rank_key(b));
    ka.0.cmp(&kb.0)
        .then(ka.1.total_cmp(&kb.1))
        .then(ka.2.cmp(&kb.2))
        .then(ka.3.cmp(&kb.3))
        .then(ka.4.cmp(&kb.4))
}

/// Sorts evaluated primitives: feasible by cost, then infeasible by reason;
/// ties go left before right and top before power.
pub fn rank(mut primitives: Vec<Primitive>) -> Vec<Primitive> {
    primitives.sort_by(compare);
    primitives
}

fn hands_text(hands: &[Hand]) -> String {
    match hands {
        [h] => format!("the {h} hand"),
        _ => "both hands".to_string(),
    }
}

fn failure(cmd: &ActionCommand, state: &WorldState, ranked: &[Primitive]) -> PlanError {
    let target = reach_target(cmd).cloned();
    let target_name = target.as_ref().map(|t| t.to_string()).unwrap_or_default();
    let physical = |why: String, how: String| PlanError::unrecoverable(ErrorKind::Physical, cmd, why, how);
    let Some(best) = ranked.first().and_then(|p| p.reason()) else {
        return physical(
            format!("no hand is available to {}", cmd.verb().keyword()),
            "free a hand, then retry".to_string(),
        );
    };
    match best {
        Infeasibility::ObstacleBlocking(b) => physical(
            format!("obstacle {b} is blocking {target_name}"),
            format!("first move {b} somewhere else, then retry"),
        ),
        Infeasibility::OutOfReach => {
            let mut tried: Vec<Hand> = ranked.iter().filter_map(|p| p.hand).collect();
            tried.sort();
            tried.dedup();
            // A hand that was not tried because it is busy might still reach.
            let busy = Hand::BOTH.into_iter().find_map(|h| {
                let held = state.held(h)?;
                let reachable = target
                    .as_ref()
                    .and_then(|t| state.get(t))
                    .is_some_and(|t| t.reach(h).cost().is_some());
                (!tried.contains(&h) && reachable && !cmd.mentions(held)).then(|| (h, held.clone()))
            });
            match busy {
                Some((h, held)) => physical(
                    format!(
                        "{target_name} is out of reach for {} and the {h} hand is holding {held}",
                        hands_text(&tried)
                    ),
                    format!("put {held} somewhere else to free the {h} hand, then retry"),
                ),
                None => physical(
                    format!("{target_name} is out of reach for {}", hands_text(&tried)),
                    "move the object closer or use a different object".to_string(),
                ),
            }
        }
        Infeasibility::JointLimit => physical(
            "joint limit violation".to_string(),
            "try a different approach or object".to_string(),
        ),
        Infeasibility::RuntimeHardware => PlanError::unrecoverable(
            ErrorKind::Runtime,
            cmd,
            "hardware failure during execution",
            "retry the command",
        ),
        Infeasibility::HandBusy => physical(
            "no hand is available for this command".to_string(),
            "free a hand, then retry".to_string(),
        ),
    }
}

/// Expands, evaluates and ranks the primitives for `cmd`, consuming at most
/// one firing from `faults`.
pub fn select(cmd: &ActionCommand, state: &WorldState, faults: &mut FaultInjection) -> FeasibilityVerdict {
    let candidates = expand(cmd, state);
    let fault = if candidates.iter().any(|p| p.hand.is_some()) {
        faults.take(cmd)
    } else {
        None
    };
    verdict(cmd, state, candidates, fault.as_ref())
}

/// Evaluates and ranks a given candidate list. Independent of its order.
pub fn verdict(
    cmd: &ActionCommand,
    state: &WorldState,
    candidates: Vec<Primitive>,
    fault: Option<&InjectedFault>,
) -> FeasibilityVerdict {
    let evaluated = candidates.iter().map(|p| evaluate(p, state, fault)).collect();
    let ranked = rank(evaluated);
    match ranked.first().filter(|p| p.is_feasible()) {
        Some(w) => FeasibilityVerdict {
            winner: Some(w.clone()),
            failure: None,
            ranked,
        },
        None => FeasibilityVerdict {
            winner: None,
            failure: Some(failure(cmd, state, &ranked)),
            ranked,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::eid;
    use crate::world::{fixtures::*, Entity};

    fn cmd(s: &str) -> ActionCommand {
        s.parse().unwrap()
    }

    fn kitchen() -> WorldState {
        let mut olives = item("black_olives", "table");
        olives.reach_cost.insert(Hand::Right, Reach::Unreachable);
        let mut salt = item("salt", "table");
        salt.is_blocker_for.insert(eid("black_olives"));
        WorldState::from_entities([
            surface("table"),
            surface("shelf"),
            olives,
            salt,
            item("mushrooms", "table"),
            held(bottle("sauce_bottle", "table", &[("tomato_sauce", 300)], crate::world::CapState::Unscrewed), Hand::Left),
        ])
        .unwrap()
    }

    #[test]
    fn four_primitives_with_both_hands_free() {
        let s = WorldState::from_entities([surface("shelf"), bottle("b", "shelf", &[], crate::world::CapState::Screwed)]).unwrap();
        assert_eq!(expand(&cmd("get b shelf"), &s).len(), 4);
        assert_eq!(expand(&cmd("get b shelf left"), &s).len(), 2);
        let w = expand(&cmd("wait 2"), &s);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].cost, Cost::Finite(0.0));
    }

    #[test]
    fn bottle_prefers_power_grasp_and_left_on_ties() {
        let s = WorldState::from_entities([surface("shelf"), bottle("b", "shelf", &[], crate::world::CapState::Screwed)]).unwrap();
        let v = select(&cmd("get b shelf"), &s, &mut FaultInjection::none());
        let w = v.winner.unwrap();
        assert_eq!((w.hand, w.grasp, w.cost), (Some(Hand::Left), Some(Grasp::Power), Cost::Finite(1.0)));
    }

    #[test]
    fn obstacle_reported_with_blocker() {
        let s = kitchen();
        let v = select(&cmd("get black_olives table"), &s, &mut FaultInjection::none());
        let f = v.failure.unwrap();
        assert_eq!(f.kind, ErrorKind::Physical);
        assert_eq!(f.why, "obstacle salt is blocking black_olives");
        assert_eq!(f.how, "first move salt somewhere else, then retry");
    }

    #[test]
    fn out_of_reach_mentions_busy_hand() {
        let mut s = kitchen();
        s.entities.get_mut(&eid("salt")).unwrap().parent = Parent::Entity(eid("shelf"));
        let v = select(&cmd("get black_olives table"), &s, &mut FaultInjection::none());
        let f = v.failure.unwrap();
        assert_eq!(
            f.why,
            "black_olives is out of reach for the right hand and the left hand is holding sauce_bottle"
        );
        assert_eq!(f.how, "put sauce_bottle somewhere else to free the left hand, then retry");
    }

    #[test]
    fn unreachable_one_side_uses_the_other() {
        let mut e = item("olives", "table");
        e.reach_cost.insert(Hand::Left, Reach::Unreachable);
        e.reach_cost.insert(Hand::Right, Reach::Cost(2.0));
        let s = WorldState::from_entities([surface("table"), e]).unwrap();
        let v = select(&cmd("get olives table"), &s, &mut FaultInjection::none());
        let w = v.winner.unwrap();
        assert_eq!(w.hand, Some(Hand::Right));
        assert!(matches!(w.cost, Cost::Finite(c) if c >= 2.0));
        assert!(v.ranked.iter().filter(|p| p.hand == Some(Hand::Left)).all(|p| p.reason() == Some(&Infeasibility::OutOfReach)));
    }

    #[test]
    fn fault_fires_once() {
        let s = kitchen();
        let mut faults = FaultInjection::new(vec![FaultEntry {
            pattern: "get *".into(),
            occurrence: 1,
            inject: InjectedFault::JointLimit,
        }]);
        let v = select(&cmd("get mushrooms table"), &s, &mut faults);
        assert!(v.ranked.iter().all(|p| p.reason() == Some(&Infeasibility::JointLimit)));
        assert_eq!(v.failure.unwrap().why, "joint limit violation");
        assert!(select(&cmd("get mushrooms table"), &s, &mut faults).winner.is_some());
    }

    #[test]
    fn patterns() {
        assert!(pattern_matches("get *", "get a b left"));
        assert!(pattern_matches("get * table", "get a table"));
        assert!(!pattern_matches("get * table", "get a shelf"));
        assert!(!pattern_matches("put", "put a b"));
        assert!(pattern_matches("*", "wait 3"));
    }

    #[test]
    fn stacked_block_is_obstructed() {
        let block = |id: &str, p: &str| Entity::new(eid(id), Category::Block, Parent::Entity(eid(p)));
        let s = WorldState::from_entities([surface("table"), block("a", "table"), block("b", "a")]).unwrap();
        let v = select(&cmd("get a table"), &s, &mut FaultInjection::none());
        assert_eq!(v.failure.unwrap().why, "obstacle b is blocking a");
    }

    #[test]
    fn ranking_ignores_input_order() {
        let s = kitchen();
        let c = cmd("get mushrooms table");
        let prims = expand(&c, &s);
        let base = verdict(&c, &s, prims.clone(), None);
        let mut rev = prims;
        rev.reverse();
        assert_eq!(verdict(&c, &s, rev, None), base);
    }
}
