use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionCommand, EntityId, Hand, Plan, PlanOrigin};
use crate::world::{apply_state, DoorState, Parent, WorldState};

use super::check::check;
use super::error::{ErrorKind, PlanError, RepairRule};

/// Rule applications allowed per original command, nested ones included.
pub const MAX_REPAIR_DEPTH: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairContext {
    /// Where displaced objects are parked to free a hand.
    pub staging_surface: EntityId,
    pub max_depth: u32,
}

impl RepairContext {
    pub fn new(staging_surface: EntityId) -> Self {
        RepairContext {
            staging_surface,
            max_depth: MAX_REPAIR_DEPTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepairKind {
    Insert,
    Substitute,
}

/// One edit applied to a plan. `at` indexes the plan the edit was applied to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairAction {
    pub kind: RepairKind,
    pub at: usize,
    pub commands: Vec<ActionCommand>,
    pub rule: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Unrepairable {
    #[error("the error is not marked recoverable")]
    NotRecoverable,
    #[error("step {0} is outside the plan")]
    BadIndex(usize),
    #[error("repair needed more than {0} nested rule applications")]
    DepthExceeded(u32),
    #[error("no hand can be freed without dropping an object the step needs")]
    NoHandToFree,
    #[error("{0} has no place to be taken from")]
    NoSource(EntityId),
    #[error("{0}")]
    Blocked(PlanError),
}

impl Unrepairable {
    /// The error reported upwards when repair gives up on `original`.
    pub fn escalate(self, original: &PlanError) -> PlanError {
        match self {
            Unrepairable::Blocked(inner) => inner.escalated().at(original.step_index),
            other => {
                let mut e = original.clone().escalated();
                e.kind = ErrorKind::Logical;
                e.why = format!("{} and it could not be fixed automatically: {other}", original.why);
                e
            }
        }
    }
}

struct Fix {
    pre: Vec<ActionCommand>,
    main: ActionCommand,
    post: Vec<ActionCommand>,
}

struct Repairer<'a> {
    ctx: &'a RepairContext,
    rest: &'a [ActionCommand],
    applications: u32,
    rules: Vec<&'static str>,
}

/// Whether `id` will be put or poured later without being taken again first.
fn used_later(id: &EntityId, rest: &[ActionCommand]) -> bool {
    for c in rest {
        match c {
            ActionCommand::Get { object, .. } if object == id => return false,
            ActionCommand::Put { object, .. } if object == id => return true,
            ActionCommand::Pour { source, .. } if source == id => return true,
            _ => {}
        }
    }
    false
}

impl Repairer<'_> {
    /// Picks a held object to park so a hand frees up. Objects the command
    /// names are never chosen. Prefers objects not needed later, then the right hand.
    fn displace(&self, state: &WorldState, cmd: &ActionCommand) -> Result<(EntityId, Hand), Unrepairable> {
        let mut candidates: Vec<(bool, u8, EntityId, Hand)> = Hand::BOTH
            .into_iter()
            .filter_map(|h| state.held(h).map(|e| (e.clone(), h)))
            .filter(|(e, _)| !cmd.mentions(e) && *e != self.ctx.staging_surface)
            .map(|(e, h)| (used_later(&e, self.rest), (h == Hand::Left) as u8, e, h))
            .collect();
        candidates.sort();
        candidates
            .into_iter()
            .next()
            .map(|(_, _, e, h)| (e, h))
            .ok_or(Unrepairable::NoHandToFree)
    }

    fn park(&self, state: &WorldState, cmd: &ActionCommand, fix: &mut Fix) -> Result<Hand, Unrepairable> {
        let (obj, hand) = self.displace(state, cmd)?;
        fix.pre.push(ActionCommand::Put {
            object: obj.clone(),
            destination: self.ctx.staging_surface.clone(),
        });
        if used_later(&obj, self.rest) {
            fix.post.push(ActionCommand::Get {
                object: obj,
                source: self.ctx.staging_surface.clone(),
                hand: None,
            });
        }
        Ok(hand)
    }

    fn plan_fix(&self, state: &WorldState, cmd: &ActionCommand, rule: &RepairRule) -> Result<Fix, Unrepairable> {
        let mut fix = Fix {
            pre: Vec::new(),
            main: cmd.clone(),
            post: Vec::new(),
        };
        match rule {
            RepairRule::TakeThenPut { object: o } | RepairRule::TakeThenPour { source: o } => {
                let source = match &state.entities[o].parent {
                    Parent::Entity(p) => p.clone(),
                    _ => return Err(Unrepairable::NoSource(o.clone())),
                };
                let hand = match state.preferred_free_hand(o) {
                    Some(h) => h,
                    None => self.park(state, cmd, &mut fix)?,
                };
                fix.pre.push(ActionCommand::Get {
                    object: o.clone(),
                    source,
                    hand: Some(hand),
                });
            }
            RepairRule::OpenContainerFirst { container } => {
                if state.free_hands().is_empty() {
                    self.park(state, cmd, &mut fix)?;
                }
                let closed_door = state.entities[container].door == Some(DoorState::Closed);
                let object = container.clone();
                fix.pre.push(if closed_door {
                    ActionCommand::OpenDoor { object: object.clone() }
                } else {
                    ActionCommand::Unscrew { object: object.clone() }
                });
                let puts_inside = matches!(cmd, ActionCommand::Put { destination, .. }
                    if destination == container || state.is_ancestor(container, destination));
                if puts_inside {
                    fix.post.insert(
                        0,
                        if closed_door {
                            ActionCommand::CloseDoor { object }
                        } else {
                            ActionCommand::Screw { object }
                        },
                    );
                }
            }
            RepairRule::FreeHand => {
                self.park(state, cmd, &mut fix)?;
            }
            RepairRule::UnscrewBeforePour { vessel } => {
                let opener = if state.entities[vessel].door == Some(DoorState::Closed) {
                    ActionCommand::OpenDoor { object: vessel.clone() }
                } else {
                    ActionCommand::Unscrew { object: vessel.clone() }
                };
                fix.pre.push(opener);
            }
            RepairRule::SwitchHand { to } => {
                if let ActionCommand::Get { object, source, .. } = cmd {
                    fix.main = ActionCommand::Get {
                        object: object.clone(),
                        source: source.clone(),
                        hand: Some(*to),
                    };
                }
            }
        }
        Ok(fix)
    }

    /// Produces a sequence that runs cleanly from `state` and contains `cmd`
    /// (or its substitute), recursing into nested recoverable errors.
    fn settle(&mut self, state: &WorldState, cmd: &ActionCommand) -> Result<(Vec<ActionCommand>, WorldState), Unrepairable> {
        match check(state, cmd) {
            Ok(()) => {
                let next = apply_state(state, cmd).map_err(|e| {
                    Unrepairable::Blocked(PlanError::unrecoverable(
                        ErrorKind::Logical,
                        cmd,
                        e.to_string(),
                        "revise this step",
                    ))
                })?;
                Ok((vec![cmd.clone()], next))
            }
            Err(e) if !e.recoverable => Err(Unrepairable::Blocked(e)),
            Err(e) => {
                self.applications += 1;
                if self.applications > self.ctx.max_depth {
                    return Err(Unrepairable::DepthExceeded(self.ctx.max_depth));
                }
                let rule = e.rule.clone().ok_or(Unrepairable::NotRecoverable)?;
                self.rules.push(rule.name());
                let fix = self.plan_fix(state, cmd, &rule)?;
                let mut out = Vec::new();
                let mut s = state.clone();
                for c in fix.pre.iter().chain(std::iter::once(&fix.main)) {
                    let (cs, next) = self.settle(&s, c)?;
                    out.extend(cs);
                    s = next;
                }
                for c in fix.post {
                    if check(&s, &c).is_ok() {
                        if let Ok(next) = apply_state(&s, &c) {
                            s = next;
                            out.push(c);
                        }
                    }
                }
                Ok((out, s))
            }
        }
    }
}

/// Applies the repair rule behind `err` to the step it names. The returned
/// plan is the input plan with the failing step replaced by a sequence that
/// simulates cleanly from `state`.
pub fn repair(
    state: &WorldState,
    plan: &Plan,
    err: &PlanError,
    ctx: &RepairContext,
) -> Result<(Plan, Vec<RepairAction>), Unrepairable> {
    if !err.recoverable || err.rule.is_none() {
        return Err(Unrepairable::NotRecoverable);
    }
    let at = err.step_index;
    let cmd = plan.steps.get(at).ok_or(Unrepairable::BadIndex(at))?;
    let mut r = Repairer {
        ctx,
        rest: &plan.steps[at + 1..],
        applications: 0,
        rules: Vec::new(),
    };
    let (seq, _) = r.settle(state, cmd)?;
    let rule = r.rules.join("+");

    let actions = match seq.iter().position(|c| c == cmd) {
        Some(i) => {
            let mut actions = Vec::new();
            if i > 0 {
                actions.push(RepairAction {
                    kind: RepairKind::Insert,
                    at,
                    commands: seq[..i].to_vec(),
                    rule: rule.clone(),
                });
            }
            if i + 1 < seq.len() {
                actions.push(RepairAction {
                    kind: RepairKind::Insert,
                    at: at + i + 1,
                    commands: seq[i + 1..].to_vec(),
                    rule: rule.clone(),
                });
            }
            actions
        }
        None => vec![RepairAction {
            kind: RepairKind::Substitute,
            at,
            commands: seq.clone(),
            rule,
        }],
    };

    let mut steps = plan.steps[..at].to_vec();
    steps.extend(seq);
    steps.extend_from_slice(&plan.steps[at + 1..]);
    Ok((
        Plan {
            steps,
            origin: PlanOrigin::MidLevelRepair,
            revision: plan.revision,
        },
        actions,
    ))
}
