//! Deterministic stand-in for the language agents. It knows the scenario's
//! ground truth, perturbs its plans with seeded mistakes and corrects them
//! only when the feedback it receives carries enough information.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::{ActionCommand, EntityId, Hand};
use crate::scenario::{vessel_contents, BlocksGoal, Goal, Recipe, ScenarioSpec};
use crate::world::{apply_state, describe_state, CapState, Category, DoorState, Parent, WorldState};

use super::agents::{AgentRole, BackendError, BackendRequest, PlannerBackend, PlanningContext, TASK_PREFIX};
use super::config::{parse_feedback, FeedbackLevel};
use super::engine::REPORT_PREFIX;

/// Probabilities and switches for the oracle's mistakes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorKnobs {
    /// Chance that an ingredient (or block move) is left out of the plan.
    pub omit_step: f64,
    /// Chance per episode that one object name is misspelled.
    pub wrong_object: f64,
    /// Chance that an open, unscrew or put-back step is skipped.
    pub skip_preconditions: f64,
    /// Chance per episode that a superfluous ingredient is added.
    pub add_extra: f64,
    /// Treat suggestions as if they were absent.
    pub ignore_suggestion: bool,
    /// Emit text that never parses.
    pub always_invalid: bool,
}

impl Default for BehaviorKnobs {
    fn default() -> Self {
        BehaviorKnobs {
            omit_step: 0.0,
            wrong_object: 0.0,
            skip_preconditions: 0.0,
            add_extra: 0.0,
            ignore_suggestion: false,
            always_invalid: false,
        }
    }
}

impl BehaviorKnobs {
    /// Mistake rates used for the ablation runs.
    pub fn ablation() -> Self {
        BehaviorKnobs {
            omit_step: 0.03,
            wrong_object: 0.3,
            skip_preconditions: 0.2,
            add_extra: 0.05,
            ignore_suggestion: false,
            always_invalid: false,
        }
    }

    /// Applies `name=value` pairs separated by commas.
    pub fn apply_overrides(&mut self, spec: &str) -> Result<(), String> {
        for pair in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = pair.split_once('=').ok_or_else(|| format!("expected name=value, got '{pair}'"))?;
            let num = || v.trim().parse::<f64>().map_err(|_| format!("bad number for {k}: {v}"));
            let flag = || v.trim().parse::<bool>().map_err(|_| format!("bad boolean for {k}: {v}"));
            match k.trim() {
                "omit_step" => self.omit_step = num()?,
                "wrong_object" => self.wrong_object = num()?,
                "skip_preconditions" => self.skip_preconditions = num()?,
                "add_extra" => self.add_extra = num()?,
                "ignore_suggestion" => self.ignore_suggestion = flag()?,
                "always_invalid" => self.always_invalid = flag()?,
                other => return Err(format!("unknown knob {other}")),
            }
        }
        Ok(())
    }
}

impl FromStr for BehaviorKnobs {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut k = BehaviorKnobs::default();
        k.apply_overrides(s)?;
        Ok(k)
    }
}

/// Uniform number in [0, 1) derived from `seed` and `key`.
pub fn draw(seed: u64, key: &str) -> f64 {
    let hash = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(key.as_bytes())
        .finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&hash[..8]);
    (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64
}

/// A plausible typo that still resembles the original name.
pub fn misspell(name: &EntityId) -> EntityId {
    let s = name.as_str();
    let mut chars: Vec<char> = s.chars().collect();
    if chars.len() > 3 {
        chars.remove(chars.len() / 2);
    } else {
        chars.push('x');
    }
    let out: String = chars.into_iter().collect();
    EntityId::new(out).unwrap_or_else(|_| EntityId::new(format!("{s}x")).expect("suffixing keeps names valid"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum DefectClass {
    WrongName,
    SkipOpen,
    SkipUnscrew,
    SkipStow,
}

impl DefectClass {
    fn of(key: &str) -> DefectClass {
        match key.split(':').next() {
            Some("open") => DefectClass::SkipOpen,
            Some("unscrew") => DefectClass::SkipUnscrew,
            Some("stow") => DefectClass::SkipStow,
            _ => DefectClass::WrongName,
        }
    }

    fn required(self) -> FeedbackLevel {
        match self {
            DefectClass::WrongName => FeedbackLevel::WhatWhyHow,
            _ => FeedbackLevel::WhatWhy,
        }
    }
}

/// What the oracle has learned from the feedback so far.
#[derive(Debug, Default)]
struct Knowledge {
    fixed: BTreeSet<String>,
    fixed_classes: BTreeSet<DefectClass>,
    deleted_tasks: BTreeSet<String>,
    blame: BTreeMap<String, u32>,
    move_blockers: Vec<(EntityId, EntityId)>,
    free_hand_for: Vec<(EntityId, Hand)>,
    goal_feedbacks: u32,
}

/// One unit of work in the oracle's plan.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Task {
    Solid(EntityId),
    Liquid(String),
    Move(EntityId),
}

impl Task {
    fn key(&self) -> String {
        match self {
            Task::Solid(s) => format!("solid:{s}"),
            Task::Liquid(l) => format!("liquid:{l}"),
            Task::Move(b) => format!("move:{b}"),
        }
    }
}

pub struct ScriptedBackend {
    scenario: ScenarioSpec,
    knobs: BehaviorKnobs,
}

struct Episode<'a> {
    oracle: &'a ScriptedBackend,
    ctx: &'a PlanningContext,
    goal: Goal<'a>,
    k: Knowledge,
    /// Mandatory plus extra tasks after omissions, in plan order.
    tasks: Vec<Task>,
    /// Task whose get step carries a misspelled name, if any.
    wrong_target: Option<String>,
}

impl ScriptedBackend {
    pub fn new(scenario: ScenarioSpec, knobs: BehaviorKnobs) -> Self {
        ScriptedBackend { scenario, knobs }
    }

    pub fn knobs(&self) -> &BehaviorKnobs {
        &self.knobs
    }

    /// The plan the action planner would emit for `ctx`.
    pub fn plan_for(&self, ctx: &PlanningContext) -> Vec<ActionCommand> {
        let Ok(goal) = self.scenario.resolve_goal(&ctx.request) else {
            return Vec::new();
        };
        let mut ep = Episode::new(self, ctx, goal);
        ep.fold_feedback();
        ep.compile()
    }

    fn alex(&self, req: &BackendRequest<'_>) -> String {
        let last = req
            .conversation
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or("");
        if let Some(report) = last.strip_prefix(REPORT_PREFIX) {
            let report = report.trim();
            return if report.starts_with("failed") {
                format!("Sorry, I could not finish the task ({}).", report.trim_start_matches("failed: "))
            } else {
                format!("All set, {report}.")
            };
        }
        let request = last.lines().next().unwrap_or("").trim();
        if is_question(request) {
            answer_question(request, &req.context.state)
        } else if is_physical(request) || matches!(self.scenario.resolve_goal(request), Ok(Goal::Recipe(_))) {
            format!("{TASK_PREFIX} {request}")
        } else {
            "I can answer questions about the scene or carry out kitchen tasks.".to_string()
        }
    }

    fn travi(&self, ctx: &PlanningContext) -> String {
        let plan = self.plan_for(ctx);
        let mut objects: BTreeSet<String> = BTreeSet::new();
        for c in &plan {
            objects.extend(c.entities().into_iter().map(|e| e.to_string()));
        }
        let steps: Vec<String> = plan.iter().map(|c| c.to_string()).collect();
        format!(
            "Goal: {}\nObjects: {}\nState: {}\nRemaining steps: {}\nFeedback: {}",
            ctx.request,
            objects.into_iter().collect::<Vec<_>>().join(", "),
            describe_state(&ctx.state),
            if steps.is_empty() { "none".to_string() } else { steps.join("; ") },
            ctx.feedback.last().map(String::as_str).unwrap_or("none"),
        )
    }

    fn ropa(&self, ctx: &PlanningContext) -> String {
        if self.knobs.always_invalid {
            return "make the drink now".to_string();
        }
        self.plan_for(ctx)
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl PlannerBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn respond(&self, req: &BackendRequest<'_>) -> Result<String, BackendError> {
        Ok(match req.role {
            AgentRole::Alex => self.alex(req),
            AgentRole::Travi => self.travi(req.context),
            AgentRole::Ropa => self.ropa(req.context),
        })
    }
}

const QUESTION_OPENERS: [&str; 12] = [
    "what", "how", "where", "which", "who", "is", "are", "do", "does", "did", "when", "why",
];
const POLITE_OPENERS: [&str; 4] = ["can you", "could you", "would you", "will you"];
const PHYSICAL_WORDS: [&str; 14] = [
    "make", "prepare", "mix", "serve", "stack", "rearrange", "put", "get", "bring", "pour", "build", "place",
    "move", "open",
];

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '_')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn is_question(request: &str) -> bool {
    let lower = request.trim().to_lowercase();
    if POLITE_OPENERS.iter().any(|p| lower.starts_with(p)) {
        return false;
    }
    lower.ends_with('?') || words(&lower).first().is_some_and(|w| QUESTION_OPENERS.contains(&w.as_str()))
}

pub fn is_physical(request: &str) -> bool {
    words(request).iter().any(|w| PHYSICAL_WORDS.contains(&w.as_str()))
}

fn answer_question(question: &str, state: &WorldState) -> String {
    let w = words(question);
    let place = state
        .entities
        .keys()
        .filter(|id| w.iter().any(|x| x == id.as_str()))
        .max_by_key(|id| id.as_str().len())
        .cloned();
    let inside: Vec<&EntityId> = match &place {
        Some(p) => state.children(p),
        None => state.entities.keys().collect(),
    };
    let where_ = place.as_ref().map(|p| format!("on the {p}")).unwrap_or_else(|| "in the scene".to_string());
    if w.first().is_some_and(|x| x == "how") && w.get(1).is_some_and(|x| x == "many") {
        let noun = w.get(2).cloned().unwrap_or_default();
        let forms = [noun.clone(), noun.trim_end_matches('s').to_string(), noun.trim_end_matches("es").to_string()];
        let n = inside
            .iter()
            .filter(|id| {
                let e = &state.entities[*id];
                let kind = e.kind.as_deref().unwrap_or("");
                forms.iter().any(|f| !f.is_empty() && (id.as_str() == f.as_str() || kind == f))
            })
            .count();
        return format!("There {} {n} {where_}.", if n == 1 { "is" } else { "are" });
    }
    let Some(place) = place else {
        return describe_state(state);
    };
    if inside.is_empty() {
        format!("There is nothing on the {place}.")
    } else {
        let names: Vec<String> = inside.iter().map(|e| e.to_string()).collect();
        format!("The {place} holds {}.", names.join(", "))
    }
}

impl<'a> Episode<'a> {
    fn new(oracle: &'a ScriptedBackend, ctx: &'a PlanningContext, goal: Goal<'a>) -> Self {
        let mut ep = Episode {
            oracle,
            ctx,
            goal,
            k: Knowledge::default(),
            tasks: Vec::new(),
            wrong_target: None,
        };
        ep.tasks = ep.initial_tasks();
        ep
    }

    fn draw(&self, key: &str) -> f64 {
        draw(self.ctx.seed, &format!("{}|{key}", self.ctx.request))
    }

    fn knobs(&self) -> &BehaviorKnobs {
        &self.oracle.knobs
    }

    fn scenario(&self) -> &ScenarioSpec {
        &self.oracle.scenario
    }

    fn initial_tasks(&mut self) -> Vec<Task> {
        let omit = self.knobs().omit_step;
        match self.goal {
            Goal::Recipe(r) => {
                let mut tasks: Vec<Task> = r
                    .mandatory_solids
                    .iter()
                    .map(|s| Task::Solid(s.clone()))
                    .chain(r.mandatory_liquids.iter().map(|l| Task::Liquid(l.clone())))
                    .filter(|t| self.draw(&format!("omit:{}", t.key())) >= omit)
                    .collect();
                if self.draw("extra") < self.knobs().add_extra {
                    let allowed = r.allowed();
                    let candidates: Vec<&EntityId> = self
                        .scenario()
                        .initial_state
                        .entities
                        .values()
                        .filter(|e| e.category == Category::Ingredient && e.graspable && !allowed.contains(e.id.as_str()))
                        .map(|e| &e.id)
                        .collect();
                    if !candidates.is_empty() {
                        let i = (self.draw("extra-pick") * candidates.len() as f64) as usize;
                        tasks.push(Task::Solid(candidates[i.min(candidates.len() - 1)].clone()));
                    }
                }
                if !tasks.is_empty() && self.draw("wrong") < self.knobs().wrong_object {
                    let i = (self.draw("wrong-pick") * tasks.len() as f64) as usize;
                    self.wrong_target = Some(tasks[i.min(tasks.len() - 1)].key());
                }
                tasks
            }
            Goal::Blocks(g) => {
                let tasks: Vec<Task> = g.blocks().map(|b| Task::Move(b.clone())).collect();
                if !tasks.is_empty() && self.draw("wrong") < self.knobs().wrong_object {
                    let i = (self.draw("wrong-pick") * tasks.len() as f64) as usize;
                    self.wrong_target = Some(tasks[i.min(tasks.len() - 1)].key());
                }
                tasks
            }
        }
    }

    fn class_fixed(&self, key: &str) -> bool {
        self.k.fixed.contains(key) || self.k.fixed_classes.contains(&DefectClass::of(key))
    }

    /// Whether the precondition step `key` (e.g. `unscrew:gin_bottle`) is skipped.
    fn skips(&self, key: &str) -> bool {
        self.draw(&format!("skip:{key}")) < self.knobs().skip_preconditions && !self.class_fixed(key)
    }

    fn wrong_active(&self) -> Option<&str> {
        let t = self.wrong_target.as_deref()?;
        (!self.class_fixed("wrong") && !self.k.deleted_tasks.contains(t)).then_some(t)
    }

    /// Task a command works on, if any.
    fn task_of(&self, cmd: &ActionCommand) -> Option<String> {
        let state = &self.ctx.state;
        for e in cmd.entities() {
            for t in &self.tasks {
                match t {
                    Task::Solid(s) | Task::Move(s) if s == e => return Some(t.key()),
                    Task::Liquid(l) => {
                        if state.get(e).is_some_and(|x| x.kind.as_deref() != Some(self.vessel_kind()) && x.contents.contains_key(l)) {
                            return Some(t.key());
                        }
                    }
                    _ => {}
                }
            }
        }
        None
    }

    fn vessel_kind(&self) -> &str {
        match self.goal {
            Goal::Recipe(r) => &r.vessel_category,
            Goal::Blocks(_) => "",
        }
    }

    /// Which of the oracle's own mistakes a failed command points to.
    fn responsible_defect(&self, cmd: Option<&ActionCommand>, what: &str) -> Option<String> {
        if let Some(target) = self.wrong_active() {
            let wrong_name = self.wrong_name_for(target);
            if wrong_name.is_some_and(|n| what.split_whitespace().any(|t| t == n.as_str())) {
                return Some("wrong".to_string());
            }
        }
        let cmd = cmd?;
        if let ActionCommand::Pour { source, .. } = cmd {
            let key = format!("unscrew:{source}");
            if self.skips(&key) {
                return Some(key);
            }
        }
        for e in cmd.entities() {
            let key = format!("open:{e}");
            if self.skips(&key) {
                return Some(key);
            }
        }
        let needs_hand = !matches!(cmd, ActionCommand::Put { .. } | ActionCommand::Pour { .. } | ActionCommand::Wait { .. });
        if needs_hand {
            let state = &self.scenario().initial_state;
            let stow = state
                .entities
                .values()
                .filter(|e| e.cap.is_some() || e.category == Category::LiquidVessel)
                .map(|e| format!("stow:{}", e.id))
                .find(|k| self.skips(k));
            if stow.is_some() {
                return stow;
            }
        }
        None
    }

    fn wrong_name_for(&self, task_key: &str) -> Option<EntityId> {
        let t = self.tasks.iter().find(|t| t.key() == task_key)?;
        let obj = match t {
            Task::Solid(s) | Task::Move(s) => s.clone(),
            Task::Liquid(l) => self.bottle_for(l, &self.ctx.state)?,
        };
        Some(misspell(&obj))
    }

    fn fold_feedback(&mut self) {
        let ignore_how = self.knobs().ignore_suggestion;
        for (i, text) in self.ctx.feedback.iter().enumerate() {
            let Some(fb) = parse_feedback(text) else { continue };
            let mut level = fb.level();
            if ignore_how && level == FeedbackLevel::WhatWhyHow {
                level = FeedbackLevel::WhatWhy;
            }
            if fb.what.starts_with("the plan finished") {
                self.k.goal_feedbacks += 1;
                continue;
            }
            let cmd: Option<ActionCommand> = fb.what.parse().ok();
            if let Some(key) = self.responsible_defect(cmd.as_ref(), &fb.what) {
                let class = DefectClass::of(&key);
                if level >= class.required() {
                    self.k.fixed.insert(key);
                    self.k.fixed_classes.insert(class);
                } else {
                    let n = self.bump(&key);
                    if n >= 3 {
                        if let Some(t) = self.failing_task(cmd.as_ref(), &key) {
                            self.k.deleted_tasks.insert(t);
                        }
                    } else if self.draw(&format!("blind:{key}:{n}")) < 0.5 {
                        self.k.fixed.insert(key);
                    }
                }
                continue;
            }
            let Some(cmd) = cmd else { continue };
            self.environmental(i, &cmd, fb.why.as_deref(), level);
        }
    }

    fn bump(&mut self, key: &str) -> u32 {
        let n = self.k.blame.entry(key.to_string()).or_insert(0);
        *n += 1;
        *n
    }

    fn failing_task(&self, cmd: Option<&ActionCommand>, key: &str) -> Option<String> {
        if key == "wrong" {
            return self.wrong_target.clone();
        }
        cmd.and_then(|c| self.task_of(c))
    }

    /// Errors caused by the world rather than by the oracle's own mistakes.
    fn environmental(&mut self, _index: usize, cmd: &ActionCommand, why: Option<&str>, level: FeedbackLevel) {
        let key = format!("env:{cmd}");
        if let Some(why) = why {
            if why == "joint limit violation" || why.starts_with("hardware failure") {
                return;
            }
            if let Some(rest) = why.strip_prefix("obstacle ") {
                if let Some((blocker, target)) = rest.split_once(" is blocking ") {
                    if let (Ok(b), Ok(t)) = (EntityId::new(blocker), EntityId::new(target)) {
                        self.k.move_blockers.push((b, t));
                        return;
                    }
                }
            }
            if why.contains(" is out of reach for both hands") {
                if let Some(t) = self.task_of(cmd) {
                    self.k.deleted_tasks.insert(t);
                }
                return;
            }
            if let Some((target, rest)) = why.split_once(" is out of reach for ") {
                if level >= FeedbackLevel::WhatWhyHow {
                    let hand = if rest.contains("the left hand is holding") {
                        Some(Hand::Left)
                    } else if rest.contains("the right hand is holding") {
                        Some(Hand::Right)
                    } else {
                        None
                    };
                    if let (Some(h), Ok(t)) = (hand, EntityId::new(target)) {
                        self.k.free_hand_for.push((t, h));
                        return;
                    }
                }
            }
        }
        let n = self.bump(&key);
        if n >= 3 {
            if let Some(t) = self.task_of(cmd) {
                self.k.deleted_tasks.insert(t);
            }
        }
    }

    fn compile(&self) -> Vec<ActionCommand> {
        match self.goal {
            Goal::Recipe(r) => Compiler::new(self).recipe(r),
            Goal::Blocks(g) => Compiler::new(self).blocks(g),
        }
    }

    /// Bottle to pour `liquid` from: the fullest non-vessel holder, ties by name.
    fn bottle_for(&self, liquid: &str, state: &WorldState) -> Option<EntityId> {
        let kind = self.vessel_kind();
        state
            .entities
            .values()
            .filter(|e| e.kind.as_deref() != Some(kind) && e.contents.get(liquid).is_some_and(|ml| *ml > 0))
            .max_by(|a, b| a.contents[liquid].cmp(&b.contents[liquid]).then(b.id.cmp(&a.id)))
            .map(|e| e.id.clone())
    }
}

/// Builds a plan from the current state while simulating it, so later steps
/// see the effects of earlier ones.
struct Compiler<'e, 'a> {
    ep: &'e Episode<'a>,
    sim: WorldState,
    steps: Vec<ActionCommand>,
}

impl<'e, 'a> Compiler<'e, 'a> {
    fn new(ep: &'e Episode<'a>) -> Self {
        Compiler {
            ep,
            sim: ep.ctx.state.clone(),
            steps: Vec::new(),
        }
    }

    fn emit(&mut self, cmd: ActionCommand) {
        if let Ok(next) = apply_state(&self.sim, &cmd) {
            self.sim = next;
        }
        self.steps.push(cmd);
    }

    fn staging(&self) -> EntityId {
        self.ep.scenario().staging_surface.clone()
    }

    /// Where an object is put back: its original place, or the staging surface.
    fn home(&self, id: &EntityId) -> EntityId {
        match self.ep.scenario().initial_state.get(id).map(|e| &e.parent) {
            Some(Parent::Entity(p)) => p.clone(),
            _ => self.staging(),
        }
    }

    fn open_chain(&mut self, id: &EntityId) {
        let mut sealed: Vec<EntityId> = self
            .sim
            .ancestors(id)
            .into_iter()
            .filter(|a| self.sim.entities[*a].door == Some(DoorState::Closed))
            .cloned()
            .collect();
        sealed.reverse();
        for c in sealed {
            if self.ep.skips(&format!("open:{c}")) {
                continue;
            }
            self.ensure_free_hand(&[]);
            self.emit(ActionCommand::OpenDoor { object: c });
        }
    }

    fn stow(&mut self, id: &EntityId) {
        let home = self.home(id);
        self.open_chain(&home);
        self.emit(ActionCommand::Put {
            object: id.clone(),
            destination: home,
        });
    }

    /// Puts something down when both hands are busy. Objects in `keep` and
    /// objects the oracle forgets about stay in hand.
    fn ensure_free_hand(&mut self, keep: &[&EntityId]) {
        if !self.sim.free_hands().is_empty() {
            return;
        }
        let candidate = Hand::BOTH.into_iter().filter_map(|h| self.sim.held(h).cloned()).find(|e| {
            !keep.contains(&e) && !self.ep.skips(&format!("stow:{e}"))
        });
        if let Some(e) = candidate {
            self.stow(&e);
        }
    }

    fn name(&self, task: &Task, actual: &EntityId) -> EntityId {
        if self.ep.wrong_active() == Some(task.key().as_str()) {
            misspell(actual)
        } else {
            actual.clone()
        }
    }

    /// Emits the get of `obj`, honouring learned blocker and hand rules.
    fn fetch(&mut self, task: &Task, obj: &EntityId) {
        let Some(Parent::Entity(source)) = self.sim.get(obj).map(|e| e.parent.clone()) else {
            return;
        };
        self.open_chain(obj);
        for (blocker, target) in self.ep.k.move_blockers.clone() {
            let shares = self.sim.get(&blocker).map(|b| &b.parent) == Some(&Parent::Entity(source.clone()));
            if target == *obj && shares {
                self.ensure_free_hand(&[obj]);
                self.emit(ActionCommand::Get {
                    object: blocker.clone(),
                    source: source.clone(),
                    hand: None,
                });
                self.emit(ActionCommand::Put {
                    object: blocker,
                    destination: self.staging(),
                });
            }
        }
        let mut hand = None;
        if let Some((_, h)) = self.ep.k.free_hand_for.iter().rev().find(|(t, _)| t == obj) {
            if let Some(held) = self.sim.held(*h).cloned() {
                self.emit(ActionCommand::Put {
                    object: held,
                    destination: self.staging(),
                });
            }
            hand = Some(*h);
        }
        if hand.is_none() {
            self.ensure_free_hand(&[obj]);
        }
        self.emit(ActionCommand::Get {
            object: self.name(task, obj),
            source,
            hand,
        });
    }

    fn recipe(mut self, recipe: &Recipe) -> Vec<ActionCommand> {
        let scenario = self.ep.scenario();
        let Some(serving) = scenario.serving_location.clone() else {
            return Vec::new();
        };
        let vessel = self
            .sim
            .entities
            .values()
            .find(|e| e.kind.as_deref() == Some(recipe.vessel_category.as_str()))
            .map(|e| e.id.clone());
        let Some(vessel) = vessel else {
            return Vec::new();
        };
        let done = vessel_contents(&self.sim, &vessel);
        let remaining: Vec<Task> = self
            .ep
            .tasks
            .iter()
            .filter(|t| !self.ep.k.deleted_tasks.contains(&t.key()))
            .filter(|t| match t {
                Task::Solid(s) => !done.contains(s.as_str()),
                Task::Liquid(l) => !done.contains(l),
                Task::Move(_) => false,
            })
            .cloned()
            .collect();
        let bottles: Vec<EntityId> = remaining
            .iter()
            .filter_map(|t| match t {
                Task::Liquid(l) => self.ep.bottle_for(l, &self.sim),
                _ => None,
            })
            .collect();
        let solids: Vec<EntityId> = remaining
            .iter()
            .filter_map(|t| match t {
                Task::Solid(s) => Some(s.clone()),
                _ => None,
            })
            .collect();

        for h in Hand::BOTH {
            if let Some(held) = self.sim.held(h).cloned() {
                let needed = held == vessel || bottles.contains(&held) || solids.contains(&held);
                if !needed && !self.ep.skips(&format!("stow:{held}")) {
                    self.stow(&held);
                }
            }
        }

        for task in &remaining {
            match task {
                Task::Solid(s) => {
                    if self.sim.hand_holding(s).is_none() {
                        self.fetch(task, s);
                    }
                    self.emit(ActionCommand::Put {
                        object: s.clone(),
                        destination: vessel.clone(),
                    });
                }
                Task::Liquid(l) => {
                    let Some(bottle) = self.ep.bottle_for(l, &self.sim) else { continue };
                    if self.sim.hand_holding(&bottle).is_none() {
                        self.fetch(task, &bottle);
                    }
                    let was_screwed = self.sim.entities[&bottle].cap == Some(CapState::Screwed);
                    if was_screwed && !self.ep.skips(&format!("unscrew:{bottle}")) {
                        self.ensure_free_hand(&[&bottle]);
                        self.emit(ActionCommand::Unscrew { object: bottle.clone() });
                    }
                    self.emit(ActionCommand::Pour {
                        source: bottle.clone(),
                        destination: vessel.clone(),
                        amount: 50,
                    });
                    if was_screwed {
                        self.ensure_free_hand(&[&bottle]);
                        self.emit(ActionCommand::Screw { object: bottle.clone() });
                    }
                    if !self.ep.skips(&format!("stow:{bottle}")) {
                        self.stow(&bottle);
                    }
                }
                Task::Move(_) => {}
            }
        }

        let initial = &scenario.initial_state;
        let reopened: Vec<EntityId> = self
            .sim
            .entities
            .values()
            .filter(|e| {
                e.door == Some(DoorState::Open)
                    && initial.get(&e.id).is_some_and(|i| i.door == Some(DoorState::Closed))
            })
            .map(|e| e.id.clone())
            .collect();
        for c in reopened {
            self.ensure_free_hand(&[]);
            self.emit(ActionCommand::CloseDoor { object: c });
        }

        let v = &self.sim.entities[&vessel];
        if v.graspable && v.parent != Parent::Entity(serving.clone()) {
            if self.sim.hand_holding(&vessel).is_none() {
                if let Parent::Entity(src) = v.parent.clone() {
                    self.ensure_free_hand(&[&vessel]);
                    self.emit(ActionCommand::Get {
                        object: vessel.clone(),
                        source: src,
                        hand: None,
                    });
                }
            }
            self.emit(ActionCommand::Put {
                object: vessel,
                destination: serving,
            });
        }
        self.steps
    }

    fn well_placed(&self, goal: &BlocksGoal, table: &EntityId, b: &EntityId) -> bool {
        let mut cur = b.clone();
        loop {
            let Some(e) = self.sim.get(&cur) else { return false };
            match goal.support(&cur) {
                Some(None) => return e.parent == Parent::Entity(table.clone()),
                Some(Some(below)) => {
                    if e.parent != Parent::Entity(below.clone()) {
                        return false;
                    }
                    cur = below.clone();
                }
                None => return false,
            }
        }
    }

    fn omitted_move(&self, b: &EntityId) -> bool {
        let key = format!("omit:move:{b}:{}", self.ep.k.goal_feedbacks);
        self.ep.draw(&key) < self.ep.knobs().omit_step
    }

    fn move_block(&mut self, b: &EntityId, dest: &EntityId) {
        let task = Task::Move(b.clone());
        if self.ep.k.deleted_tasks.contains(&task.key()) || self.omitted_move(b) {
            return;
        }
        for h in Hand::BOTH {
            if let Some(held) = self.sim.held(h).cloned() {
                if held != *b {
                    self.emit(ActionCommand::Put {
                        object: held,
                        destination: self.staging(),
                    });
                }
            }
        }
        if self.sim.hand_holding(b).is_none() {
            self.fetch(&task, b);
        }
        self.emit(ActionCommand::Put {
            object: b.clone(),
            destination: dest.clone(),
        });
    }

    fn blocks(mut self, goal: &BlocksGoal) -> Vec<ActionCommand> {
        let table = self.staging();
        // Clear away everything that is not already in its final position.
        let mut guard = 0;
        loop {
            guard += 1;
            let next = goal.blocks().find(|b| {
                let e = &self.sim.entities[*b];
                let on_table = e.parent == Parent::Entity(table.clone());
                !on_table && !self.well_placed(goal, &table, b) && self.sim.children(b).is_empty()
            });
            let Some(b) = next.cloned() else { break };
            let before = self.sim.clone();
            self.move_block(&b, &table);
            if self.sim == before || guard > 64 {
                break;
            }
        }
        for stack in &goal.stacks {
            for pair in stack.windows(2) {
                let (below, b) = (&pair[0], &pair[1]);
                if !self.well_placed(goal, &table, b) {
                    self.move_block(b, below);
                }
            }
        }
        self.steps
    }
}
