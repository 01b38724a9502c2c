//! Scenario files: initial world, ground truth (recipes or a blocks goal),
//! fault schedule, and the goal check used for correctness.

mod blocks;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{EntityId, Hand, Verb};
use crate::lowlevel::{FaultEntry, FaultInjection, InjectedFault};
use crate::world::{Category, Entity, Parent, WorldState};

pub use blocks::{generate_blocks, BLOCK_COLORS};

pub const SCHEMA_VERSION: u32 = 1;

pub const BARMAN: &str = include_str!("../../scenarios/barman.toml");
pub const PIZZA: &str = include_str!("../../scenarios/pizza.toml");
pub const BLOCKS: &str = include_str!("../../scenarios/blocks.toml");

/// Names accepted wherever a scenario path is expected.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "barman" => Some(BARMAN),
        "pizza" => Some(PIZZA),
        "blocks" => Some(BLOCKS),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recipe {
    pub name: String,
    /// Entity ids that must end up in the vessel.
    #[serde(default, rename = "solids")]
    pub mandatory_solids: Vec<EntityId>,
    /// Substance names that must be poured into the vessel.
    #[serde(default, rename = "liquids")]
    pub mandatory_liquids: Vec<String>,
    #[serde(default)]
    pub optional: Vec<String>,
    /// Entity kind of the serving vessel.
    #[serde(rename = "vessel")]
    pub vessel_category: String,
}

impl Recipe {
    pub fn mandatory(&self) -> BTreeSet<String> {
        self.mandatory_solids
            .iter()
            .map(|e| e.to_string())
            .chain(self.mandatory_liquids.iter().cloned())
            .collect()
    }

    pub fn allowed(&self) -> BTreeSet<String> {
        let mut all = self.mandatory();
        all.extend(self.optional.iter().cloned());
        all
    }
}

/// Goal configuration: stacks listed bottom to top.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlocksGoal {
    pub stacks: Vec<Vec<EntityId>>,
}

impl BlocksGoal {
    /// What each block should rest on (`None` means the table).
    pub fn support(&self, block: &EntityId) -> Option<Option<&EntityId>> {
        for stack in &self.stacks {
            if let Some(i) = stack.iter().position(|b| b == block) {
                return Some(if i == 0 { None } else { Some(&stack[i - 1]) });
            }
        }
        None
    }

    pub fn blocks(&self) -> impl Iterator<Item = &EntityId> {
        self.stacks.iter().flatten()
    }

    /// "red_block is on green_block and green_block is on the table".
    pub fn describe(&self, table: &EntityId) -> String {
        let mut parts = Vec::new();
        for stack in &self.stacks {
            for (i, b) in stack.iter().enumerate().rev() {
                if i == 0 {
                    parts.push(format!("{b} is on the {table}"));
                } else {
                    parts.push(format!("{b} is on {}", stack[i - 1]));
                }
            }
        }
        parts.join(" and ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GroundTruth {
    Recipes(Vec<Recipe>),
    Blocks(BlocksGoal),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub initial_state: WorldState,
    pub staging_surface: EntityId,
    pub serving_location: Option<EntityId>,
    pub ground_truth: GroundTruth,
    pub faults: Vec<FaultEntry>,
    pub request_template: String,
    /// Whether a completed plan that misses the goal is fed back as an error.
    pub goal_backprompt: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct ScenarioError {
    pub path: String,
    pub message: String,
}

fn err(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no goal matches the request '{0}'")]
pub struct UnknownGoal(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GoalVerdict {
    Met,
    NotMet(String),
}

impl GoalVerdict {
    pub fn is_met(&self) -> bool {
        *self == GoalVerdict::Met
    }
}

impl fmt::Display for GoalVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GoalVerdict::Met => f.write_str("met"),
            GoalVerdict::NotMet(r) => write!(f, "not met: {r}"),
        }
    }
}

/// A resolved goal for one request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Goal<'a> {
    Recipe(&'a Recipe),
    Blocks(&'a BlocksGoal),
}

#[derive(Serialize, Deserialize)]
struct Document {
    schema_version: u32,
    name: String,
    staging_surface: EntityId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    serving_location: Option<EntityId>,
    request_template: String,
    #[serde(default)]
    goal_backprompt: bool,
    entities: Vec<Entity>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    recipes: Vec<Recipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blocks_goal: Option<BlocksGoal>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    faults: Vec<FaultEntry>,
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<ScenarioSpec, ScenarioError> {
    let doc: Document = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let path = match e.span() {
            Some(span) => format!("line {}", text[..span.start].lines().count().max(1)),
            None => "document".to_string(),
        };
        err(path, msg)
    })?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(err(
            "schema_version",
            format!("unsupported version {} (expected {SCHEMA_VERSION})", doc.schema_version),
        ));
    }
    let initial_state = WorldState::from_entities(doc.entities).map_err(|e| err("entities", e.to_string()))?;
    let ground_truth = match (doc.recipes.is_empty(), doc.blocks_goal) {
        (false, None) => GroundTruth::Recipes(doc.recipes),
        (true, Some(goal)) => GroundTruth::Blocks(goal),
        (false, Some(_)) => return Err(err("recipes", "a scenario has either recipes or blocks_goal, not both")),
        (true, None) => return Err(err("recipes", "a scenario needs recipes or blocks_goal")),
    };
    let spec = ScenarioSpec {
        name: doc.name,
        initial_state,
        staging_surface: doc.staging_surface,
        serving_location: doc.serving_location,
        ground_truth,
        faults: doc.faults,
        request_template: doc.request_template,
        goal_backprompt: doc.goal_backprompt,
    };
    spec.validate()?;
    Ok(spec)
}

impl ScenarioSpec {
    pub fn bundled(name: &str) -> Option<ScenarioSpec> {
        bundled(name).map(|t| load_scenario(t).expect("bundled scenario is valid"))
    }

    /// Serializes back to the document format.
    pub fn to_document(&self) -> String {
        let (recipes, blocks_goal) = match &self.ground_truth {
            GroundTruth::Recipes(r) => (r.clone(), None),
            GroundTruth::Blocks(b) => (Vec::new(), Some(b.clone())),
        };
        let doc = Document {
            schema_version: SCHEMA_VERSION,
            name: self.name.clone(),
            staging_surface: self.staging_surface.clone(),
            serving_location: self.serving_location.clone(),
            request_template: self.request_template.clone(),
            goal_backprompt: self.goal_backprompt,
            entities: self.initial_state.entities.values().cloned().collect(),
            recipes,
            blocks_goal,
            faults: self.faults.clone(),
        };
        toml::to_string(&doc).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let state = &self.initial_state;
        let exists = |path: String, id: &EntityId| {
            if state.contains(id) {
                Ok(())
            } else {
                Err(err(path, format!("unknown entity {id}")))
            }
        };
        exists("staging_surface".into(), &self.staging_surface)?;
        if let Some(s) = &self.serving_location {
            exists("serving_location".into(), s)?;
        }
        if !self.request_template.contains("{goal}") {
            return Err(err("request_template", "must contain {goal}"));
        }
        let substances: BTreeSet<String> = state.substance_totals().into_keys().collect();
        match &self.ground_truth {
            GroundTruth::Recipes(recipes) => {
                if self.serving_location.is_none() {
                    return Err(err("serving_location", "recipes need a serving location"));
                }
                let mut names = BTreeSet::new();
                for (i, r) in recipes.iter().enumerate() {
                    let base = format!("recipes[{i}]");
                    if !names.insert(r.name.to_lowercase()) {
                        return Err(err(format!("{base}.name"), format!("duplicate recipe {}", r.name)));
                    }
                    for (j, s) in r.mandatory_solids.iter().enumerate() {
                        exists(format!("{base}.solids[{j}]"), s)?;
                    }
                    for (j, l) in r.mandatory_liquids.iter().enumerate() {
                        if !substances.contains(l) {
                            return Err(err(format!("{base}.liquids[{j}]"), format!("no vessel contains {l}")));
                        }
                    }
                    for (j, o) in r.optional.iter().enumerate() {
                        let known = substances.contains(o) || EntityId::new(o.clone()).is_ok_and(|id| state.contains(&id));
                        if !known {
                            return Err(err(format!("{base}.optional[{j}]"), format!("unknown ingredient {o}")));
                        }
                    }
                    let mandatory = r.mandatory();
                    if mandatory.len() != r.mandatory_solids.len() + r.mandatory_liquids.len() {
                        return Err(err(base, "mandatory ingredients repeat"));
                    }
                    if let Some(o) = r.optional.iter().find(|o| mandatory.contains(*o)) {
                        return Err(err(format!("{base}.optional"), format!("{o} is also mandatory")));
                    }
                    let has_vessel = state
                        .entities
                        .values()
                        .any(|e| e.kind.as_deref() == Some(r.vessel_category.as_str()));
                    if !has_vessel {
                        return Err(err(
                            format!("{base}.vessel"),
                            format!("no entity of kind {}", r.vessel_category),
                        ));
                    }
                }
            }
            GroundTruth::Blocks(goal) => {
                let mut seen = BTreeSet::new();
                for (i, stack) in goal.stacks.iter().enumerate() {
                    for (j, b) in stack.iter().enumerate() {
                        let path = format!("blocks_goal.stacks[{i}][{j}]");
                        exists(path.clone(), b)?;
                        if state.entities[b].category != Category::Block {
                            return Err(err(path, format!("{b} is not a block")));
                        }
                        if !seen.insert(b.clone()) {
                            return Err(err(path, format!("{b} appears twice")));
                        }
                    }
                }
                for e in state.entities.values() {
                    if e.category == Category::Block && !seen.contains(&e.id) {
                        return Err(err("blocks_goal", format!("{} is missing from the goal", e.id)));
                    }
                }
            }
        }
        for (i, f) in self.faults.iter().enumerate() {
            let path = format!("faults[{i}]");
            let mut tokens = f.pattern.split_whitespace();
            match tokens.next() {
                Some("*") => {}
                Some(v) if Verb::from_keyword(v).is_some() => {}
                _ => return Err(err(format!("{path}.match"), "pattern must start with a command or *")),
            }
            for t in tokens {
                let skip = t == "*" || t.parse::<u32>().is_ok() || t == Hand::Left.as_str() || t == Hand::Right.as_str();
                if !skip {
                    let id = EntityId::new(t).map_err(|e| err(format!("{path}.match"), e.to_string()))?;
                    exists(format!("{path}.match"), &id)?;
                }
            }
            if let InjectedFault::ObstacleBlocking(b) = &f.inject {
                exists(format!("{path}.inject"), b)?;
            }
        }
        Ok(())
    }

    pub fn fault_injection(&self) -> FaultInjection {
        FaultInjection::new(self.faults.clone())
    }

    pub fn recipes(&self) -> &[Recipe] {
        match &self.ground_truth {
            GroundTruth::Recipes(r) => r,
            GroundTruth::Blocks(_) => &[],
        }
    }

    /// Goal names usable with [`ScenarioSpec::request_for`].
    pub fn goal_names(&self) -> Vec<String> {
        match &self.ground_truth {
            GroundTruth::Recipes(r) => r.iter().map(|r| r.name.clone()).collect(),
            GroundTruth::Blocks(_) => vec!["goal".to_string()],
        }
    }

    /// The surface blocks rest on when they are at the bottom of a stack.
    pub fn table(&self) -> &EntityId {
        &self.staging_surface
    }

    pub fn request_for(&self, goal_name: &str) -> String {
        let goal = match &self.ground_truth {
            GroundTruth::Blocks(b) => b.describe(self.table()),
            GroundTruth::Recipes(_) => goal_name.to_string(),
        };
        self.request_template.replace("{goal}", &goal)
    }

    /// Finds the goal a request asks for; recipes match by name, longest first.
    pub fn resolve_goal(&self, request: &str) -> Result<Goal<'_>, UnknownGoal> {
        match &self.ground_truth {
            GroundTruth::Blocks(b) => Ok(Goal::Blocks(b)),
            GroundTruth::Recipes(recipes) => {
                let lower = request.to_lowercase();
                recipes
                    .iter()
                    .filter(|r| lower.contains(&r.name.to_lowercase()))
                    .max_by_key(|r| r.name.len())
                    .map(Goal::Recipe)
                    .ok_or_else(|| UnknownGoal(request.to_string()))
            }
        }
    }

    /// Vessels of `kind` on the serving location.
    pub fn served_vessels(&self, kind: &str, state: &WorldState) -> Vec<EntityId> {
        let Some(serving) = &self.serving_location else {
            return Vec::new();
        };
        state
            .entities
            .values()
            .filter(|e| e.kind.as_deref() == Some(kind) && e.parent == Parent::Entity(serving.clone()))
            .map(|e| e.id.clone())
            .collect()
    }

    /// Ingredients in the served vessel(s). Extra vessels count as
    /// ingredients of their own so they show up as superfluous.
    pub fn served_contents(&self, recipe: &Recipe, state: &WorldState) -> BTreeSet<String> {
        let vessels = self.served_vessels(&recipe.vessel_category, state);
        let mut out = BTreeSet::new();
        for (i, v) in vessels.iter().enumerate() {
            out.extend(vessel_contents(state, v));
            if i > 0 {
                out.insert(v.to_string());
            }
        }
        out
    }

    pub fn check_goal(&self, request: &str, state: &WorldState) -> Result<GoalVerdict, UnknownGoal> {
        Ok(match self.resolve_goal(request)? {
            Goal::Recipe(r) => self.check_recipe(r, state),
            Goal::Blocks(b) => check_blocks(b, self.table(), state),
        })
    }

    pub fn check_recipe(&self, recipe: &Recipe, state: &WorldState) -> GoalVerdict {
        let serving = self
            .serving_location
            .as_ref()
            .map(|s| s.to_string())
            .unwrap_or_default();
        let vessels = self.served_vessels(&recipe.vessel_category, state);
        let kind = &recipe.vessel_category;
        match vessels.len() {
            0 => return GoalVerdict::NotMet(format!("no {kind} is on the {serving}")),
            1 => {}
            n => return GoalVerdict::NotMet(format!("{n} {kind} vessels are on the {serving}")),
        }
        let contents = vessel_contents(state, &vessels[0]);
        let missing: Vec<String> = recipe.mandatory().difference(&contents).cloned().collect();
        let extra: Vec<String> = contents.difference(&recipe.allowed()).cloned().collect();
        let mut reasons = Vec::new();
        if !missing.is_empty() {
            reasons.push(format!("missing {}", missing.join(", ")));
        }
        if !extra.is_empty() {
            reasons.push(format!("unexpected {}", extra.join(", ")));
        }
        if reasons.is_empty() {
            GoalVerdict::Met
        } else {
            GoalVerdict::NotMet(reasons.join("; "))
        }
    }
}

/// Substances with a positive amount plus every entity inside `vessel`.
pub fn vessel_contents(state: &WorldState, vessel: &EntityId) -> BTreeSet<String> {
    let mut out: BTreeSet<String> = state
        .get(vessel)
        .map(|e| e.contents.iter().filter(|(_, ml)| **ml > 0).map(|(s, _)| s.clone()).collect())
        .unwrap_or_default();
    let mut stack = state.children(vessel);
    while let Some(c) = stack.pop() {
        out.insert(c.to_string());
        stack.extend(state.children(c));
    }
    out
}

/// Met iff every block rests exactly where the goal says.
pub fn check_blocks(goal: &BlocksGoal, table: &EntityId, state: &WorldState) -> GoalVerdict {
    let mut wrong = Vec::new();
    for b in goal.blocks() {
        let want = match goal.support(b).flatten() {
            Some(below) => Parent::Entity(below.clone()),
            None => Parent::Entity(table.clone()),
        };
        let actual = state.get(b).map(|e| e.parent.clone());
        if actual.as_ref() != Some(&want) {
            let target = match &want {
                Parent::Entity(e) if e == table => format!("the {table}"),
                other => other.to_string(),
            };
            wrong.push(format!("{b} is not on {target}"));
        }
    }
    if wrong.is_empty() {
        GoalVerdict::Met
    } else {
        GoalVerdict::NotMet(wrong.join(", "))
    }
}
