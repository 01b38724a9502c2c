use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::action::{parse_plan, ActionCommand, Plan};
use crate::lowlevel::{select, FaultInjection};
use crate::midlevel::{
    sequence, ErrorKind, FailedCommand, PlanError, RepairAction, RepairContext, SequenceOutcome, SequencerOptions,
    StepExecutor,
};
use crate::scenario::{GoalVerdict, ScenarioSpec};
use crate::world::{apply, describe_state, StateDelta, WorldState};

use super::agents::{AgentRole, BackendError, BackendRequest, Message, PlannerBackend, PlanningContext, TASK_PREFIX};
use super::config::{format_feedback, EngineConfig, FeedbackLevel};

/// Prefix of the message that tells Alex how an episode ended.
pub const REPORT_PREFIX: &str = "[execution report]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Alex,
    Travi,
    Ropa,
    Midlevel,
    Lowlevel,
    Apply,
}

impl Phase {
    pub const ALL: [Phase; 6] = [Phase::Alex, Phase::Travi, Phase::Ropa, Phase::Midlevel, Phase::Lowlevel, Phase::Apply];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Alex => "alex",
            Phase::Travi => "travi",
            Phase::Ropa => "ropa",
            Phase::Midlevel => "midlevel",
            Phase::Lowlevel => "lowlevel",
            Phase::Apply => "apply",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Executable,
    NotExecutable(String),
    EpistemicAnswer(String),
}

impl Outcome {
    pub fn is_executable(&self) -> bool {
        *self == Outcome::Executable
    }
}

/// One planning round: what the action planner wrote and how it went.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub revision: u32,
    pub text: String,
    /// `None` when the text did not parse.
    pub plan: Option<Plan>,
    pub failure: Option<PlanError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub request: String,
    pub plans: Vec<PlanRecord>,
    pub feedback_msgs: Vec<String>,
    pub repair_log: Vec<RepairAction>,
    /// Commands executed in order, mid-level insertions included.
    pub executed: Vec<ActionCommand>,
    pub deltas: Vec<StateDelta>,
    pub hl_replans: u32,
    pub ml_repairs: u32,
    pub outcome: Outcome,
    pub final_state: WorldState,
    /// Alex's last reply to the user.
    pub reply: String,
    pub timings: BTreeMap<Phase, Duration>,
}

impl Episode {
    fn new(request: &str, state: &WorldState) -> Self {
        Episode {
            request: request.to_string(),
            plans: Vec::new(),
            feedback_msgs: Vec::new(),
            repair_log: Vec::new(),
            executed: Vec::new(),
            deltas: Vec::new(),
            hl_replans: 0,
            ml_repairs: 0,
            outcome: Outcome::Executable,
            final_state: state.clone(),
            reply: String::new(),
            timings: Phase::ALL.into_iter().map(|p| (p, Duration::ZERO)).collect(),
        }
    }

    fn time(&mut self, phase: Phase, d: Duration) {
        *self.timings.entry(phase).or_default() += d;
    }
}

/// Runs each command through the feasibility layer, then the world model.
struct PhysicalExecutor<'a> {
    faults: &'a mut FaultInjection,
    lowlevel: Duration,
    apply: Duration,
}

impl StepExecutor for PhysicalExecutor<'_> {
    fn execute(&mut self, state: &WorldState, cmd: &ActionCommand) -> Result<(WorldState, StateDelta), PlanError> {
        let t = Instant::now();
        let verdict = select(cmd, state, self.faults);
        self.lowlevel += t.elapsed();
        let Some(winner) = verdict.winner else {
            return Err(verdict.failure.expect("verdict without winner carries a failure"));
        };
        let concrete = match (cmd, winner.hand) {
            (ActionCommand::Get { object, source, hand: None }, Some(h)) => ActionCommand::Get {
                object: object.clone(),
                source: source.clone(),
                hand: Some(h),
            },
            _ => cmd.clone(),
        };
        let t = Instant::now();
        let result = apply(state, &concrete)
            .map_err(|e| PlanError::unrecoverable(ErrorKind::Runtime, cmd, e.to_string(), "retry the command"));
        self.apply += t.elapsed();
        result
    }
}

fn transport_error(role: AgentRole, e: &BackendError) -> PlanError {
    PlanError {
        kind: ErrorKind::Runtime,
        recoverable: false,
        failed_command: FailedCommand::Raw(format!("request to {role}")),
        step_index: 0,
        what: format!("request to {role}"),
        why: e.to_string(),
        how: "retry the request".to_string(),
        rule: None,
    }
}

fn syntax_error(e: &crate::action::ParseError) -> PlanError {
    let what = if e.text.trim().is_empty() {
        "empty line".to_string()
    } else {
        e.text.trim().to_string()
    };
    PlanError {
        kind: ErrorKind::Syntactic,
        recoverable: false,
        failed_command: FailedCommand::Raw(e.text.clone()),
        step_index: e.line.map(|l| l.saturating_sub(1)).unwrap_or(0),
        what,
        why: e.reason(),
        how: "write one command per line using get, put, pour, open_door, close_door, screw, unscrew, finger_push or wait"
            .to_string(),
        rule: None,
    }
}

fn goal_error(reason: &str) -> PlanError {
    PlanError {
        kind: ErrorKind::GoalNotAchieved,
        recoverable: false,
        failed_command: FailedCommand::Raw("goal".into()),
        step_index: 0,
        what: "the plan finished but the goal is not reached".to_string(),
        why: reason.to_string(),
        how: "plan the remaining steps from the current state".to_string(),
        rule: None,
    }
}

fn travi_prompt(ctx: &PlanningContext, task: &str) -> String {
    let mut out = format!("Task: {task}\nScene: {}", describe_state(&ctx.state));
    if !ctx.feedback.is_empty() {
        out.push_str("\nFeedback from earlier attempts:");
        for f in &ctx.feedback {
            out.push_str("\n- ");
            out.push_str(f);
        }
    }
    out
}

struct Driver<'a> {
    cfg: &'a EngineConfig,
    backend: &'a dyn PlannerBackend,
    scenario: &'a ScenarioSpec,
}

impl Driver<'_> {
    fn call(&self, ep: &mut Episode, phase: Phase, role: AgentRole, conversation: &[Message], ctx: &PlanningContext) -> Result<String, BackendError> {
        let t = Instant::now();
        let out = self.backend.respond(&BackendRequest {
            role,
            conversation,
            context: ctx,
        });
        ep.time(phase, t.elapsed());
        out
    }

    fn context(&self, ep: &Episode, state: &WorldState) -> PlanningContext {
        PlanningContext {
            request: ep.request.clone(),
            state: state.clone(),
            feedback: ep.feedback_msgs.clone(),
            round: ep.plans.len() as u32,
            seed: self.cfg.seed,
        }
    }

    /// One Travi/Ropa/execute round. `Ok` means the episode is done.
    fn round(&self, ep: &mut Episode, state: &mut WorldState, task: &str, faults: &mut FaultInjection) -> Result<(), PlanError> {
        let ctx = self.context(ep, state);
        let travi_conv = [Message::system(AgentRole::Travi.system_message()), Message::user(travi_prompt(&ctx, task))];
        let spec = self
            .call(ep, Phase::Travi, AgentRole::Travi, &travi_conv, &ctx)
            .map_err(|e| transport_error(AgentRole::Travi, &e))?;
        let ropa_conv = [Message::system(AgentRole::Ropa.system_message()), Message::user(spec)];
        let text = self
            .call(ep, Phase::Ropa, AgentRole::Ropa, &ropa_conv, &ctx)
            .map_err(|e| transport_error(AgentRole::Ropa, &e))?;
        let revision = ep.plans.len() as u32;
        let mut plan = match parse_plan(&text) {
            Ok(p) => p,
            Err(e) => {
                let err = syntax_error(&e);
                ep.plans.push(PlanRecord {
                    revision,
                    text,
                    plan: None,
                    failure: Some(err.clone()),
                });
                return Err(err);
            }
        };
        plan.revision = revision;
        ep.plans.push(PlanRecord {
            revision,
            text,
            plan: Some(plan.clone()),
            failure: None,
        });
        if plan.is_empty() {
            return Ok(());
        }
        let opts = SequencerOptions {
            repair_enabled: self.cfg.midlevel_repair_enabled,
            repair: RepairContext::new(self.scenario.staging_surface.clone()),
        };
        let mut exec = PhysicalExecutor {
            faults,
            lowlevel: Duration::ZERO,
            apply: Duration::ZERO,
        };
        let t = Instant::now();
        let report = sequence(state, &plan, &mut exec, &opts);
        let total = t.elapsed();
        ep.time(Phase::Lowlevel, exec.lowlevel);
        ep.time(Phase::Apply, exec.apply);
        ep.time(Phase::Midlevel, total.saturating_sub(exec.lowlevel + exec.apply));
        *state = report.state;
        ep.executed.extend(report.executed);
        ep.deltas.extend(report.deltas);
        ep.repair_log.extend(report.repairs);
        ep.ml_repairs += report.repair_count;
        match report.outcome {
            SequenceOutcome::Failed { error, .. } => {
                ep.plans.last_mut().expect("plan recorded").failure = Some(error.clone());
                Err(error)
            }
            SequenceOutcome::Completed => {
                if self.scenario.goal_backprompt {
                    if let Ok(GoalVerdict::NotMet(reason)) = self.scenario.check_goal(&ep.request, state) {
                        let err = goal_error(&reason);
                        ep.plans.last_mut().expect("plan recorded").failure = Some(err.clone());
                        return Err(err);
                    }
                }
                Ok(())
            }
        }
    }

    fn run(&self, alex_history: &mut Vec<Message>, request: &str, initial: &WorldState) -> Episode {
        let mut ep = Episode::new(request, initial);
        let mut state = initial.clone();
        let ctx = self.context(&ep, &state);
        let mut conv = vec![Message::system(AgentRole::Alex.system_message())];
        conv.extend(alex_history.iter().cloned());
        conv.push(Message::user(format!("{request}\nScene: {}", describe_state(&state))));
        let reply = match self.call(&mut ep, Phase::Alex, AgentRole::Alex, &conv, &ctx) {
            Ok(r) => r,
            Err(e) => {
                ep.outcome = Outcome::NotExecutable(format!("Alex is unavailable: {e}"));
                return ep;
            }
        };
        alex_history.push(Message::user(request));
        alex_history.push(Message::assistant(reply.clone()));
        let Some(task) = reply.trim().strip_prefix(TASK_PREFIX).map(|t| t.trim().to_string()) else {
            ep.reply = reply.clone();
            ep.outcome = Outcome::EpistemicAnswer(reply);
            return ep;
        };

        let mut faults = self.scenario.fault_injection();
        loop {
            let failure = match self.round(&mut ep, &mut state, &task, &mut faults) {
                Ok(()) => {
                    ep.outcome = Outcome::Executable;
                    break;
                }
                Err(e) => e,
            };
            if !self.cfg.highlevel_replan_enabled || ep.hl_replans >= self.cfg.max_replans {
                ep.outcome = Outcome::NotExecutable(format_feedback(&failure, FeedbackLevel::WhatWhyHow));
                break;
            }
            ep.feedback_msgs.push(format_feedback(&failure, self.cfg.feedback_level));
            ep.hl_replans += 1;
        }
        ep.final_state = state;

        let summary = match &ep.outcome {
            Outcome::Executable if ep.executed.is_empty() => {
                "no steps were needed: the goal state is already achieved or unachievable".to_string()
            }
            Outcome::Executable => format!("done after {} steps", ep.executed.len()),
            Outcome::NotExecutable(why) => format!("failed: {why}"),
            Outcome::EpistemicAnswer(_) => unreachable!("answered before planning"),
        };
        let report = format!("{REPORT_PREFIX} {summary}");
        let mut conv = vec![Message::system(AgentRole::Alex.system_message())];
        conv.extend(alex_history.iter().cloned());
        conv.push(Message::user(report.clone()));
        let ctx = self.context(&ep, &ep.final_state);
        ep.reply = self
            .call(&mut ep, Phase::Alex, AgentRole::Alex, &conv, &ctx)
            .unwrap_or_else(|_| summary.clone());
        alex_history.push(Message::user(report));
        alex_history.push(Message::assistant(ep.reply.clone()));
        ep
    }
}

/// Runs one request from `state` with a fresh dialogue.
pub fn handle_request(
    request: &str,
    state: &WorldState,
    cfg: &EngineConfig,
    backend: &dyn PlannerBackend,
    scenario: &ScenarioSpec,
) -> Episode {
    let mut history = Vec::new();
    Driver { cfg, backend, scenario }.run(&mut history, request, state)
}

/// A sequence of requests sharing Alex's dialogue and the world state.
pub struct Session<'a> {
    backend: &'a dyn PlannerBackend,
    scenario: ScenarioSpec,
    pub config: EngineConfig,
    state: WorldState,
    alex_history: Vec<Message>,
}

impl<'a> Session<'a> {
    pub fn new(scenario: ScenarioSpec, config: EngineConfig, backend: &'a dyn PlannerBackend) -> Self {
        let state = scenario.initial_state.clone();
        Session {
            backend,
            scenario,
            config,
            state,
            alex_history: Vec::new(),
        }
    }

    pub fn handle(&mut self, request: &str) -> Episode {
        let driver = Driver {
            cfg: &self.config,
            backend: self.backend,
            scenario: &self.scenario,
        };
        let ep = driver.run(&mut self.alex_history, request, &self.state);
        self.state = ep.final_state.clone();
        ep
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn scenario(&self) -> &ScenarioSpec {
        &self.scenario
    }

    pub fn alex_history(&self) -> &[Message] {
        &self.alex_history
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::config::ConfigSymbol;
    use crate::orchestrator::llm::{mock, LlmBackend, LlmSettings};
    use crate::orchestrator::scripted::{BehaviorKnobs, ScriptedBackend};

    fn run(scenario: &str, goal: &str, symbol: ConfigSymbol, knobs: BehaviorKnobs) -> Episode {
        let spec = ScenarioSpec::bundled(scenario).unwrap();
        let backend = ScriptedBackend::new(spec.clone(), knobs);
        let request = spec.request_for(goal);
        handle_request(&request, &spec.initial_state, &EngineConfig::preset(symbol, 3), &backend, &spec)
    }

    #[test]
    fn cosmopolitan_without_faults_runs_first_time() {
        let ep = run("barman", "Cosmopolitan", ConfigSymbol::MH2, BehaviorKnobs::default());
        assert_eq!(ep.outcome, Outcome::Executable);
        assert_eq!((ep.plans.len(), ep.hl_replans, ep.ml_repairs), (1, 0, 0));
        let spec = ScenarioSpec::bundled("barman").unwrap();
        assert!(spec.check_goal(&ep.request, &ep.final_state).unwrap().is_met());
    }

    #[test]
    fn pizza_moves_the_salt_before_the_olives() {
        let ep = run("pizza", "Mushroom and Olive", ConfigSymbol::MH2, BehaviorKnobs::default());
        assert_eq!(ep.outcome, Outcome::Executable, "{:?}", ep.feedback_msgs);
        let text: Vec<String> = ep.executed.iter().map(|c| c.to_string()).collect();
        let salt = text.iter().position(|c| c.starts_with("put salt")).unwrap();
        let olives = text.iter().position(|c| c.starts_with("get black_olives")).unwrap();
        assert!(salt < olives, "{text:?}");
        assert!(ep.feedback_msgs[0].contains("obstacle salt is blocking black_olives"));
        assert_eq!(text[olives], "get black_olives table left");
    }

    #[test]
    fn invalid_output_exhausts_the_budget() {
        let knobs = BehaviorKnobs {
            always_invalid: true,
            ..BehaviorKnobs::default()
        };
        let ep = run("barman", "Mojito", ConfigSymbol::MH2, knobs.clone());
        assert_eq!(ep.hl_replans, 5);
        assert_eq!(ep.plans.len(), 6);
        assert!(matches!(ep.outcome, Outcome::NotExecutable(_)));
        let bl = run("barman", "Mojito", ConfigSymbol::BL, knobs);
        assert_eq!((bl.hl_replans, bl.plans.len()), (0, 1));
    }

    #[test]
    fn questions_are_answered_without_planning() {
        let spec = ScenarioSpec::bundled("barman").unwrap();
        let backend = ScriptedBackend::new(spec.clone(), BehaviorKnobs::default());
        let ep = handle_request(
            "How many glasses are on the table?",
            &spec.initial_state,
            &EngineConfig::default(),
            &backend,
            &spec,
        );
        assert!(matches!(ep.outcome, Outcome::EpistemicAnswer(ref a) if a.contains('1')));
        assert!(ep.plans.is_empty() && ep.executed.is_empty());
        assert_eq!(ep.final_state, spec.initial_state);
    }

    /// Records every conversation it is shown.
    struct Recorder(std::sync::Mutex<Vec<(AgentRole, Vec<Message>)>>, ScriptedBackend);

    impl PlannerBackend for Recorder {
        fn name(&self) -> &str {
            "recorder"
        }
        fn is_deterministic(&self) -> bool {
            true
        }
        fn respond(&self, r: &BackendRequest<'_>) -> Result<String, BackendError> {
            self.0.lock().unwrap().push((r.role, r.conversation.to_vec()));
            self.1.respond(r)
        }
    }

    #[test]
    fn only_alex_sees_earlier_requests() {
        let spec = ScenarioSpec::bundled("barman").unwrap();
        let rec = Recorder(Default::default(), ScriptedBackend::new(spec.clone(), BehaviorKnobs::default()));
        let mut session = Session::new(spec.clone(), EngineConfig::default(), &rec);
        session.handle("What is on the table?");
        let first = session.handle(&spec.request_for("Martini"));
        assert!(first.outcome.is_executable());
        session.handle(&spec.request_for("Gin and Tonic"));
        let calls = rec.0.lock().unwrap();
        for (role, conv) in calls.iter() {
            let mentions_martini = conv.iter().any(|m| m.content.contains("Martini"));
            let mentions_gin = conv.iter().any(|m| m.content.contains("Gin and Tonic"));
            if *role != AgentRole::Alex {
                assert!(!(mentions_martini && mentions_gin), "{role} saw two requests");
                assert!(conv.len() <= 2);
            }
        }
        let last_alex = calls.iter().rev().find(|(r, _)| *r == AgentRole::Alex).unwrap();
        assert!(last_alex.1.iter().any(|m| m.content.contains("Martini")));
        assert!(last_alex.1.iter().any(|m| m.content.contains("What is on the table?")));
        assert_eq!(session.alex_history().len(), 10);
    }

    #[test]
    fn backend_errors_consume_replans() {
        let spec = ScenarioSpec::bundled("barman").unwrap();
        let (url, seen) = mock::serve(vec![
            (200, mock::completion("TASK: make a martini")),
            (500, "{}".into()),
        ]);
        let backend = LlmBackend::new(LlmSettings {
            endpoint: url,
            api_key_var: "CORRPLAN_TEST_UNSET_KEY".into(),
            backoff: Duration::from_millis(1),
            ..LlmSettings::default()
        });
        let mut cfg = EngineConfig::default();
        cfg.max_replans = 1;
        let ep = handle_request("Please make me a Martini.", &spec.initial_state, &cfg, &backend, &spec);
        assert_eq!(ep.hl_replans, 1);
        assert!(matches!(ep.outcome, Outcome::NotExecutable(ref m) if m.contains("status 500")));
        // Alex, then two rounds of three attempts each, then the report to Alex (three attempts).
        assert_eq!(seen.lock().unwrap().len(), 1 + 3 + 3 + 3);
        assert!(ep.feedback_msgs[0].starts_with("Error: request to Travi"));
    }
}
