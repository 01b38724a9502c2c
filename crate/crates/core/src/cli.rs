//! Batch runs, scenario validation and the interactive session behind the
//! `corrplan` binary.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::midlevel::ErrorKind;
use crate::metrics::{aggregate, write_trials_csv, SummaryTable, TrialRecord};
use crate::orchestrator::{
    handle_request, ConfigSymbol, EngineConfig, Episode, Outcome, PlannerBackend, Session,
};
use crate::orchestrator::llm::{LlmBackend, LlmSettings, DEFAULT_API_KEY_VAR, DEFAULT_ENDPOINT, DEFAULT_MODEL};
use crate::orchestrator::scripted::{BehaviorKnobs, ScriptedBackend};
use crate::scenario::{generate_blocks, load_scenario, ScenarioSpec};
use crate::world::describe_state;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SCENARIO: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendChoice {
    Scripted {
        #[serde(default)]
        knobs: BehaviorKnobs,
    },
    Llm {
        endpoint: String,
        model: String,
        api_key_var: String,
    },
}

impl BackendChoice {
    pub fn scripted(knobs: BehaviorKnobs) -> Self {
        BackendChoice::Scripted { knobs }
    }

    pub fn llm(endpoint: Option<String>, model: Option<String>) -> Self {
        BackendChoice::Llm {
            endpoint: endpoint.unwrap_or_else(|| DEFAULT_ENDPOINT.to_string()),
            model: model.unwrap_or_else(|| DEFAULT_MODEL.to_string()),
            api_key_var: DEFAULT_API_KEY_VAR.to_string(),
        }
    }

    pub fn build(&self, spec: &ScenarioSpec, temperature: f64) -> Box<dyn PlannerBackend> {
        match self {
            BackendChoice::Scripted { knobs } => Box::new(ScriptedBackend::new(spec.clone(), knobs.clone())),
            BackendChoice::Llm {
                endpoint,
                model,
                api_key_var,
            } => Box::new(LlmBackend::new(LlmSettings {
                endpoint: endpoint.clone(),
                model: model.clone(),
                api_key_var: api_key_var.clone(),
                temperature,
                ..LlmSettings::default()
            })),
        }
    }
}

/// Everything needed to rerun a batch exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// A bundled name (`barman`, `pizza`, `blocks`), `blocks:N` for freshly
    /// generated N-block problems per trial, or a path to a scenario file.
    pub scenario: String,
    pub configs: Vec<ConfigSymbol>,
    pub trials: u32,
    pub seed: u64,
    pub backend: BackendChoice,
    /// Restricts the run to these goals; empty means all.
    #[serde(default)]
    pub goals: Vec<String>,
    pub out: PathBuf,
    #[serde(default)]
    pub parallel: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Scenario(_) => EXIT_SCENARIO,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

/// Where trial scenarios come from.
#[derive(Debug, Clone)]
pub enum ScenarioSource {
    Fixed(ScenarioSpec),
    GeneratedBlocks(usize),
}

impl ScenarioSource {
    pub fn resolve(name: &str) -> Result<Self, CliError> {
        if let Some(n) = name.strip_prefix("blocks:") {
            let n: usize = n
                .parse()
                .ok()
                .filter(|n| (1..=8).contains(n))
                .ok_or_else(|| CliError::Usage(format!("blocks:N needs N between 1 and 8, got {n}")))?;
            return Ok(ScenarioSource::GeneratedBlocks(n));
        }
        if let Some(spec) = ScenarioSpec::bundled(name) {
            return Ok(ScenarioSource::Fixed(spec));
        }
        let text = fs::read_to_string(name).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        let spec = load_scenario(&text).map_err(|e| CliError::Scenario(e.to_string()))?;
        Ok(ScenarioSource::Fixed(spec))
    }

    pub fn spec_for(&self, seed: u64) -> ScenarioSpec {
        match self {
            ScenarioSource::Fixed(s) => s.clone(),
            ScenarioSource::GeneratedBlocks(n) => generate_blocks(*n, seed),
        }
    }
}

/// Runs one trial from the scenario's initial state.
pub fn run_trial(spec: &ScenarioSpec, goal: &str, config: ConfigSymbol, seed: u64, backend: &BackendChoice) -> (TrialRecord, Episode) {
    let cfg = EngineConfig::preset(config, seed);
    let backend = backend.build(spec, cfg.temperature);
    let request = spec.request_for(goal);
    let ep = handle_request(&request, &spec.initial_state, &cfg, backend.as_ref(), spec);
    (TrialRecord::from_episode(spec, goal, config, seed, &ep), ep)
}

/// All trials of a manifest, ordered by configuration, goal and seed.
pub fn run_trials(m: &RunManifest) -> Result<Vec<TrialRecord>, CliError> {
    if m.configs.is_empty() {
        return Err(CliError::Usage("at least one configuration is required".into()));
    }
    let source = ScenarioSource::resolve(&m.scenario)?;
    if let ScenarioSource::Fixed(spec) = &source {
        spec.validate().map_err(|e| CliError::Scenario(e.to_string()))?;
    }
    let all_goals = source.spec_for(m.seed).goal_names();
    for g in &m.goals {
        if !all_goals.contains(g) {
            return Err(CliError::Usage(format!("unknown goal '{g}'")));
        }
    }
    let goals: Vec<String> = if m.goals.is_empty() { all_goals } else { m.goals.clone() };
    let mut cells = Vec::new();
    for (ci, c) in m.configs.iter().enumerate() {
        for (gi, g) in goals.iter().enumerate() {
            for t in 0..m.trials {
                cells.push((ci, *c, gi, g.clone(), m.seed + t as u64));
            }
        }
    }
    let work = || {
        cells
            .par_iter()
            .map(|(ci, c, gi, g, seed)| {
                let spec = source.spec_for(*seed);
                ((*ci, *gi, *seed), run_trial(&spec, g, *c, *seed, &m.backend).0)
            })
            .collect::<Vec<_>>()
    };
    let mut rows = match m.parallel {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(work),
        None => work(),
    };
    rows.sort_by_key(|(k, _)| *k);
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

/// Per-configuration table for the terminal.
pub fn render_summary(s: &SummaryTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "config  trials  exec   hl_mean  ml_mean  correct  p50_s");
    for c in &s.configs {
        let _ = writeln!(
            out,
            "{:<6}  {:>6}  {:>5.3}  {:>7.2}  {:>7.2}  {:>7}  {:.4}",
            c.config.as_str(),
            c.trials,
            c.executability,
            c.hl_replans_mean,
            c.ml_repairs_mean,
            c.correctness.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into()),
            c.total_seconds.p50,
        );
    }
    for d in &s.derived {
        let _ = writeln!(
            out,
            "derived from {}: BL exec {:.3}{}",
            d.source,
            d.baseline_executability,
            d.midlevel_executability
                .map(|m| format!(", M exec {m:.3}"))
                .unwrap_or_default()
        );
    }
    out
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Runs a batch and writes `trials.csv`, `summary.json` and `manifest.toml`
/// into the output directory.
pub fn cmd_run(m: &RunManifest) -> Result<SummaryTable, CliError> {
    fs::create_dir_all(&m.out).map_err(|e| io_err(&m.out, e))?;
    let manifest_path = m.out.join("manifest.toml");
    let manifest = toml::to_string(m).map_err(|e| CliError::Usage(e.to_string()))?;
    fs::write(&manifest_path, manifest).map_err(|e| io_err(&manifest_path, e))?;
    let trials = run_trials(m)?;
    let csv_path = m.out.join("trials.csv");
    let file = fs::File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    write_trials_csv(io::BufWriter::new(file), &trials).map_err(|e| io_err(&csv_path, e))?;
    let summary = aggregate(&trials);
    let summary_path = m.out.join("summary.json");
    fs::write(&summary_path, summary.to_json()).map_err(|e| io_err(&summary_path, e))?;
    Ok(summary)
}

pub fn load_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Loads a scenario and runs every goal's ground-truth plan through the full
/// stack without any correction. Returns one line per problem.
pub fn validate_scenario(spec: &ScenarioSpec) -> Vec<String> {
    if let Err(e) = spec.validate() {
        return vec![e.to_string()];
    }
    let backend = BackendChoice::scripted(BehaviorKnobs::default());
    let mut problems = Vec::new();
    for goal in spec.goal_names() {
        let (mut rec, mut ep) = run_trial(spec, &goal, ConfigSymbol::BL, 0, &backend);
        // Scenarios with occlusion or reach limits are meant to be solved
        // with feedback; their ground truth only has to succeed that way.
        let physical = ep.plans.last().and_then(|p| p.failure.as_ref()).map(|f| f.kind) == Some(ErrorKind::Physical);
        if !rec.executable && physical {
            (rec, ep) = run_trial(spec, &goal, ConfigSymbol::MH2, 0, &backend);
        }
        if !rec.executable || rec.correct != Some(true) {
            let why = match &ep.outcome {
                Outcome::NotExecutable(m) => m.clone(),
                _ => spec
                    .check_goal(&ep.request, &ep.final_state)
                    .map(|v| format!("{v:?}"))
                    .unwrap_or_else(|e| e.to_string()),
            };
            problems.push(format!("{goal}: ground-truth plan fails: {why}"));
        }
    }
    problems
}

pub fn cmd_validate(path_or_name: &str, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = match ScenarioSource::resolve(path_or_name)? {
        ScenarioSource::Fixed(s) => s,
        ScenarioSource::GeneratedBlocks(n) => generate_blocks(n, 0),
    };
    let problems = validate_scenario(&spec);
    for p in &problems {
        let _ = writeln!(out, "{p}");
    }
    if problems.is_empty() {
        let n = spec.goal_names().len();
        let _ = writeln!(out, "{}: ok ({n} goal{})", spec.name, if n == 1 { "" } else { "s" });
        Ok(())
    } else {
        Err(CliError::Scenario(format!("{} problem(s) in {}", problems.len(), spec.name)))
    }
}

fn print_episode(out: &mut dyn Write, ep: &Episode, verbose: bool) -> io::Result<()> {
    if verbose {
        for p in &ep.plans {
            writeln!(out, "-- plan {}", p.revision)?;
            for line in p.text.lines() {
                writeln!(out, "   {line}")?;
            }
        }
        for r in &ep.repair_log {
            let cmds: Vec<String> = r.commands.iter().map(|c| c.to_string()).collect();
            writeln!(out, "-- repair at step {}: {}", r.at, cmds.join("; "))?;
        }
        for f in &ep.feedback_msgs {
            writeln!(out, "-- feedback: {f}")?;
        }
        if !ep.executed.is_empty() {
            let cmds: Vec<String> = ep.executed.iter().map(|c| c.to_string()).collect();
            writeln!(out, "-- executed: {}", cmds.join("; "))?;
        }
        writeln!(out, "-- state: {}", describe_state(&ep.final_state))?;
    }
    writeln!(out, "{}", ep.reply)
}

/// Reads requests line by line until end of input or `quit`.
pub fn cmd_repl(
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    spec: ScenarioSpec,
    config: EngineConfig,
    backend: &dyn PlannerBackend,
    verbose: bool,
) -> io::Result<()> {
    let mut session = Session::new(spec, config, backend);
    loop {
        write!(out, "> ")?;
        out.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            writeln!(out)?;
            return Ok(());
        }
        let request = line.trim();
        if request.is_empty() {
            continue;
        }
        if request == "quit" || request == "exit" {
            return Ok(());
        }
        let ep = session.handle(request);
        print_episode(out, &ep, verbose)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_are_self_consistent() {
        for name in ["barman", "pizza", "blocks"] {
            let spec = ScenarioSpec::bundled(name).unwrap();
            assert_eq!(validate_scenario(&spec), Vec::<String>::new(), "{name}");
        }
    }

    #[test]
    fn broken_recipe_is_named() {
        let mut spec = ScenarioSpec::bundled("barman").unwrap();
        let glass = crate::action::eid("glass");
        spec.initial_state.entities.get_mut(&glass).unwrap().capacity_ml = Some(60);
        let problems = validate_scenario(&spec);
        assert!(problems.iter().any(|p| p.starts_with("Cosmopolitan: ground-truth plan fails")), "{problems:?}");
    }

    #[test]
    fn trial_grid_shape_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            scenario: "barman".into(),
            configs: vec![ConfigSymbol::MH2],
            trials: 2,
            seed: 10,
            backend: BackendChoice::scripted(BehaviorKnobs::ablation()),
            goals: vec![],
            out: dir.path().to_path_buf(),
            parallel: Some(2),
        };
        let s = cmd_run(&m).unwrap();
        assert_eq!(s.get(ConfigSymbol::MH2).unwrap().trials, 20);
        let csv = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
        assert_eq!(csv.lines().count(), 21);
        assert_eq!(load_manifest(&dir.path().join("manifest.toml")).unwrap(), m);
    }

    #[test]
    fn repl_keeps_state_between_requests() {
        let spec = ScenarioSpec::bundled("barman").unwrap();
        let backend = ScriptedBackend::new(spec.clone(), BehaviorKnobs::default());
        let mut input = io::Cursor::new("what is on the tray?\n\nPlease make me a Martini.\nwhat is on the tray?\n");
        let mut out = Vec::new();
        cmd_repl(&mut input, &mut out, spec, EngineConfig::default(), &backend, false).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("There is nothing on the tray."), "{text}");
        assert!(text.contains("The tray holds glass."), "{text}");
    }
}
