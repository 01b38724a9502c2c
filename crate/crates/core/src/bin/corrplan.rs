use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use corrective_planner::cli::{
    cmd_repl, cmd_run, cmd_validate, load_manifest, render_summary, BackendChoice, CliError, RunManifest, ScenarioSource,
};
use corrective_planner::orchestrator::{BehaviorKnobs, ConfigSymbol, EngineConfig};
use corrective_planner::scenario::generate_blocks;

#[derive(Parser)]
#[command(name = "corrplan", version, about = "Corrective planning for a simulated two-armed robot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of trials and write trials.csv, summary.json and manifest.toml.
    Run(RunArgs),
    /// Send requests to the robot one line at a time.
    Repl(ReplArgs),
    /// Check a scenario file and replay its ground truth.
    Validate {
        /// Bundled scenario name or path to a scenario file.
        scenario: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Scripted,
    Llm,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "scripted")]
    backend: BackendKind,
    /// Chat-completions URL for the llm backend.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Scripted-backend overrides, e.g. `wrong_object=0.5,omit_step=0`.
    #[arg(long)]
    knobs: Option<String>,
    /// Start the scripted backend without mistakes instead of the ablation rates.
    #[arg(long)]
    clean: bool,
}

impl BackendArgs {
    fn choice(&self) -> Result<BackendChoice, CliError> {
        Ok(match self.backend {
            BackendKind::Llm => BackendChoice::llm(self.endpoint.clone(), self.model.clone()),
            BackendKind::Scripted => {
                let mut knobs = if self.clean {
                    BehaviorKnobs::default()
                } else {
                    BehaviorKnobs::ablation()
                };
                if let Some(k) = &self.knobs {
                    knobs.apply_overrides(k).map_err(CliError::Usage)?;
                }
                BackendChoice::scripted(knobs)
            }
        })
    }
}

#[derive(Args)]
struct RunArgs {
    /// Rerun exactly what a previous manifest describes; other flags are ignored.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// `barman`, `pizza`, `blocks`, `blocks:N` or a path to a scenario file.
    #[arg(long, default_value = "barman")]
    scenario: String,
    /// Configuration symbol; repeat for several. Defaults to all eight.
    #[arg(long = "config")]
    configs: Vec<String>,
    /// Only these goals; repeat for several.
    #[arg(long = "goal")]
    goals: Vec<String>,
    #[arg(long, default_value_t = 10)]
    trials: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long)]
    verbose: bool,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct ReplArgs {
    #[arg(long, default_value = "barman")]
    scenario: String,
    #[arg(long, default_value = "MH2")]
    config: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    verbose: bool,
    #[command(flatten)]
    backend: BackendArgs,
}

fn parse_configs(raw: &[String]) -> Result<Vec<ConfigSymbol>, CliError> {
    if raw.is_empty() {
        return Ok(ConfigSymbol::ALL.to_vec());
    }
    raw.iter()
        .map(|c| c.parse().map_err(|e: corrective_planner::orchestrator::UnknownConfig| CliError::Usage(e.to_string())))
        .collect()
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let manifest = match &args.manifest {
        Some(p) => load_manifest(p)?,
        None => RunManifest {
            scenario: args.scenario.clone(),
            configs: parse_configs(&args.configs)?,
            trials: args.trials,
            seed: args.seed,
            backend: args.backend.choice()?,
            goals: args.goals.clone(),
            out: args.out.clone(),
            parallel: args.parallel,
        },
    };
    if args.verbose {
        eprintln!("running {} into {}", manifest.scenario, manifest.out.display());
    }
    let summary = cmd_run(&manifest)?;
    print!("{}", render_summary(&summary));
    Ok(())
}

fn repl(args: ReplArgs) -> Result<(), CliError> {
    let symbol: ConfigSymbol = args
        .config
        .parse()
        .map_err(|e: corrective_planner::orchestrator::UnknownConfig| CliError::Usage(e.to_string()))?;
    let spec = match ScenarioSource::resolve(&args.scenario)? {
        ScenarioSource::Fixed(s) => s,
        ScenarioSource::GeneratedBlocks(n) => generate_blocks(n, args.seed),
    };
    let config = EngineConfig::preset(symbol, args.seed);
    let backend = args.backend.choice()?.build(&spec, config.temperature);
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let mut out = io::stdout();
    cmd_repl(&mut input, &mut out, spec, config, backend.as_ref(), args.verbose).map_err(|e| CliError::Io(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Repl(a) => repl(a),
        Command::Validate { scenario } => cmd_validate(&scenario, &mut io::stdout()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("corrplan: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
