//! Every configuration on every cocktail with a mistake-prone scripted planner.
//!
//!     cargo run --release --example barman_ablation -- 20

use corrective_planner::cli::{render_summary, run_trials, BackendChoice, RunManifest};
use corrective_planner::metrics::aggregate;
use corrective_planner::orchestrator::{BehaviorKnobs, ConfigSymbol};

fn main() {
    let trials = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let manifest = RunManifest {
        scenario: "barman".into(),
        configs: ConfigSymbol::ALL.to_vec(),
        trials,
        seed: 0,
        backend: BackendChoice::scripted(BehaviorKnobs::ablation()),
        goals: vec![],
        out: std::env::temp_dir(),
        parallel: None,
    };
    let records = run_trials(&manifest).expect("bundled scenario loads");
    print!("{}", render_summary(&aggregate(&records)));
}
