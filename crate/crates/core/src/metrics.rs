//! Trial records, edit distance and per-configuration aggregates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::orchestrator::{ConfigSymbol, Episode, Phase};
use crate::scenario::{check_blocks, Goal, Recipe, ScenarioSpec};
use crate::world::{Parent, WorldState};

/// Non-negative fraction kept in lowest terms, so distances compare exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Rational {
    num: u64,
    den: u64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Rational {
    pub const ZERO: Rational = Rational { num: 0, den: 1 };

    pub fn new(num: u64, den: u64) -> Self {
        assert!(den != 0, "zero denominator");
        let g = gcd(num, den).max(1);
        Rational { num: num / g, den: den / g }
    }

    pub fn integer(n: u64) -> Self {
        Rational { num: n, den: 1 }
    }

    pub fn numer(self) -> u64 {
        self.num
    }

    pub fn denom(self) -> u64 {
        self.den
    }

    pub fn is_zero(self) -> bool {
        self.num == 0
    }

    pub fn scale(self, k: u64) -> Self {
        Rational::new(self.num * k, self.den)
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Add for Rational {
    type Output = Rational;
    fn add(self, o: Rational) -> Rational {
        Rational::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        ((self.num as u128) * (o.den as u128)).cmp(&((o.num as u128) * (self.den as u128)))
    }
}

/// Decimal when the denominator divides a power of ten, `a/b` otherwise.
impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = self.den;
        let mut digits = 0;
        while d % 10 == 0 {
            d /= 10;
            digits += 1;
        }
        while d % 2 == 0 || d % 5 == 0 {
            if d % 2 == 0 {
                d /= 2;
            } else {
                d /= 5;
            }
            digits += 1;
        }
        if d != 1 {
            return write!(f, "{}/{}", self.num, self.den);
        }
        let scale = 10u64.pow(digits);
        let scaled = self.num * (scale / self.den);
        let int = scaled / scale;
        if digits == 0 {
            write!(f, "{int}")
        } else {
            let frac = format!("{:0width$}", scaled % scale, width = digits as usize);
            write!(f, "{int}.{}", frac.trim_end_matches('0')).map(|_| ())?;
            Ok(())
        }
    }
}

impl std::str::FromStr for Rational {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("not a non-negative rational: {s}");
        if let Some((a, b)) = s.split_once('/') {
            let (a, b) = (a.parse().map_err(|_| bad())?, b.parse::<u64>().map_err(|_| bad())?);
            if b == 0 {
                return Err(bad());
            }
            return Ok(Rational::new(a, b));
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        let int: u64 = int.parse().map_err(|_| bad())?;
        if frac.is_empty() {
            return Ok(Rational::integer(int));
        }
        let f: u64 = frac.parse().map_err(|_| bad())?;
        let den = 10u64.pow(frac.len() as u32);
        Ok(Rational::new(int * den + f, den))
    }
}

impl From<Rational> for String {
    fn from(r: Rational) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for Rational {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceWeights {
    pub superfluous: Rational,
    pub missing: Rational,
}

impl Default for DistanceWeights {
    fn default() -> Self {
        DistanceWeights {
            superfluous: Rational::new(1, 5),
            missing: Rational::integer(1),
        }
    }
}

/// Weighted count of ingredients that should not be there plus those that
/// are missing.
pub fn edit_distance(result: &BTreeSet<String>, recipe: &Recipe, w: DistanceWeights) -> Rational {
    let allowed = recipe.allowed();
    let superfluous = result.iter().filter(|x| !allowed.contains(*x)).count() as u64;
    let missing = recipe.mandatory().iter().filter(|x| !result.contains(*x)).count() as u64;
    w.superfluous.scale(superfluous) + w.missing.scale(missing)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scenario: String,
    pub goal: String,
    pub config: ConfigSymbol,
    pub seed: u64,
    pub executable: bool,
    pub correct: Option<bool>,
    pub distance: Option<Rational>,
    pub hl_replans: u32,
    pub ml_repairs: u32,
    /// Wall-clock seconds per phase.
    pub durations: BTreeMap<Phase, f64>,
}

/// Blocks resting on the wrong support, as a distance.
fn blocks_distance(spec: &ScenarioSpec, goal: &crate::scenario::BlocksGoal, state: &WorldState, w: DistanceWeights) -> Rational {
    let table = spec.table();
    let wrong = goal
        .blocks()
        .filter(|b| {
            let want = match goal.support(b) {
                Some(Some(below)) => Parent::Entity((*below).clone()),
                _ => Parent::Entity(table.clone()),
            };
            state.get(b).map(|e| &e.parent) != Some(&want)
        })
        .count() as u64;
    w.missing.scale(wrong)
}

impl TrialRecord {
    pub fn from_episode(spec: &ScenarioSpec, goal_name: &str, config: ConfigSymbol, seed: u64, ep: &Episode) -> Self {
        let executable = ep.outcome.is_executable();
        let w = DistanceWeights::default();
        let (correct, distance) = if executable {
            match spec.resolve_goal(&ep.request) {
                Ok(Goal::Recipe(r)) => (
                    Some(spec.check_recipe(r, &ep.final_state).is_met()),
                    Some(edit_distance(&spec.served_contents(r, &ep.final_state), r, w)),
                ),
                Ok(Goal::Blocks(g)) => (
                    Some(check_blocks(g, spec.table(), &ep.final_state).is_met()),
                    Some(blocks_distance(spec, g, &ep.final_state, w)),
                ),
                Err(_) => (Some(false), None),
            }
        } else {
            (None, None)
        };
        TrialRecord {
            scenario: spec.name.clone(),
            goal: goal_name.to_string(),
            config,
            seed,
            executable,
            correct,
            distance,
            hl_replans: ep.hl_replans,
            ml_repairs: ep.ml_repairs,
            durations: ep.timings.iter().map(|(p, d)| (*p, d.as_secs_f64())).collect(),
        }
    }

    pub fn total_seconds(&self) -> f64 {
        self.durations.values().sum()
    }
}

/// Columns of the trial table. Durations come last so determinism checks
/// can drop them by position.
pub fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "scenario",
        "goal",
        "config",
        "seed",
        "executable",
        "correct",
        "distance",
        "hl_replans",
        "ml_repairs",
        "total_s",
    ]
    .into_iter()
    .map(String::from)
    .collect();
    h.extend(Phase::ALL.iter().map(|p| format!("{}_s", p.as_str())));
    h
}

/// Index of the first duration column.
pub const FIRST_DURATION_COLUMN: usize = 9;

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trials_csv<W: io::Write>(out: W, trials: &[TrialRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header())?;
    for t in trials {
        let mut row = vec![
            t.scenario.clone(),
            t.goal.clone(),
            t.config.to_string(),
            t.seed.to_string(),
            t.executable.to_string(),
            opt(&t.correct),
            opt(&t.distance),
            t.hl_replans.to_string(),
            t.ml_repairs.to_string(),
            format!("{:.6}", t.total_seconds()),
        ];
        row.extend(
            Phase::ALL
                .iter()
                .map(|p| format!("{:.6}", t.durations.get(p).copied().unwrap_or(0.0))),
        );
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Drops duration columns from a trial table, for byte comparisons.
pub fn strip_durations(csv_text: &str) -> String {
    csv_text
        .lines()
        .map(|l| l.split(',').take(FIRST_DURATION_COLUMN).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p90: f64,
    pub max: f64,
}

/// Nearest-rank percentiles of `values`.
pub fn percentiles(values: &[f64]) -> Percentiles {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = |q: f64| {
        if v.is_empty() {
            return 0.0;
        }
        let i = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
        v[i - 1]
    };
    Percentiles {
        p50: rank(0.5),
        p90: rank(0.9),
        max: v.last().copied().unwrap_or(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config: ConfigSymbol,
    pub trials: usize,
    pub executability: f64,
    pub hl_replans_total: u64,
    pub hl_replans_mean: f64,
    pub ml_repairs_total: u64,
    pub ml_repairs_mean: f64,
    /// Among executable trials; `None` when none were executable.
    pub correctness: Option<f64>,
    /// Trial count per distance value.
    pub distance_histogram: BTreeMap<String, usize>,
    pub total_seconds: Percentiles,
}

/// Baseline and mid-level-only executability recomputed from a replanning
/// configuration by treating every trial that needed a high-level replan as
/// not executable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedColumns {
    pub source: ConfigSymbol,
    pub baseline_executability: f64,
    /// Only meaningful for configurations with mid-level repair.
    pub midlevel_executability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub configs: Vec<ConfigSummary>,
    pub derived: Vec<DerivedColumns>,
}

impl SummaryTable {
    pub fn get(&self, c: ConfigSymbol) -> Option<&ConfigSummary> {
        self.configs.iter().find(|s| s.config == c)
    }

    pub fn derived_from(&self, c: ConfigSymbol) -> Option<&DerivedColumns> {
        self.derived.iter().find(|d| d.source == c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

fn rate(n: usize, of: usize) -> f64 {
    if of == 0 {
        0.0
    } else {
        n as f64 / of as f64
    }
}

pub fn aggregate(trials: &[TrialRecord]) -> SummaryTable {
    let mut by: BTreeMap<ConfigSymbol, Vec<&TrialRecord>> = BTreeMap::new();
    for t in trials {
        by.entry(t.config).or_default().push(t);
    }
    let mut configs = Vec::new();
    let mut derived = Vec::new();
    for (config, ts) in by {
        let n = ts.len();
        let exec: Vec<&&TrialRecord> = ts.iter().filter(|t| t.executable).collect();
        let hl: u64 = ts.iter().map(|t| t.hl_replans as u64).sum();
        let ml: u64 = ts.iter().map(|t| t.ml_repairs as u64).sum();
        let mut hist = BTreeMap::new();
        let mut dists: Vec<Rational> = exec.iter().filter_map(|t| t.distance).collect();
        dists.sort();
        for d in dists {
            *hist.entry(d.to_string()).or_insert(0) += 1;
        }
        let totals: Vec<f64> = ts.iter().map(|t| t.total_seconds()).collect();
        configs.push(ConfigSummary {
            config,
            trials: n,
            executability: rate(exec.len(), n),
            hl_replans_total: hl,
            hl_replans_mean: hl as f64 / n as f64,
            ml_repairs_total: ml,
            ml_repairs_mean: ml as f64 / n as f64,
            correctness: (!exec.is_empty()).then(|| rate(exec.iter().filter(|t| t.correct == Some(true)).count(), exec.len())),
            distance_histogram: hist,
            total_seconds: percentiles(&totals),
        });
        if config.highlevel() {
            let first_try = ts.iter().filter(|t| t.executable && t.hl_replans == 0);
            let bl = first_try.clone().filter(|t| t.ml_repairs == 0).count();
            derived.push(DerivedColumns {
                source: config,
                baseline_executability: rate(bl, n),
                midlevel_executability: config.midlevel().then(|| rate(first_try.count(), n)),
            });
        }
    }
    SummaryTable { configs, derived }
}
