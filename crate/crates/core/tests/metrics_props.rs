use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use corrective_planner::action::eid;
use corrective_planner::metrics::{aggregate, edit_distance, DistanceWeights, Rational, TrialRecord};
use corrective_planner::orchestrator::{ConfigSymbol, Phase};
use corrective_planner::scenario::Recipe;

const POOL: [&str; 10] = ["gin", "vodka", "lime", "mint", "sugar", "salt", "olive", "tonic", "basil", "ice"];

fn recipe(mandatory: &[usize], optional: &[usize]) -> Recipe {
    Recipe {
        name: "Test".into(),
        mandatory_solids: mandatory.iter().filter(|i| *i % 2 == 0).map(|i| eid(POOL[*i])).collect(),
        mandatory_liquids: mandatory.iter().filter(|i| *i % 2 == 1).map(|i| POOL[*i].to_string()).collect(),
        optional: optional.iter().filter(|i| !mandatory.contains(i)).map(|i| POOL[*i].to_string()).collect(),
        vessel_category: "glass".into(),
    }
}

/// Distance in fifths, counted by hand.
fn fifths(result: &BTreeSet<String>, mandatory: &BTreeSet<usize>, optional: &BTreeSet<usize>) -> u64 {
    let names = |s: &BTreeSet<usize>| s.iter().map(|i| POOL[*i].to_string()).collect::<BTreeSet<_>>();
    let (m, o) = (names(mandatory), names(optional));
    let extra = result.iter().filter(|x| !m.contains(*x) && !o.contains(*x)).count() as u64;
    let missing = m.iter().filter(|x| !result.contains(*x)).count() as u64;
    extra + 5 * missing
}

fn as_fifths(r: Rational) -> Option<u64> {
    (r.numer() * 5 % r.denom() == 0).then(|| r.numer() * 5 / r.denom())
}

fn index_set() -> impl Strategy<Value = BTreeSet<usize>> {
    prop::collection::btree_set(0..POOL.len(), 0..6)
}

fn trial() -> impl Strategy<Value = TrialRecord> {
    (0usize..8, 0u64..5, any::<bool>(), 0u32..6, 0u32..6, 0u32..20, 0u32..1000).prop_map(|(c, seed, exec, hl, ml, dist, ms)| {
        TrialRecord {
            scenario: "test".into(),
            goal: format!("goal{}", seed % 3),
            config: ConfigSymbol::ALL[c],
            seed,
            executable: exec,
            correct: exec.then_some(dist == 0),
            distance: exec.then(|| Rational::new(dist as u64, 5)),
            hl_replans: if ConfigSymbol::ALL[c].highlevel() { hl } else { 0 },
            ml_repairs: if ConfigSymbol::ALL[c].midlevel() { ml } else { 0 },
            durations: BTreeMap::from([(Phase::Ropa, ms as f64 / 1000.0), (Phase::Apply, 0.25)]),
        }
    })
}

proptest! {
    #[test]
    fn distance_matches_a_hand_count(mand in index_set(), opt in index_set(), got in index_set()) {
        let opt: BTreeSet<usize> = opt.difference(&mand).copied().collect();
        let r = recipe(&mand.iter().copied().collect::<Vec<_>>(), &opt.iter().copied().collect::<Vec<_>>());
        let result: BTreeSet<String> = got.iter().map(|i| POOL[*i].to_string()).collect();
        let d = edit_distance(&result, &r, DistanceWeights::default());
        prop_assert_eq!(as_fifths(d), Some(fifths(&result, &mand, &opt)));
        prop_assert_eq!(d.is_zero(), fifths(&result, &mand, &opt) == 0);
    }

    #[test]
    fn distance_is_monotone(mand in index_set(), got in index_set(), add in 0..POOL.len()) {
        let r = recipe(&mand.iter().copied().collect::<Vec<_>>(), &[]);
        let result: BTreeSet<String> = got.iter().map(|i| POOL[*i].to_string()).collect();
        let w = DistanceWeights::default();
        let before = edit_distance(&result, &r, w);
        let mut more = result.clone();
        more.insert(POOL[add].to_string());
        let after = edit_distance(&more, &r, w);
        if result.contains(POOL[add]) {
            prop_assert_eq!(after, before);
        } else if mand.contains(&add) {
            prop_assert!(after < before);
            prop_assert_eq!(after + Rational::integer(1), before);
        } else {
            prop_assert_eq!(after, before + Rational::new(1, 5));
        }
    }

    #[test]
    fn aggregate_ignores_trial_order(trials in prop::collection::vec(trial(), 1..60), rot in 0usize..60) {
        let mut shuffled = trials.clone();
        shuffled.reverse();
        let n = shuffled.len();
        shuffled.rotate_left(rot % n);
        prop_assert_eq!(aggregate(&shuffled).to_json(), aggregate(&trials).to_json());
    }

    #[test]
    fn derived_columns_are_ordered(trials in prop::collection::vec(trial(), 1..80)) {
        let s = aggregate(&trials);
        for d in &s.derived {
            let exec = s.get(d.source).unwrap().executability;
            match d.midlevel_executability {
                Some(m) => {
                    prop_assert!(d.baseline_executability <= m);
                    prop_assert!(m <= exec);
                }
                None => prop_assert!(d.baseline_executability <= exec),
            }
        }
    }
}
