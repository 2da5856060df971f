mod common;

use common::{ids, Line, Tabular};
use pistam::action::{ActionId, ActionSet, NUM_ACTIONS};
use pistam::env::{HandoverEnv, DEFAULT_DELTA_MAX, DEFAULT_DELTA_MIN};
use pistam::policy::random_policy_dataset;
use pistam::stam::{fit_signatures, FeatureProjection};
use pistam::state::StateBounds;
use pistam::uct::*;
use pistam::EnvConfig;
use proptest::prelude::*;

fn bandit() -> Tabular {
    Tabular {
        next: vec![vec![1, 2], vec![1, 1], vec![2, 2]],
        reward: vec![0.0, 1.0, 0.0],
        state: 0,
        actions: ids(&[0, 1]),
    }
}

fn signature() -> pistam::AffordanceSignature {
    let d = random_policy_dataset(
        &EnvConfig::default(),
        (DEFAULT_DELTA_MIN, DEFAULT_DELTA_MAX),
        200,
        1,
        0.05,
        StateBounds::handover(),
    )
    .unwrap();
    fit_signatures(&d, 2, 3, &FeatureProjection::affordance_default()).unwrap()
}

#[test]
fn ucb_formula() {
    assert_eq!(ucb_score(0.7, 0, 3, 1.0), f64::INFINITY);
    assert_eq!(ucb_score(0.5, 1, 1, 1.0), 0.5);
    let direct = 0.2 + 2.0 * (10f64.ln() / 2.0).sqrt();
    assert!((ucb_score(0.2, 2, 10, 2.0) - direct).abs() < 1e-12);
    assert!((direct - 2.3459).abs() < 1e-4);
}

#[test]
fn depth_one_bandit_picks_the_paying_arm() {
    let cfg = SearchConfig {
        horizon: 1,
        simulations: 16,
        exploration: 1.41,
        epsilon: 0.0,
        ..Default::default()
    };
    let mut env = bandit();
    let gate = Gate::Fixed(env.action_set());
    let out = search(&mut env, gate, &cfg).unwrap();
    assert_eq!(out.path.len(), 1);
    assert_eq!(out.path[0].1, ActionId::new(0).unwrap());
    let pay = out.root_edges.iter().find(|e| e.action.index() == 0).unwrap();
    let other = out.root_edges.iter().find(|e| e.action.index() == 1).unwrap();
    assert_eq!((pay.mean, other.mean), (1.0, 0.0));
    assert!(pay.visits > other.visits);
}

#[test]
fn single_legal_action_labels_every_level() {
    let (h, k) = (4, 12);
    let cfg = SearchConfig {
        horizon: h,
        simulations: k,
        ..Default::default()
    };
    let only: ActionSet = ids(&[20]).into_iter().collect();
    let out = search(&mut Line { y: 0.0, depth: 0 }, Gate::Fixed(only), &cfg).unwrap();
    assert_eq!(out.path.len(), h);
    assert!(out.path.iter().all(|(_, a)| a.index() == 20));
    assert_eq!(out.stats.evals_total, (k * h) as u64);
}

#[test]
fn baseline_evaluates_all_actions_at_every_node() {
    let cfg = SearchConfig {
        horizon: 3,
        simulations: 40,
        ..Default::default()
    };
    let out = search(&mut Line { y: 0.3, depth: 0 }, Gate::All, &cfg).unwrap();
    assert_eq!(out.stats.evals_total, 27 * out.stats.selections);
    assert_eq!(out.stats.per_node().2, 27.0);
    assert_eq!(out.stats.evals_random, 0);
}

#[test]
fn tabular_oracle() {
    let matches = common::tabular_oracle_matches(100);
    assert!(matches >= 95, "{matches}/100");
}

#[test]
fn affordance_gating_never_exceeds_baseline() {
    let sig = signature();
    let cfg = SearchConfig {
        horizon: 4,
        simulations: 32,
        epsilon: 0.0,
        ..Default::default()
    };
    let mut env = HandoverEnv::reset_default(4).unwrap();
    let out = search(&mut env, Gate::Affordance(&sig), &cfg).unwrap();
    let (_, random, total) = out.stats.per_node();
    assert_eq!(random, 0.0);
    assert!(total < 27.0, "{total}");
    for (legal, (_, a)) in out.path_legal.iter().zip(&out.path) {
        assert!(legal.contains(*a));
    }
}

#[test]
fn handover_search_is_deterministic() {
    let sig = signature();
    let cfg = SearchConfig {
        simulations: 24,
        seed: 77,
        ..Default::default()
    };
    let run = || {
        let mut env = HandoverEnv::reset_default(9).unwrap();
        search(&mut env, Gate::Affordance(&sig), &cfg).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.path, b.path);
    assert_eq!(a.root_edges, b.root_edges);
    let strip = |s: &ExpansionStats| ExpansionStats {
        wallclock_ms: 0.0,
        ..s.clone()
    };
    assert_eq!(strip(&a.stats), strip(&b.stats));
}

#[test]
fn parallel_search_conserves_visits() {
    let cfg = SearchConfig {
        simulations: 90,
        threads: 3,
        ..Default::default()
    };
    let out = search_parallel(&mut Line { y: 0.0, depth: 0 }, Gate::All, &cfg).unwrap();
    assert_eq!(out.root_edges.iter().map(|e| e.visits).sum::<u64>(), 90);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn search_invariants(y in -1.0..1.0f64, k in 1usize..60, h in 1usize..5, eps in 0.0..1.0f64, seed in any::<u64>()) {
        let sig = signature();
        let cfg = SearchConfig { horizon: h, simulations: k, epsilon: eps, seed, ..Default::default() };
        let mut env = HandoverEnv::reset_default(seed).unwrap();
        let before = *env.state();
        let out = search(&mut env, Gate::Affordance(&sig), &cfg).unwrap();
        prop_assert_eq!(*env.state(), before);
        prop_assert_eq!(out.root_edges.iter().map(|e| e.visits).sum::<u64>(), k as u64);
        prop_assert!(out.path.len() <= h && !out.path.is_empty());
        prop_assert!(out.value_range.0 >= 0.0 && out.value_range.1 <= 1.0);
        for (legal, (_, a)) in out.path_legal.iter().zip(&out.path) {
            prop_assert!(legal.contains(*a));
        }
        let (_, _, per_node) = out.stats.per_node();
        prop_assert!(per_node <= NUM_ACTIONS as f64);

        let mut line = Line { y, depth: 0 };
        let out = search(&mut line, Gate::All, &cfg).unwrap();
        prop_assert_eq!(out.root_edges.iter().map(|e| e.visits).sum::<u64>(), k as u64);
        prop_assert!(out.value_range.0 >= 0.0 && out.value_range.1 <= 1.0);
    }
}
