mod common;

use pistam::action::{ActionId, NUM_ACTIONS};
use pistam::dataset::{LabeledDataset, DEFAULT_RHO};
use pistam::env::{DEFAULT_DELTA_MAX, DEFAULT_DELTA_MIN};
use pistam::policy::*;
use pistam::state::{StateBounds, StateVector, BODY_X, BODY_Y, HEAD_PAN};
use pistam::{EnvConfig, Error};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SIGMA: f64 = 0.05;

fn around(rng: &mut ChaCha8Rng, center: [f64; 2]) -> StateVector {
    let mut s = StateVector::zeros();
    s.set(BODY_X, center[0] + SIGMA * common::normal(rng));
    s.set(BODY_Y, center[1] + SIGMA * common::normal(rng));
    s
}

fn dataset(pairs: Vec<(StateVector, ActionId)>, rho: f64) -> LabeledDataset {
    LabeledDataset::from_pairs(rho, StateBounds::handover(), pairs).unwrap()
}

fn delta() -> (f64, f64) {
    (DEFAULT_DELTA_MIN, DEFAULT_DELTA_MAX)
}

#[test]
fn separated_clusters_classify_perfectly() {
    let centers = [[-0.25, 0.0], [0.25, 0.0]];
    let labels = [ActionId::BODY_LEFT, ActionId::HEAD_UP];
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let pairs = (0..200).map(|i| (around(&mut rng, centers[i % 2]), labels[i % 2])).collect();
    let p = train_policy(&dataset(pairs, 1e-9), 3, 5).unwrap();
    let mut correct = 0;
    for i in 0..100 {
        let truth = i % 2;
        correct += usize::from(p.act(&around(&mut rng, centers[truth])).unwrap() == labels[truth]);
    }
    assert_eq!(correct, 100);
}

#[test]
fn class_frequencies_become_priors() {
    let mut pairs = Vec::new();
    for i in 0..100 {
        let mut s = StateVector::zeros();
        s.set(BODY_X, -1.9 + 0.38 * (i % 10) as f64);
        s.set(BODY_Y, -1.9 + 0.38 * (i / 10) as f64);
        pairs.push((s, if i < 30 { ActionId::new(3).unwrap() } else { ActionId::new(12).unwrap() }));
    }
    let p = train_policy(&dataset(pairs, DEFAULT_RHO), 2, 0).unwrap();
    assert_eq!(p.prior(ActionId::new(3).unwrap()), 0.3);
    assert_eq!(p.prior(ActionId::new(12).unwrap()), 0.7);
    assert!((p.priors().iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn single_class_wins_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pairs = (0..20).map(|_| (around(&mut rng, [0.5, 0.5]), ActionId::NULL)).collect();
    let p = train_policy(&dataset(pairs, DEFAULT_RHO), 3, 0).unwrap();
    for x in [-1.9, 0.0, 1.9] {
        let mut s = StateVector::zeros();
        s.set(BODY_X, x);
        s.set(HEAD_PAN, -x);
        assert_eq!(p.act(&s).unwrap(), ActionId::NULL);
    }
}

#[test]
fn state_at_a_class_mean_selects_that_class() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pairs: Vec<_> = (0..30).map(|_| (around(&mut rng, [-1.0, -1.0]), ActionId::new(7).unwrap())).collect();
    pairs.extend((0..30).map(|_| (around(&mut rng, [1.0, 1.0]), ActionId::new(2).unwrap())));
    let p = train_policy(&dataset(pairs, 1e-9), 1, 0).unwrap();
    let m = p.model(ActionId::new(7).unwrap()).unwrap().components()[0].mean().to_vec();
    let b = StateBounds::handover();
    let mut s = StateVector::zeros();
    s.set(BODY_X, b.min[BODY_X] + m[BODY_X] * (b.max[BODY_X] - b.min[BODY_X]));
    s.set(BODY_Y, b.min[BODY_Y] + m[BODY_Y] * (b.max[BODY_Y] - b.min[BODY_Y]));
    assert_eq!(p.act(&s).unwrap(), ActionId::new(7).unwrap());
}

#[test]
fn duplicated_models_tie_to_the_lower_index() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pairs = (0..20).map(|_| (around(&mut rng, [0.0, 0.0]), ActionId::new(9).unwrap())).collect();
    let p = train_policy(&dataset(pairs, DEFAULT_RHO), 1, 0).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
    let class = doc["classes"]["9"].clone();
    doc["classes"]["9"]["prior"] = 0.5.into();
    doc["classes"]["5"] = class;
    doc["classes"]["5"]["prior"] = 0.5.into();
    let tied = PolicyModel::from_json(&doc.to_string()).unwrap();
    for x in [-1.0, 0.0, 0.7] {
        let mut s = StateVector::zeros();
        s.set(BODY_X, x);
        assert_eq!(tied.act(&s).unwrap(), ActionId::new(5).unwrap());
    }
}

#[test]
fn untrained_policy_is_an_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs = (0..5).map(|_| (around(&mut rng, [0.0, 0.0]), ActionId::NULL)).collect();
    let trained = train_policy(&dataset(pairs, DEFAULT_RHO), 1, 0).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&trained.to_json()).unwrap();
    doc["classes"] = serde_json::json!({});
    let p = PolicyModel::from_json(&doc.to_string()).unwrap();
    assert!(matches!(p.act(&StateVector::zeros()), Err(Error::UntrainedPolicy)));
    assert!(matches!(train_policy(&LabeledDataset::new(DEFAULT_RHO), 3, 0), Err(Error::EmptyDataset)));
}

#[test]
fn random_actions_are_uniform() {
    let pairs = random_pairs(&EnvConfig::default(), delta(), 10_000, 17).unwrap();
    let mut counts = [0usize; NUM_ACTIONS];
    for (_, a) in &pairs {
        counts[a.index()] += 1;
    }
    for (i, c) in counts.iter().enumerate() {
        let f = *c as f64 / pairs.len() as f64;
        assert!((f - 1.0 / 27.0).abs() <= 0.02, "action {i}: {f}");
    }
}

#[test]
fn random_dataset_size_and_determinism() {
    let make = |seed| random_policy_dataset(&EnvConfig::default(), delta(), 10, seed, DEFAULT_RHO, StateBounds::handover()).unwrap();
    let d = make(4);
    assert!(!d.is_empty() && d.len() <= 10);
    assert_eq!(d, make(4));
    assert!(random_pairs(&EnvConfig::default(), delta(), 0, 4).is_err());
}

#[test]
fn retraining_is_bit_identical_and_skips_absent_actions() {
    let d = random_policy_dataset(&EnvConfig::default(), delta(), 150, 6, DEFAULT_RHO, StateBounds::handover()).unwrap();
    let (a, b) = (train_policy(&d, 3, 11).unwrap(), train_policy(&d, 3, 11).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.to_json(), b.to_json());
    let counts = d.class_counts();
    for act in ActionId::all() {
        assert_eq!(a.model(act).is_some(), counts[act.index()] > 0, "{act:?}");
    }
    let back = PolicyModel::from_json(&a.to_json()).unwrap();
    assert_eq!(back, a);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prior_scale_does_not_change_actions(seed in any::<u64>(), c in 1e-4..1e4f64) {
        let d = random_policy_dataset(&EnvConfig::default(), delta(), 60, seed, DEFAULT_RHO, StateBounds::handover()).unwrap();
        let p = train_policy(&d, 2, seed).unwrap();
        let scaled = p.with_scaled_priors(c);
        for (s, _) in random_pairs(&EnvConfig::default(), delta(), 20, seed ^ 1).unwrap() {
            prop_assert_eq!(p.act(&s).unwrap(), scaled.act(&s).unwrap());
        }
    }
}
