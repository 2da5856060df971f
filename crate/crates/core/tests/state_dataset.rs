use pistam::action::ActionId;
use pistam::dataset::LabeledDataset;
use pistam::state::*;
use proptest::prelude::*;

fn bounds() -> StateBounds {
    StateBounds::handover()
}

fn raw_state() -> impl Strategy<Value = StateVector> {
    let b = bounds();
    proptest::array::uniform18(0.0..1.0f64).prop_map(move |u| {
        let mut s = StateVector::zeros();
        for d in 0..STATE_DIM {
            let v = if is_bit_field(d) {
                (u[d] > 0.5) as u8 as f64
            } else {
                b.min[d] + u[d] * (b.max[d] - b.min[d])
            };
            s.set(d, v);
        }
        s
    })
}

/// States on a coarse lattice so that ρ-equal pairs occur often.
fn lattice_state() -> impl Strategy<Value = StateVector> {
    (0..4u8, 0..4u8).prop_map(|(i, j)| {
        let mut s = StateVector::zeros();
        s.set(BODY_X, -1.0 + 0.1 * i as f64);
        s.set(BODY_Y, -1.0 + 0.1 * j as f64);
        s
    })
}

fn labeled(max: usize) -> impl Strategy<Value = Vec<(StateVector, ActionId)>> {
    proptest::collection::vec((lattice_state(), 0..27usize), 0..max)
        .prop_map(|v| v.into_iter().map(|(s, a)| (s, ActionId::new(a).unwrap())).collect())
}

fn dataset(pairs: &[(StateVector, ActionId)]) -> LabeledDataset {
    LabeledDataset::from_pairs(0.05, bounds(), pairs.iter().copied()).unwrap()
}

#[test]
fn normalization_matches_per_dimension_affine_map() {
    let mut min = [0.0; STATE_DIM];
    let mut max = [0.0; STATE_DIM];
    let mut s = StateVector::zeros();
    for d in 0..STATE_DIM {
        min[d] = -(d as f64) - 0.5;
        max[d] = 2.0 * d as f64 + 1.0;
        let v = if is_bit_field(d) { (d % 2) as f64 } else { min[d] + 0.37 * (d as f64 + 1.0) };
        s.set(d, v);
    }
    let b = StateBounds::new(min, max).unwrap();
    let n = b.normalize(&s).unwrap();
    for d in 0..STATE_DIM {
        let expected = if is_bit_field(d) { s[d] } else { (s[d] - min[d]) / (max[d] - min[d]) };
        assert!((n[d] - expected).abs() <= 1e-12, "dim {d}");
    }
}

#[test]
fn normalization_trivial_examples() {
    let mut min = [0.0; STATE_DIM];
    let mut max = [1.0; STATE_DIM];
    min[BODY_X] = 0.0;
    max[BODY_X] = 2.0;
    let b = StateBounds::new(min, max).unwrap();
    let mut s = StateVector::zeros();
    s.set(BODY_X, 1.0);
    assert_eq!(b.normalize(&s).unwrap()[BODY_X], 0.5);
    s.set(BODY_X, 0.0);
    assert_eq!(b.normalize(&s).unwrap()[BODY_X], 0.0);
}

#[test]
fn equality_examples() {
    let s = StateVector::zeros();
    assert!(states_equal(&s, &s, 0.01));
    assert!(!states_equal(&s, &s, 0.0));
    let mut t = s;
    t.set(HEAD_PAN, 0.10);
    assert!(!states_equal(&s, &t, 0.05));
}

#[test]
fn equality_is_not_transitive() {
    let a = StateVector::zeros();
    let mut b = a;
    b.set(BODY_X, 0.03);
    let mut c = a;
    c.set(BODY_X, 0.06);
    assert!(states_equal(&a, &b, 0.05));
    assert!(states_equal(&b, &c, 0.05));
    assert!(!states_equal(&a, &c, 0.05));
}

#[test]
fn new_label_replaces_equal_old_state() {
    let s = StateVector::zeros();
    let mut s2 = s;
    s2.set(BODY_X, 0.01);
    let (a1, a2) = (ActionId::new(1).unwrap(), ActionId::new(2).unwrap());
    let d = dataset(&[(s, a1)]);
    let out = d.aggregate(&dataset(&[(s2, a2)])).unwrap();
    assert_eq!(out.pairs(), &[(s2, a2)]);
    assert_eq!(d.aggregate(&LabeledDataset::with_bounds(0.05, bounds())).unwrap().pairs(), d.pairs());
}

/// Brute-force dedup: keep a pair iff no later pair is ρ-equal to it.
fn oracle_dedup(pairs: &[(StateVector, ActionId)], rho: f64) -> Vec<(StateVector, ActionId)> {
    let b = bounds();
    let n: Vec<_> = pairs.iter().map(|(s, _)| b.normalize(s).unwrap()).collect();
    (0..pairs.len())
        .filter(|&i| !(i + 1..pairs.len()).any(|j| states_equal(&n[i], &n[j], rho)))
        .map(|i| pairs[i])
        .collect()
}

#[test]
fn duplicate_new_states_keep_last_label() {
    let s = StateVector::zeros();
    let mut s2 = s;
    s2.set(BODY_Y, 0.02);
    let pairs = [(s, ActionId::new(1).unwrap()), (s2, ActionId::new(2).unwrap())];
    let out = LabeledDataset::with_bounds(0.05, bounds()).aggregate(&dataset(&pairs)).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out.pairs()[0].1, ActionId::new(2).unwrap());
    assert_eq!(out.pairs(), oracle_dedup(&pairs, 0.05).as_slice());
}

proptest! {
    #[test]
    fn equality_is_symmetric_and_reflexive(a in raw_state(), b in raw_state(), rho in 1e-6..0.5f64) {
        let (na, nb) = (bounds().normalize(&a).unwrap(), bounds().normalize(&b).unwrap());
        prop_assert!(states_equal(&na, &na, rho));
        prop_assert_eq!(states_equal(&na, &nb, rho), states_equal(&nb, &na, rho));
    }

    #[test]
    fn aggregation_invariants(old in labeled(12), new in labeled(12)) {
        let d = dataset(&old);
        let n = dataset(&new);
        let out = d.aggregate(&n).unwrap();
        prop_assert!(out.len() <= d.len() + n.len());
        let b = bounds();
        let norm: Vec<_> = out.iter().map(|(s, _)| b.normalize(s).unwrap()).collect();
        for i in 0..norm.len() {
            for j in i + 1..norm.len() {
                prop_assert!(!states_equal(&norm[i], &norm[j], 0.05));
            }
        }
        let twice = out.aggregate(&n).unwrap();
        prop_assert_eq!(twice.pairs(), out.pairs());
    }

    #[test]
    fn construction_matches_brute_force_dedup(pairs in labeled(16)) {
        let (got, expected) = (dataset(&pairs), oracle_dedup(&pairs, 0.05));
        prop_assert_eq!(got.pairs(), expected.as_slice());
    }
}
