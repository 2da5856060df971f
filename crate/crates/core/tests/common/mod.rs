#![allow(dead_code)]

use pistam::action::{ActionId, ActionSet, NUM_ACTIONS};
use pistam::gmm::{fit_em, EmOptions, GaussianComponent, MixtureModel};
use pistam::stam::{legality_from_values, threshold_values};
use pistam::env::HandoverEnv;
use pistam::state::*;
use pistam::EnvConfig;
use pistam::uct::{search, Gate, SearchConfig, SearchEnv};
use pistam::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Deterministic finite MDP. State `s` is observed as `body_x = 0.4·(s − 4)`,
/// which keeps distinct states ρ-distinct under the handover bounds.
#[derive(Clone, Debug)]
pub struct Tabular {
    pub next: Vec<Vec<usize>>,
    pub reward: Vec<f64>,
    pub state: usize,
    /// Actions `0..n_actions` of the MDP map to these action ids.
    pub actions: Vec<ActionId>,
}

impl Tabular {
    pub fn action_set(&self) -> ActionSet {
        self.actions.iter().copied().collect()
    }

    fn local(&self, a: ActionId) -> usize {
        self.actions.iter().position(|x| *x == a).expect("action outside the MDP")
    }

    /// Best leaf reward reachable in exactly `depth` steps after each root action.
    pub fn root_values(&self, depth: usize) -> Vec<f64> {
        fn best(m: &Tabular, s: usize, depth: usize) -> f64 {
            if depth == 0 {
                return m.reward[s];
            }
            m.next[s].iter().map(|&t| best(m, t, depth - 1)).fold(f64::NEG_INFINITY, f64::max)
        }
        self.next[self.state].iter().map(|&t| best(self, t, depth - 1)).collect()
    }
}

impl SearchEnv for Tabular {
    type Snapshot = usize;

    fn observe(&self) -> StateVector {
        let mut s = StateVector::zeros();
        s.set(BODY_X, 0.4 * (self.state as f64 - 4.0));
        s
    }

    fn reward(&self) -> f64 {
        self.reward[self.state]
    }

    fn snapshot(&self) -> usize {
        self.state
    }

    fn restore(&mut self, s: &usize) -> Result<()> {
        self.state = *s;
        Ok(())
    }

    fn step(&mut self, a: ActionId) -> Result<()> {
        self.state = self.next[self.state][self.local(a)];
        Ok(())
    }
}

/// Walk on a line: every action moves `body_y` by a per-action amount and
/// the reward is a fixed function of position. Used where every action must
/// be steppable.
#[derive(Clone, Debug)]
pub struct Line {
    pub y: f64,
    pub depth: u32,
}

impl SearchEnv for Line {
    type Snapshot = (f64, u32);

    fn observe(&self) -> StateVector {
        let mut s = StateVector::zeros();
        s.set(BODY_Y, self.y);
        s.set(BODY_X, 0.3 * self.depth as f64 - 1.0);
        s
    }

    fn reward(&self) -> f64 {
        (0.5 + 0.5 * (3.0 * self.y).sin()).clamp(0.0, 1.0)
    }

    fn snapshot(&self) -> (f64, u32) {
        (self.y, self.depth)
    }

    fn restore(&mut self, s: &(f64, u32)) -> Result<()> {
        (self.y, self.depth) = *s;
        Ok(())
    }

    fn step(&mut self, a: ActionId) -> Result<()> {
        self.y = (self.y + 0.01 * (a.index() as f64 - 13.0)).clamp(-1.9, 1.9);
        self.depth += 1;
        Ok(())
    }
}

pub fn ids(indices: &[usize]) -> Vec<ActionId> {
    indices.iter().map(|&i| ActionId::new(i).unwrap()).collect()
}

/// Mixture density evaluated directly from the formula with a Gaussian
/// elimination determinant and solve, independent of the library's
/// Cholesky path.
pub fn direct_density(model: &MixtureModel, x: &[f64]) -> f64 {
    model
        .components()
        .iter()
        .map(|c| c.weight() * gaussian_pdf(c.mean(), c.cov(), x))
        .sum()
}

pub fn gaussian_pdf(mean: &[f64], cov: &[f64], x: &[f64]) -> f64 {
    let n = mean.len();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| cov[i * n..(i + 1) * n].to_vec()).collect();
    let mut b: Vec<f64> = x.iter().zip(mean).map(|(x, m)| x - m).collect();
    let diff = b.clone();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        if pivot != col {
            a.swap(pivot, col);
            b.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut y = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / a[i][i];
    }
    let quad: f64 = diff.iter().zip(&y).map(|(d, y)| d * y).sum();
    (-0.5 * quad).exp() / ((2.0 * std::f64::consts::PI).powi(n as i32) * det).sqrt()
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// A random mixture with well-conditioned covariances.
pub fn random_model(rng: &mut ChaCha8Rng, dim: usize, k: usize) -> MixtureModel {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let comps = raw
        .iter()
        .map(|w| {
            let mean: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let a: Vec<f64> = (0..dim * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut cov = vec![0.0; dim * dim];
            for i in 0..dim {
                for j in 0..dim {
                    cov[i * dim + j] = (0..dim).map(|k| a[i * dim + k] * a[j * dim + k]).sum::<f64>();
                }
                cov[i * dim + i] += 0.3;
            }
            GaussianComponent::new(w / total, mean, cov).unwrap()
        })
        .collect();
    MixtureModel::new(comps).unwrap()
}

pub fn gaussian_samples(rng: &mut ChaCha8Rng, mean: &[f64], n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| mean.iter().map(|m| m + normal(rng)).collect()).collect()
}

/// Log-likelihood decreases beyond 1e-8 over fifty seeded fitting problems
/// with 1 to 4 components in 1 to 5 dimensions.
pub fn em_monotonicity_suite() -> usize {
    let mut violations = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.gen_range(1..=5);
        let k = rng.gen_range(1..=4);
        let true_k = rng.gen_range(1..=3);
        let truth = random_model(&mut rng, dim, true_k);
        let samples: Vec<Vec<f64>> = (0..rng.gen_range(30..150))
            .map(|_| {
                let c = &truth.components()[rng.gen_range(0..truth.components().len())];
                c.mean().iter().map(|m| m + normal(&mut rng)).collect()
            })
            .collect();
        let fit = fit_em(&samples, &EmOptions::new(k, seed)).unwrap();
        violations += fit.log_likelihood.windows(2).filter(|w| w[1] < w[0] - 1e-8).count();
    }
    violations
}

fn value_vector(pairs: &[(usize, f64)]) -> [f64; NUM_ACTIONS] {
    let mut v = [0.0; NUM_ACTIONS];
    for &(i, x) in pairs {
        v[i] = x;
    }
    v
}

/// The three threshold examples: half-max cut, all-equal values, and
/// invariance under scaling by 10. Returns a description of each failure.
pub fn threshold_examples() -> Vec<String> {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let v = value_vector(&[(1, 0.8), (2, 0.5), (3, 0.3)]);
    let s = legality_from_values(&v, 0.0, &mut rng);
    let expected: ActionSet = ids(&[1, 2]).into_iter().collect();
    if (s.lambda - 0.4).abs() > 1e-12 || s.legal != expected {
        failures.push(format!("half-max: lambda {} legal {:?}", s.lambda, s.legal));
    }
    let s = legality_from_values(&[0.37; NUM_ACTIONS], 0.0, &mut rng);
    if s.legal != ActionSet::ALL {
        failures.push(format!("all-equal: {} legal", s.legal.len()));
    }
    let scaled = v.map(|x| 10.0 * x);
    let (a, b) = (
        legality_from_values(&v, 0.3, &mut ChaCha8Rng::seed_from_u64(5)),
        legality_from_values(&scaled, 0.3, &mut ChaCha8Rng::seed_from_u64(5)),
    );
    if a.via_affordance != b.via_affordance || a.via_random != b.via_random {
        failures.push("scale by 10 changed the legal set".into());
    }
    failures
}

/// Random value vectors and positive scales for which scaling changed
/// `via_affordance`.
pub fn scale_invariance_failures(cases: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..cases {
        let mut v = [0.0; NUM_ACTIONS];
        for x in v.iter_mut() {
            *x = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.0f64).powi(3) * 10f64.powi(rng.gen_range(-30..30)) };
        }
        let c = 10f64.powf(rng.gen_range(-6.0..6.0));
        let (a, _) = threshold_values(&v);
        let (b, _) = threshold_values(&v.map(|x| x * c));
        failures += usize::from(a != b);
    }
    failures
}

/// A random 8-state, 3-action deterministic MDP rooted at state 0. Draws are
/// repeated until the root actions reach distinct states and the best root
/// action leads the runner-up by at least 0.1.
pub fn random_tabular(seed: u64) -> Tabular {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 8;
    loop {
        let m = Tabular {
            next: (0..n).map(|_| (0..3).map(|_| rng.gen_range(0..n)).collect()).collect(),
            reward: (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
            state: 0,
            actions: ids(&[0, 1, 2]),
        };
        let root = &m.next[0];
        if root[0] == root[1] || root[1] == root[2] || root[0] == root[2] {
            continue;
        }
        let mut v = m.root_values(2);
        v.sort_by(f64::total_cmp);
        if v[2] - v[1] >= 0.1 {
            return m;
        }
    }
}

/// Seeded depth-2 searches (K = 256, C = √2, ε = 0) whose greedy root label
/// attains the optimal depth-2 value found by enumeration.
pub fn tabular_oracle_matches(runs: u64) -> u64 {
    let mut matches = 0;
    for seed in 0..runs {
        let mut m = random_tabular(seed);
        let values = m.root_values(2);
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cfg = SearchConfig {
            horizon: 2,
            simulations: 256,
            exploration: std::f64::consts::SQRT_2,
            epsilon: 0.0,
            seed,
            ..Default::default()
        };
        let gate = Gate::Fixed(m.action_set());
        let out = search(&mut m, gate, &cfg).unwrap();
        let chosen = out.path[0].1.index();
        matches += u64::from(values[chosen] == best);
    }
    matches
}

/// The target projected with an explicit yaw-then-pitch rotation of the world
/// offset; `None` when behind the camera or outside either field of view.
pub fn reproject(s: &StateVector, c: &EnvConfig) -> Option<(f64, f64)> {
    let t = c.target_position;
    let (dx, dy, dz) = (t[0] - s[BODY_X], t[1] - s[BODY_Y], t[2] - c.camera_height);
    let yaw = s[BODY_HEADING] + s[HEAD_PAN];
    let (x1, y1) = (dx * yaw.cos() + dy * yaw.sin(), -dx * yaw.sin() + dy * yaw.cos());
    let p = s[HEAD_TILT];
    let (x2, z2) = (x1 * p.cos() + dz * p.sin(), -x1 * p.sin() + dz * p.cos());
    if x2 <= 0.0 {
        return None;
    }
    let u = -(y1 / x2) / (c.camera_fov / 2.0).tan();
    let v = (z2 / x2) / (c.camera_vfov / 2.0).tan();
    (u.abs() <= 1.0 && v.abs() <= 1.0).then_some((u, v))
}

pub fn check_invariants(env: &HandoverEnv) -> std::result::Result<(), String> {
    let s = env.state();
    let c = env.config();
    let r = env.reward();
    if !(0.0..=1.0).contains(&r) {
        return Err(format!("reward {r}"));
    }
    let d = (c.target_position[0] - s[BODY_X]).hypot(c.target_position[1] - s[BODY_Y]);
    if (d - s[TARGET_DISTANCE]).abs() > 1e-9 {
        return Err(format!("distance {} vs {d}", s[TARGET_DISTANCE]));
    }
    match reproject(s, c) {
        Some((u, v)) => {
            if s[TARGET_VISIBLE] != 1.0 || (u - s[IMAGE_U]).abs() > 1e-9 || (v - s[IMAGE_V]).abs() > 1e-9 {
                return Err(format!("projection ({u}, {v}) vs {:?}", (s[TARGET_VISIBLE], s[IMAGE_U], s[IMAGE_V])));
            }
        }
        None if s[TARGET_VISIBLE] != 0.0 => return Err("target visible outside the field of view".into()),
        None => {}
    }
    for base in [LEFT_ARM_DX, RIGHT_ARM_DX] {
        let n = (s[base].powi(2) + s[base + 1].powi(2) + s[base + 2].powi(2)).sqrt();
        if n > c.arm_reach_max + 1e-12 {
            return Err(format!("arm offset {n}"));
        }
    }
    s.validate().map_err(|e| e.to_string())
}
