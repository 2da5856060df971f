//! Depth-limited UCT with legality-gated branching.
//!
//! The tree is an arena of nodes reached by action paths from the root.
//! The first time a node is reached its legal set is computed and every
//! legal action is simulated once from the node's snapshot, so the node's
//! children (state, snapshot, immediate reward) exist before selection.
//! Each episode then descends to depth `H` by UCB selection and backs the
//! leaf reward up every traversed edge.

use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{ActionId, ActionSet};
use crate::dataset::{LabeledDataset, DEFAULT_RHO};
use crate::error::{Error, Result};
use crate::stam::{legal_actions, AffordanceSignature, LegalitySample};
use crate::state::{states_equal, StateBounds, StateVector};

/// An environment that search can branch from.
pub trait SearchEnv {
    type Snapshot: Clone;

    fn observe(&self) -> StateVector;
    fn reward(&self) -> f64;
    fn snapshot(&self) -> Self::Snapshot;
    fn restore(&mut self, snap: &Self::Snapshot) -> Result<()>;
    fn step(&mut self, a: ActionId) -> Result<()>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub horizon: usize,
    /// Episodes per root.
    pub simulations: usize,
    pub exploration: f64,
    pub epsilon: f64,
    pub rho: f64,
    /// Seed of the ε-draw stream. The training loop derives one per root.
    #[serde(skip)]
    pub seed: u64,
    /// Applied per level between an edge and the leaf; 1 backs up the raw
    /// leaf reward.
    pub discount: f64,
    /// Share nodes whose states are ρ-equal at the same depth.
    pub merge_states: bool,
    /// Worker count; more than one runs independent trees and merges them.
    pub threads: usize,
    #[serde(skip)]
    pub bounds: StateBounds,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            horizon: 4,
            simulations: 64,
            exploration: std::f64::consts::SQRT_2,
            epsilon: 0.3,
            rho: DEFAULT_RHO,
            seed: 0,
            discount: 1.0,
            merge_states: false,
            threads: 1,
            bounds: StateBounds::handover(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.simulations == 0 {
            return Err(Error::Config("horizon and simulations must be at least 1".into()));
        }
        if !(self.exploration >= 0.0 && self.exploration.is_finite()) {
            return Err(Error::Config("exploration must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config("epsilon must be in [0, 1]".into()));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::Config("rho must be >= 0".into()));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Config("discount must be in (0, 1]".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}

/// Where a node's legal set comes from.
#[derive(Clone, Copy, Debug)]
pub enum Gate<'a> {
    /// Every action is legal (the baseline).
    All,
    Fixed(ActionSet),
    Affordance(&'a AffordanceSignature),
}

/// Counters for one search, or a sum of searches.
///
/// The `evals_*` counters add the size of the relevant legal subset at every
/// descent step, so their ratio to `selections` is the mean number of
/// candidate actions per visited node.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExpansionStats {
    pub evals_affordance: u64,
    pub evals_random: u64,
    pub evals_total: u64,
    pub selections: u64,
    /// Nodes whose legal set was computed.
    pub expansions: u64,
    /// Below-threshold ε-draws made at expansion time.
    pub draws: u64,
    /// Draws that admitted the action.
    pub admitted: u64,
    pub env_steps: u64,
    pub episodes: u64,
    pub failed_episodes: u64,
    pub wallclock_ms: f64,
}

impl ExpansionStats {
    pub const CSV_HEADER: &'static str = "iteration,root_index,evals_affordance,evals_random,evals_total,wallclock_ms";

    pub fn add(&mut self, o: &ExpansionStats) {
        self.evals_affordance += o.evals_affordance;
        self.evals_random += o.evals_random;
        self.evals_total += o.evals_total;
        self.selections += o.selections;
        self.expansions += o.expansions;
        self.draws += o.draws;
        self.admitted += o.admitted;
        self.env_steps += o.env_steps;
        self.episodes += o.episodes;
        self.failed_episodes += o.failed_episodes;
        self.wallclock_ms += o.wallclock_ms;
    }

    /// Mean candidate actions per visited node: (affordance, random, total).
    pub fn per_node(&self) -> (f64, f64, f64) {
        if self.selections == 0 {
            return (0.0, 0.0, 0.0);
        }
        let n = self.selections as f64;
        (self.evals_affordance as f64 / n, self.evals_random as f64 / n, self.evals_total as f64 / n)
    }

    pub fn csv_row(&self, iteration: usize, root_index: usize) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "{iteration},{root_index},{},{},{},{:.3}",
            self.evals_affordance, self.evals_random, self.evals_total, self.wallclock_ms
        );
        out
    }
}

/// `mean + C·√(ln n_s / n_sa)`, or `+∞` for an unvisited action.
pub fn ucb_score(value_mean: f64, n_sa: u64, n_s_total: u64, c: f64) -> f64 {
    if n_sa == 0 {
        return f64::INFINITY;
    }
    value_mean + c * ((n_s_total as f64).ln() / n_sa as f64).sqrt()
}

#[derive(Clone, Debug)]
struct Edge {
    action: ActionId,
    child: usize,
    visits: u64,
    value_sum: f64,
}

#[derive(Clone, Debug)]
struct Node<S> {
    state: StateVector,
    snapshot: Option<S>,
    reward: f64,
    depth: usize,
    legal: Option<LegalitySample>,
    edges: Vec<Edge>,
    visits: u64,
}

impl<S> Node<S> {
    fn new(state: StateVector, snapshot: S, reward: f64, depth: usize) -> Self {
        Node {
            state,
            snapshot: Some(snapshot),
            reward,
            depth,
            legal: None,
            edges: Vec::new(),
            visits: 0,
        }
    }
}

/// Visit statistics of one root edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeSummary {
    pub action: ActionId,
    pub visits: u64,
    pub mean: f64,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    /// Greedy-path labels, root first.
    pub labels: LabeledDataset,
    /// The same labels in path order, before any ρ-deduplication.
    pub path: Vec<(StateVector, ActionId)>,
    pub stats: ExpansionStats,
    pub root_edges: Vec<EdgeSummary>,
    /// Smallest and largest value mean over all visited edges.
    pub value_range: (f64, f64),
    /// Legal set of each greedy-path node.
    pub path_legal: Vec<ActionSet>,
}

struct Tree<S> {
    nodes: Vec<Node<S>>,
    by_depth: Vec<Vec<(StateVector, usize)>>,
}

impl<S: Clone> Tree<S> {
    fn new(root: Node<S>, horizon: usize) -> Self {
        Tree {
            nodes: vec![root],
            by_depth: vec![Vec::new(); horizon + 1],
        }
    }
}

/// Runs `cfg.simulations` episodes from the environment's current state and
/// returns the greedy labels. The greedy path follows the most visited edge,
/// lowest index on ties, and stops below the root at the first node whose
/// maximum visit count is shared. The environment is left at its starting
/// state.
pub fn search<E: SearchEnv>(env: &mut E, gate: Gate<'_>, cfg: &SearchConfig) -> Result<SearchOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let root_snap = env.snapshot();
    let root = Node::new(env.observe(), root_snap.clone(), env.reward(), 0);
    let mut tree = Tree::new(root, cfg.horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stats = ExpansionStats::default();
    run_episodes(env, &mut tree, gate, cfg, &mut rng, cfg.simulations, &mut stats);
    env.restore(&root_snap)?;
    stats.wallclock_ms = start.elapsed().as_secs_f64() * 1e3;
    finish(tree, stats, cfg)
}

/// Runs the episodes over `cfg.threads` independent trees, each with a clone
/// of the environment and its own ε stream, and merges the trees by action
/// path before extracting labels.
pub fn search_parallel<E>(env: &mut E, gate: Gate<'_>, cfg: &SearchConfig) -> Result<SearchOutcome>
where
    E: SearchEnv + Clone + Send,
    E::Snapshot: Send,
{
    cfg.validate()?;
    if cfg.threads == 1 {
        return search(env, gate, cfg);
    }
    let start = Instant::now();
    let root_snap = env.snapshot();
    let (state, reward) = (env.observe(), env.reward());
    let workers = cfg.threads.min(cfg.simulations);
    let results: Vec<(Tree<E::Snapshot>, ExpansionStats)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let mut local = env.clone();
                let snap = root_snap.clone();
                let episodes = cfg.simulations / workers + usize::from(w < cfg.simulations % workers);
                scope.spawn(move || {
                    let mut tree = Tree::new(Node::new(state, snap, reward, 0), cfg.horizon);
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(w as u64);
                    let mut stats = ExpansionStats::default();
                    run_episodes(&mut local, &mut tree, gate, cfg, &mut rng, episodes, &mut stats);
                    (tree, stats)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("search worker panicked")).collect()
    });
    let mut iter = results.into_iter();
    let (mut tree, mut stats) = iter.next().expect("at least one worker");
    for (other, s) in iter {
        stats.add(&s);
        merge_into(&mut tree, 0, &other, 0);
    }
    env.restore(&root_snap)?;
    stats.wallclock_ms = start.elapsed().as_secs_f64() * 1e3;
    finish(tree, stats, cfg)
}

fn merge_into<S: Clone>(dst: &mut Tree<S>, d: usize, src: &Tree<S>, s: usize) {
    dst.nodes[d].visits += src.nodes[s].visits;
    if dst.nodes[d].legal.is_none() {
        dst.nodes[d].legal = src.nodes[s].legal;
    } else if let (Some(a), Some(b)) = (&mut dst.nodes[d].legal, &src.nodes[s].legal) {
        a.legal = a.legal.union(b.legal);
    }
    for e in &src.nodes[s].edges {
        match dst.nodes[d].edges.iter().position(|x| x.action == e.action) {
            Some(i) => {
                dst.nodes[d].edges[i].visits += e.visits;
                dst.nodes[d].edges[i].value_sum += e.value_sum;
                let child = dst.nodes[d].edges[i].child;
                merge_into(dst, child, src, e.child);
            }
            None => {
                let child = graft(dst, src, e.child);
                dst.nodes[d].edges.push(Edge { child, ..e.clone() });
            }
        }
    }
    dst.nodes[d].edges.sort_by_key(|e| e.action);
}

fn graft<S: Clone>(dst: &mut Tree<S>, src: &Tree<S>, s: usize) -> usize {
    let mut node = src.nodes[s].clone();
    let edges = std::mem::take(&mut node.edges);
    let idx = dst.nodes.len();
    dst.nodes.push(node);
    for e in edges {
        let child = graft(dst, src, e.child);
        dst.nodes[idx].edges.push(Edge { child, ..e });
    }
    idx
}

fn run_episodes<E: SearchEnv>(
    env: &mut E,
    tree: &mut Tree<E::Snapshot>,
    gate: Gate<'_>,
    cfg: &SearchConfig,
    rng: &mut ChaCha8Rng,
    episodes: usize,
    stats: &mut ExpansionStats,
) {
    let mut path = Vec::with_capacity(cfg.horizon);
    for _ in 0..episodes {
        stats.episodes += 1;
        path.clear();
        match descend(env, tree, gate, cfg, rng, stats, &mut path) {
            Ok(leaf) => backpropagate(tree, &path, tree.nodes[leaf].reward, cfg),
            Err(e) => {
                log::debug!("search episode aborted: {e}");
                stats.failed_episodes += 1;
            }
        }
    }
}

fn descend<E: SearchEnv>(
    env: &mut E,
    tree: &mut Tree<E::Snapshot>,
    gate: Gate<'_>,
    cfg: &SearchConfig,
    rng: &mut ChaCha8Rng,
    stats: &mut ExpansionStats,
    path: &mut Vec<(usize, usize)>,
) -> Result<usize> {
    let mut node = 0;
    while tree.nodes[node].depth < cfg.horizon {
        if tree.nodes[node].legal.is_none() {
            expand(env, tree, node, gate, cfg, rng, stats)?;
        }
        let n = &tree.nodes[node];
        let legal = n.legal.expect("expanded above");
        stats.selections += 1;
        stats.evals_total += legal.legal.len() as u64;
        stats.evals_affordance += legal.via_affordance.len() as u64;
        stats.evals_random += legal.via_random.len() as u64;
        let pick = select(n, cfg.exploration);
        path.push((node, pick));
        node = n.edges[pick].child;
    }
    Ok(node)
}

fn expand<E: SearchEnv>(
    env: &mut E,
    tree: &mut Tree<E::Snapshot>,
    node: usize,
    gate: Gate<'_>,
    cfg: &SearchConfig,
    rng: &mut ChaCha8Rng,
    stats: &mut ExpansionStats,
) -> Result<()> {
    let state = tree.nodes[node].state;
    let legal = match gate {
        Gate::All => LegalitySample::all(),
        Gate::Fixed(set) => LegalitySample::fixed(set),
        Gate::Affordance(sig) => legal_actions(&state, sig, cfg.epsilon, rng),
    };
    stats.expansions += 1;
    stats.draws += legal.draws as u64;
    stats.admitted += legal.via_random.len() as u64;

    let depth = tree.nodes[node].depth + 1;
    let snap = tree.nodes[node].snapshot.clone().expect("internal nodes keep snapshots");
    let mut children = Vec::with_capacity(legal.legal.len());
    for a in legal.legal.iter() {
        env.restore(&snap)?;
        env.step(a)?;
        stats.env_steps += 1;
        let s = env.observe();
        let snapshot = (depth < cfg.horizon).then(|| env.snapshot());
        children.push((a, s, env.reward(), snapshot));
    }

    let mut edges = Vec::with_capacity(children.len());
    for (a, s, reward, snapshot) in children {
        let shared = if cfg.merge_states {
            let n = cfg.bounds.normalize(&s)?;
            let found = tree.by_depth[depth].iter().find(|(m, _)| states_equal(m, &n, cfg.rho)).map(|(_, i)| *i);
            if found.is_none() {
                tree.by_depth[depth].push((n, tree.nodes.len()));
            }
            found
        } else {
            None
        };
        let child = shared.unwrap_or_else(|| {
            tree.nodes.push(Node {
                state: s,
                snapshot,
                reward,
                depth,
                legal: None,
                edges: Vec::new(),
                visits: 0,
            });
            tree.nodes.len() - 1
        });
        edges.push(Edge {
            action: a,
            child,
            visits: 0,
            value_sum: 0.0,
        });
    }
    let n = &mut tree.nodes[node];
    n.edges = edges;
    n.legal = Some(legal);
    Ok(())
}

/// Unvisited edges first (lowest action), then the highest UCB score with
/// ties to the lowest action. Edges are kept in action order.
fn select<S>(n: &Node<S>, c: f64) -> usize {
    if let Some(i) = n.edges.iter().position(|e| e.visits == 0) {
        return i;
    }
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, e) in n.edges.iter().enumerate() {
        let score = ucb_score(e.value_sum / e.visits as f64, e.visits, n.visits, c);
        if score > best_score {
            best_score = score;
            best = i;
        }
    }
    best
}

fn backpropagate<S>(tree: &mut Tree<S>, path: &[(usize, usize)], leaf_reward: f64, cfg: &SearchConfig) {
    for &(node, edge) in path {
        let depth = tree.nodes[node].depth;
        let g = cfg.discount.powi((cfg.horizon - depth - 1) as i32) * leaf_reward;
        let n = &mut tree.nodes[node];
        n.visits += 1;
        n.edges[edge].visits += 1;
        n.edges[edge].value_sum += g;
    }
}

fn finish<S>(tree: Tree<S>, stats: ExpansionStats, cfg: &SearchConfig) -> Result<SearchOutcome> {
    if stats.failed_episodes == stats.episodes {
        return Err(Error::SearchFailed(stats.episodes as usize));
    }
    let mut path = Vec::new();
    let mut path_legal = Vec::new();
    let mut node = 0;
    while tree.nodes[node].depth < cfg.horizon {
        let n = &tree.nodes[node];
        let mut best: Option<&Edge> = None;
        for e in n.edges.iter().filter(|e| e.visits > 0) {
            if best.is_none_or(|b| e.visits > b.visits) {
                best = Some(e);
            }
        }
        let Some(e) = best else { break };
        // Below the root a shared maximum only reflects visit order.
        if node != 0 && n.edges.iter().filter(|x| x.visits == e.visits).count() > 1 {
            break;
        }
        path.push((n.state, e.action));
        path_legal.push(n.legal.map_or(ActionSet::EMPTY, |l| l.legal));
        node = e.child;
    }
    let labels = LabeledDataset::from_pairs(cfg.rho, cfg.bounds.clone(), path.iter().copied())?;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for e in tree.nodes.iter().flat_map(|n| &n.edges).filter(|e| e.visits > 0) {
        let m = e.value_sum / e.visits as f64;
        lo = lo.min(m);
        hi = hi.max(m);
    }
    let root_edges = tree.nodes[0]
        .edges
        .iter()
        .map(|e| EdgeSummary {
            action: e.action,
            visits: e.visits,
            mean: if e.visits > 0 { e.value_sum / e.visits as f64 } else { 0.0 },
        })
        .collect();
    Ok(SearchOutcome {
        labels,
        path,
        stats,
        root_edges,
        value_range: (lo, hi),
        path_legal,
    })
}
