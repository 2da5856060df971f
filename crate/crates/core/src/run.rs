//! The policy improvement loop, policy evaluation and run artifacts.
//!
//! Each iteration rolls the previous policy in from a fresh reset, runs UCT
//! at every visited state, aggregates the search labels into the dataset and
//! then retrains the policy and refits the affordance signature. Baseline
//! mode runs the same loop with every action always legal.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dataset::{LabeledDataset, DEFAULT_RHO};
use crate::env::{EnvConfig, HandoverEnv, DEFAULT_DELTA_MAX, DEFAULT_DELTA_MIN};
use crate::error::{Error, Result};
use crate::gmm::DEFAULT_COMPONENTS;
use crate::policy::{random_policy_dataset, train_policy_with, Controller, PolicyModel, Uniform};
use crate::seed::{self, Purpose};
use crate::stam::{fit_signatures, AffordanceSignature, FeatureProjection};
use crate::state::StateBounds;
use crate::uct::{search, search_parallel, ExpansionStats, Gate, SearchConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub iterations: usize,
    /// Roll-in steps per iteration; one search per step.
    pub rollin_steps: usize,
    pub n_components: usize,
    pub rho: f64,
    pub master_seed: u64,
    pub baseline_mode: bool,
    /// Replaces the random initial dataset.
    pub prior_dataset: Option<PathBuf>,
    pub initial_pairs: usize,
    pub eval_trials: usize,
    pub eval_episode_len: usize,
    pub delta_min: f64,
    pub delta_max: f64,
    /// Roll in uniformly random actions in the first iteration instead of
    /// the policy trained on the initial dataset.
    pub uniform_initial_policy: bool,
    /// Scale ε by `1 − (i − 1)/N` in iteration `i`.
    pub epsilon_decay: bool,
    /// Write measured wall times; when off, timing columns are written as 0.
    pub record_timing: bool,
    pub affordance_projection: FeatureProjection,
    pub policy_projection: FeatureProjection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            iterations: 3,
            rollin_steps: 20,
            n_components: DEFAULT_COMPONENTS,
            rho: DEFAULT_RHO,
            master_seed: 0,
            baseline_mode: false,
            prior_dataset: None,
            initial_pairs: 200,
            eval_trials: 10,
            eval_episode_len: 30,
            delta_min: DEFAULT_DELTA_MIN,
            delta_max: DEFAULT_DELTA_MAX,
            uniform_initial_policy: false,
            epsilon_decay: false,
            record_timing: true,
            affordance_projection: FeatureProjection::affordance_default(),
            policy_projection: FeatureProjection::full(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rollin_steps == 0 {
            return Err(Error::Config("rollin_steps must be at least 1".into()));
        }
        if self.n_components == 0 || self.initial_pairs == 0 || self.eval_trials == 0 || self.eval_episode_len == 0 {
            return Err(Error::Config(
                "n_components, initial_pairs, eval_trials and eval_episode_len must be at least 1".into(),
            ));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::Config("rho must be >= 0".into()));
        }
        if !(self.delta_min > 0.0 && self.delta_min <= self.delta_max && self.delta_max.is_finite()) {
            return Err(Error::Config("need 0 < delta_min <= delta_max".into()));
        }
        Ok(())
    }

    fn delta(&self) -> (f64, f64) {
        (self.delta_min, self.delta_max)
    }
}

/// Reward statistics over evaluation trials.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalStats {
    /// Per-trial average reward over the episode.
    pub trials: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub success_rate: f64,
}

/// Runs `n_trials` episodes of `episode_len` steps. Trial `k` resets with a
/// seed derived from `(seed, k)`, so different controllers see the same
/// initial states.
pub fn evaluate_policy(
    controller: &mut dyn Controller,
    env_cfg: &EnvConfig,
    delta: (f64, f64),
    n_trials: usize,
    episode_len: usize,
    seed: u64,
) -> Result<EvalStats> {
    if n_trials == 0 || episode_len == 0 {
        return Err(Error::InvalidArgument("n_trials and episode_len must be at least 1".into()));
    }
    let mut trials = Vec::with_capacity(n_trials);
    let mut successes = 0;
    for k in 0..n_trials {
        let reset = seed::derive(seed, Purpose::Evaluation, 0, k as u64);
        let mut env = HandoverEnv::reset(env_cfg.clone(), delta.0, delta.1, reset)?;
        let mut total = 0.0;
        let mut success = false;
        for _ in 0..episode_len {
            let a = controller.act(env.state())?;
            env.step(a);
            total += env.reward();
            success |= env.is_success();
        }
        trials.push(total / episode_len as f64);
        successes += usize::from(success);
    }
    let n = n_trials as f64;
    let mean = trials.iter().sum::<f64>() / n;
    let var = trials.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok(EvalStats {
        mean,
        std: var.sqrt(),
        min: trials.iter().copied().fold(f64::INFINITY, f64::min),
        max: trials.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        success_rate: successes as f64 / n,
        trials,
    })
}

/// The random initial dataset, or the prior dataset when configured.
pub fn initial_dataset(cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    let run = &cfg.run;
    match &run.prior_dataset {
        Some(path) => {
            let d = LabeledDataset::load(path, StateBounds::handover())?;
            if d.rho() != run.rho {
                return Err(Error::ThresholdMismatch {
                    left: run.rho,
                    right: d.rho(),
                });
            }
            Ok(d)
        }
        None => random_policy_dataset(
            &cfg.env,
            run.delta(),
            run.initial_pairs,
            seed::derive(run.master_seed, Purpose::InitialDataset, 0, 0),
            run.rho,
            StateBounds::handover(),
        ),
    }
}

fn train(d: &LabeledDataset, cfg: &ExperimentConfig, iteration: usize) -> Result<(PolicyModel, Option<AffordanceSignature>)> {
    let run = &cfg.run;
    let policy = train_policy_with(
        d,
        run.n_components,
        seed::derive(run.master_seed, Purpose::PolicyFit, iteration as u64, 0),
        &run.policy_projection,
    )?;
    let sig = if run.baseline_mode {
        None
    } else {
        Some(fit_signatures(
            d,
            run.n_components,
            seed::derive(run.master_seed, Purpose::SignatureFit, iteration as u64, 0),
            &run.affordance_projection,
        )?)
    };
    Ok((policy, sig))
}

/// Trains the initial policy and (outside baseline mode) the initial signature.
pub fn initialize(d0: &LabeledDataset, cfg: &ExperimentConfig) -> Result<(PolicyModel, Option<AffordanceSignature>)> {
    if d0.is_empty() {
        return Err(Error::EmptyDataset);
    }
    train(d0, cfg, 0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub eval: EvalStats,
    /// Sum over all roots of the iteration.
    pub stats: ExpansionStats,
    pub wall_ms: f64,
    pub dataset_len: usize,
    pub epsilon: f64,
}

#[derive(Clone, Debug)]
pub struct IterationOutput {
    pub policy: PolicyModel,
    pub signature: Option<AffordanceSignature>,
    pub dataset: LabeledDataset,
    pub metrics: IterationMetrics,
    /// Per-root statistics in roll-in order.
    pub roots: Vec<ExpansionStats>,
}

/// One pass of roll-in, search, aggregation and retraining. `d` is left
/// untouched; the aggregated dataset is returned.
pub fn run_iteration(
    i: usize,
    policy: &PolicyModel,
    sig: Option<&AffordanceSignature>,
    d: &LabeledDataset,
    cfg: &ExperimentConfig,
) -> Result<IterationOutput> {
    let run = &cfg.run;
    let master = run.master_seed;
    let start = Instant::now();
    let gate = match (run.baseline_mode, sig) {
        (true, _) => Gate::All,
        (false, Some(s)) => Gate::Affordance(s),
        (false, None) => return Err(Error::InvalidArgument("affordance mode needs a signature".into())),
    };
    let epsilon = if run.epsilon_decay && run.iterations > 0 {
        cfg.search.epsilon * (1.0 - (i as f64 - 1.0) / run.iterations as f64)
    } else {
        cfg.search.epsilon
    };

    let mut env = HandoverEnv::reset(cfg.env.clone(), run.delta_min, run.delta_max, seed::derive(master, Purpose::Reset, i as u64, 0))?;
    let mut uniform = Uniform(seed::stream(master, Purpose::Rollin, i as u64, 0));
    let mut greedy = policy;
    let rollin: &mut dyn Controller = if i == 1 && run.uniform_initial_policy { &mut uniform } else { &mut greedy };

    let mut dataset = d.clone();
    let mut roots = Vec::with_capacity(run.rollin_steps);
    let mut total = ExpansionStats::default();
    for t in 0..run.rollin_steps {
        let scfg = SearchConfig {
            seed: seed::derive(master, Purpose::Search, i as u64, t as u64),
            epsilon,
            rho: run.rho,
            ..cfg.search.clone()
        };
        let out = if scfg.threads > 1 {
            search_parallel(&mut env, gate, &scfg)?
        } else {
            search(&mut env, gate, &scfg)?
        };
        dataset = dataset.aggregate(&out.labels)?;
        total.add(&out.stats);
        roots.push(out.stats);
        let a = rollin.act(env.state())?;
        env.step(a);
    }
    let (policy, signature) = train(&dataset, cfg, i)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;

    let eval = evaluate_policy(&mut &policy, &cfg.env, run.delta(), run.eval_trials, run.eval_episode_len, master)?;
    log::info!(
        "iteration {i}: |D| = {}, mean reward {:.4}, {:.2} evals/node, {:.0} ms",
        dataset.len(),
        eval.mean,
        total.per_node().2,
        wall_ms
    );
    let metrics = IterationMetrics {
        iteration: i,
        eval,
        stats: total,
        wall_ms,
        dataset_len: dataset.len(),
        epsilon,
    };
    Ok(IterationOutput {
        policy,
        signature,
        dataset,
        metrics,
        roots,
    })
}

/// Everything a run produces. Index `i` of `policies`, `signatures` and
/// `evals` belongs to iteration `i`, with 0 the initialization.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub config: ExperimentConfig,
    pub policies: Vec<PolicyModel>,
    pub signatures: Vec<Option<AffordanceSignature>>,
    pub evals: Vec<EvalStats>,
    pub metrics: Vec<IterationMetrics>,
    /// `(iteration, root index, stats)`.
    pub roots: Vec<(usize, usize, ExpansionStats)>,
    pub initial_dataset_len: usize,
    pub dataset: LabeledDataset,
}

impl RunArtifacts {
    pub fn final_policy(&self) -> &PolicyModel {
        self.policies.last().expect("a run always has an initial policy")
    }

    pub fn final_signature(&self) -> Option<&AffordanceSignature> {
        self.signatures.last().and_then(Option::as_ref)
    }

    pub fn total_wall_ms(&self) -> f64 {
        self.metrics.iter().map(|m| m.wall_ms).sum()
    }

    pub fn total_stats(&self) -> ExpansionStats {
        let mut s = ExpansionStats::default();
        for m in &self.metrics {
            s.add(&m.stats);
        }
        s
    }

    fn wall(&self, ms: f64) -> f64 {
        if self.config.run.record_timing {
            ms
        } else {
            0.0
        }
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("iteration,mean_reward,std_reward,evals_affordance,evals_random,evals_total,wall_ms\n");
        for m in &self.metrics {
            let (a, r, t) = m.stats.per_node();
            let _ = writeln!(
                out,
                "{},{:.9},{:.9},{:.6},{:.6},{:.6},{:.3}",
                m.iteration,
                m.eval.mean,
                m.eval.std,
                a,
                r,
                t,
                self.wall(m.wall_ms)
            );
        }
        out
    }

    pub fn expansions_csv(&self) -> String {
        let mut out = format!("{}\n", ExpansionStats::CSV_HEADER);
        for (i, root, s) in &self.roots {
            let s = ExpansionStats {
                wallclock_ms: self.wall(s.wallclock_ms),
                ..s.clone()
            };
            let _ = writeln!(out, "{}", s.csv_row(*i, *root));
        }
        out
    }

    pub fn evaluation_csv(&self) -> String {
        let mut out = String::from("iteration,mean_reward,std_reward,min_reward,max_reward,success_rate\n");
        for (i, e) in self.evals.iter().enumerate() {
            let _ = writeln!(out, "{i},{:.9},{:.9},{:.9},{:.9},{:.3}", e.mean, e.std, e.min, e.max, e.success_rate);
        }
        out
    }

    /// Writes `policy_i.json`, `signature_i.json`, `dataset.csv`,
    /// `metrics.csv`, `expansions.csv`, `evaluation.csv` and `run_config.toml`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (i, p) in self.policies.iter().enumerate() {
            p.save(&dir.join(format!("policy_{i}.json")))?;
        }
        for (i, s) in self.signatures.iter().enumerate() {
            if let Some(s) = s {
                s.save(&dir.join(format!("signature_{i}.json")))?;
            }
        }
        self.dataset.save(&dir.join("dataset.csv"))?;
        fs::write(dir.join("metrics.csv"), self.metrics_csv())?;
        fs::write(dir.join("expansions.csv"), self.expansions_csv())?;
        fs::write(dir.join("evaluation.csv"), self.evaluation_csv())?;
        fs::write(dir.join("run_config.toml"), self.config.to_toml_string())?;
        Ok(())
    }
}

/// Initialization followed by `cfg.run.iterations` iterations.
pub fn run(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let d0 = initial_dataset(cfg)?;
    let (policy, sig) = initialize(&d0, cfg)?;
    let run = &cfg.run;
    let eval0 = if run.uniform_initial_policy {
        let mut u = Uniform(seed::stream(run.master_seed, Purpose::Rollin, 0, 0));
        evaluate_policy(&mut u, &cfg.env, run.delta(), run.eval_trials, run.eval_episode_len, run.master_seed)?
    } else {
        evaluate_policy(&mut &policy, &cfg.env, run.delta(), run.eval_trials, run.eval_episode_len, run.master_seed)?
    };
    let mut art = RunArtifacts {
        config: cfg.clone(),
        policies: vec![policy],
        signatures: vec![sig],
        evals: vec![eval0],
        metrics: Vec::new(),
        roots: Vec::new(),
        initial_dataset_len: d0.len(),
        dataset: d0,
    };
    for i in 1..=run.iterations {
        let out = run_iteration(
            i,
            art.policies.last().expect("non-empty"),
            art.signatures.last().and_then(Option::as_ref),
            &art.dataset,
            cfg,
        )?;
        art.roots.extend(out.roots.into_iter().enumerate().map(|(t, s)| (i, t, s)));
        art.evals.push(out.metrics.eval.clone());
        art.metrics.push(out.metrics);
        art.policies.push(out.policy);
        art.signatures.push(out.signature);
        art.dataset = out.dataset;
    }
    Ok(art)
}

/// An affordance run and a baseline run from the same configuration and seed.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub affordance: RunArtifacts,
    pub baseline: RunArtifacts,
}

pub fn compare(cfg: &ExperimentConfig) -> Result<Comparison> {
    let mut a = cfg.clone();
    a.run.baseline_mode = false;
    let mut b = cfg.clone();
    b.run.baseline_mode = true;
    Ok(Comparison {
        affordance: run(&a)?,
        baseline: run(&b)?,
    })
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        f64::NAN
    } else {
        a / b
    }
}

impl Comparison {
    pub fn summary_csv(&self) -> String {
        let (a, b) = (&self.affordance, &self.baseline);
        let reward = (a.evals.last().map_or(0.0, |e| e.mean), b.evals.last().map_or(0.0, |e| e.mean));
        let evals = (a.total_stats().per_node().2, b.total_stats().per_node().2);
        let wall = (a.wall(a.total_wall_ms()), b.wall(b.total_wall_ms()));
        let mut out = String::from("metric,affordance,baseline,ratio\n");
        let _ = writeln!(out, "final_mean_reward,{:.9},{:.9},{:.6}", reward.0, reward.1, ratio(reward.0, reward.1));
        let _ = writeln!(out, "evals_per_node,{:.6},{:.6},{:.6}", evals.0, evals.1, ratio(evals.0, evals.1));
        for (ma, mb) in a.metrics.iter().zip(&b.metrics) {
            let (x, y) = (ma.stats.per_node().2, mb.stats.per_node().2);
            let _ = writeln!(out, "evals_per_node_iter{},{x:.6},{y:.6},{:.6}", ma.iteration, ratio(x, y));
        }
        let _ = writeln!(out, "wall_ms_total,{:.3},{:.3},{:.6}", wall.0, wall.1, ratio(wall.0, wall.1));
        let _ = writeln!(out, "expansion_reduction_pct,,,{:.3}", 100.0 * (1.0 - ratio(evals.0, evals.1)));
        let _ = writeln!(out, "time_reduction_pct,,,{:.3}", 100.0 * (1.0 - ratio(wall.0, wall.1)));
        out
    }

    /// Writes `affordance/`, `baseline/` and `summary.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.affordance.write(&dir.join("affordance"))?;
        self.baseline.write(&dir.join("baseline"))?;
        fs::write(dir.join("summary.csv"), self.summary_csv())?;
        Ok(())
    }
}
