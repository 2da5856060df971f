//! The classifier policy and the random initial dataset.
//!
//! A policy is a generative classifier: one mixture per action over the
//! normalized state (or a projection of it), weighted by the action's
//! empirical frequency in the training set.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{ActionId, NUM_ACTIONS};
use crate::dataset::LabeledDataset;
use crate::env::{EnvConfig, HandoverEnv};
use crate::error::{Error, Result};
use crate::gmm::{classify, fit_em, EmOptions, MixtureModel};
use crate::seed::{self, Purpose};
use crate::stam::FeatureProjection;
use crate::state::{StateBounds, StateVector};

const FORMAT_VERSION: u32 = 1;

/// Steps per episode when collecting random pairs.
pub const RANDOM_EPISODE_LEN: usize = 20;

/// Anything that picks an action from a state.
pub trait Controller {
    fn act(&mut self, s: &StateVector) -> Result<ActionId>;
}

/// Always the same action.
#[derive(Clone, Copy, Debug)]
pub struct Constant(pub ActionId);

impl Controller for Constant {
    fn act(&mut self, _: &StateVector) -> Result<ActionId> {
        Ok(self.0)
    }
}

/// Uniformly random actions from a seeded stream.
#[derive(Clone, Debug)]
pub struct Uniform(pub ChaCha8Rng);

impl Uniform {
    pub fn new(seed: u64) -> Self {
        Uniform(ChaCha8Rng::seed_from_u64(seed))
    }
}

impl Controller for Uniform {
    fn act(&mut self, _: &StateVector) -> Result<ActionId> {
        ActionId::new(self.0.gen_range(0..NUM_ACTIONS))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyModel {
    projection: FeatureProjection,
    bounds: StateBounds,
    models: Vec<Option<MixtureModel>>,
    priors: [f64; NUM_ACTIONS],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassDoc {
    prior: f64,
    model: MixtureModel,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDoc {
    version: u32,
    projection: FeatureProjection,
    bounds: StateBounds,
    classes: BTreeMap<String, ClassDoc>,
}

impl PolicyModel {
    pub fn projection(&self) -> &FeatureProjection {
        &self.projection
    }

    pub fn prior(&self, a: ActionId) -> f64 {
        self.priors[a.index()]
    }

    pub fn priors(&self) -> &[f64; NUM_ACTIONS] {
        &self.priors
    }

    pub fn model(&self, a: ActionId) -> Option<&MixtureModel> {
        self.models[a.index()].as_ref()
    }

    /// Actions with a model and a positive prior.
    pub fn classes(&self) -> impl Iterator<Item = ActionId> + '_ {
        ActionId::all().filter(|a| self.models[a.index()].is_some() && self.priors[a.index()] > 0.0)
    }

    pub fn features(&self, s: &StateVector) -> Result<Vec<f64>> {
        Ok(self.projection.project(&self.bounds.normalize(s)?))
    }

    /// Same policy with every prior multiplied by `c`; classification is
    /// unchanged for any `c > 0`.
    pub fn with_scaled_priors(&self, c: f64) -> Self {
        let mut p = self.clone();
        p.priors.iter_mut().for_each(|v| *v *= c);
        p
    }

    pub fn act(&self, s: &StateVector) -> Result<ActionId> {
        let classes: Vec<(ActionId, &MixtureModel)> = self
            .classes()
            .map(|a| (a, self.models[a.index()].as_ref().expect("filtered")))
            .collect();
        if classes.is_empty() {
            return Err(Error::UntrainedPolicy);
        }
        let priors: Vec<f64> = classes.iter().map(|(a, _)| self.priors[a.index()]).collect();
        classify(&self.features(s)?, &classes, &priors)
    }

    pub fn to_json(&self) -> String {
        let classes = self
            .classes()
            .map(|a| {
                let doc = ClassDoc {
                    prior: self.priors[a.index()],
                    model: self.models[a.index()].clone().expect("filtered"),
                };
                (a.index().to_string(), doc)
            })
            .collect();
        let doc = PolicyDoc {
            version: FORMAT_VERSION,
            projection: self.projection.clone(),
            bounds: self.bounds.clone(),
            classes,
        };
        serde_json::to_string_pretty(&doc).expect("policy serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PolicyDoc = serde_json::from_str(text)?;
        if doc.version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(doc.version));
        }
        let bounds = StateBounds::new(doc.bounds.min, doc.bounds.max)?;
        let mut models = vec![None; NUM_ACTIONS];
        let mut priors = [0.0; NUM_ACTIONS];
        for (key, class) in doc.classes {
            let a: ActionId = key.parse()?;
            if class.model.dim() != doc.projection.len() {
                return Err(Error::DimensionMismatch {
                    expected: doc.projection.len(),
                    got: class.model.dim(),
                });
            }
            if !(class.prior >= 0.0 && class.prior <= 1.0) {
                return Err(Error::InvalidArgument(format!("prior {} outside [0, 1]", class.prior)));
            }
            priors[a.index()] = class.prior;
            models[a.index()] = Some(class.model);
        }
        Ok(PolicyModel {
            projection: doc.projection,
            bounds,
            models,
            priors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::parse(path, j.to_string()),
            other => other,
        })
    }
}

impl Controller for PolicyModel {
    fn act(&mut self, s: &StateVector) -> Result<ActionId> {
        PolicyModel::act(self, s)
    }
}

impl Controller for &PolicyModel {
    fn act(&mut self, s: &StateVector) -> Result<ActionId> {
        PolicyModel::act(self, s)
    }
}

/// Trains on the full normalized state.
pub fn train_policy(d: &LabeledDataset, n_components: usize, seed: u64) -> Result<PolicyModel> {
    train_policy_with(d, n_components, seed, &FeatureProjection::full())
}

/// One mixture per action present in `d`; priors are class frequencies.
pub fn train_policy_with(d: &LabeledDataset, n_components: usize, seed: u64, projection: &FeatureProjection) -> Result<PolicyModel> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let bounds = d.bounds().clone();
    let counts = d.class_counts();
    let total = d.len() as f64;
    let mut models = vec![None; NUM_ACTIONS];
    let mut priors = [0.0; NUM_ACTIONS];
    for a in ActionId::all() {
        if counts[a.index()] == 0 {
            continue;
        }
        let samples = d
            .states_for(a)
            .map(|s| Ok(projection.project(&bounds.normalize(s)?)))
            .collect::<Result<Vec<_>>>()?;
        let opts = EmOptions::new(n_components, seed::derive(seed, Purpose::PolicyFit, 0, a.index() as u64));
        models[a.index()] = Some(fit_em(&samples, &opts)?.model);
        priors[a.index()] = counts[a.index()] as f64 / total;
    }
    Ok(PolicyModel {
        projection: projection.clone(),
        bounds,
        models,
        priors,
    })
}

/// `n_pairs` (state, uniformly random action) pairs from consecutive
/// episodes of [`RANDOM_EPISODE_LEN`] steps, each starting from a fresh
/// reset in `[delta_min, delta_max]`.
pub fn random_pairs(cfg: &EnvConfig, delta: (f64, f64), n_pairs: usize, seed: u64) -> Result<Vec<(StateVector, ActionId)>> {
    if n_pairs == 0 {
        return Err(Error::InvalidArgument("n_pairs must be at least 1".into()));
    }
    let mut actions = Uniform(seed::stream(seed, Purpose::InitialDataset, 0, 0));
    let mut out = Vec::with_capacity(n_pairs);
    let mut episode = 0;
    while out.len() < n_pairs {
        let reset_seed = seed::derive(seed, Purpose::InitialDataset, 1, episode);
        let mut env = HandoverEnv::reset(cfg.clone(), delta.0, delta.1, reset_seed)?;
        episode += 1;
        for _ in 0..RANDOM_EPISODE_LEN {
            if out.len() == n_pairs {
                break;
            }
            let s = *env.state();
            let a = actions.act(&s)?;
            out.push((s, a));
            env.step(a);
        }
    }
    Ok(out)
}

/// [`random_pairs`] inserted into a ρ-deduplicated dataset.
pub fn random_policy_dataset(cfg: &EnvConfig, delta: (f64, f64), n_pairs: usize, seed: u64, rho: f64, bounds: StateBounds) -> Result<LabeledDataset> {
    LabeledDataset::from_pairs(rho, bounds, random_pairs(cfg, delta, n_pairs, seed)?)
}
