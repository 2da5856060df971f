//! Policy improvement with spatio-temporal affordance maps.
//!
//! The crate learns a handover policy by running depth-limited UCT from
//! states visited by the current policy, where branching at every search
//! node is restricted to actions whose learned affordance (a per-action
//! Gaussian mixture density) clears an adaptive threshold. Search labels are
//! aggregated into a dataset that retrains both the policy classifier and the
//! affordance signatures.
//!
//! Module map:
//! - [`action`], [`state`], [`dataset`]: MDP primitives and the ρ-comparison.
//! - [`gmm`]: mixture densities, EM fitting and generative classification.
//! - [`stam`]: affordance signatures, legality, composition and heat-maps.
//! - [`uct`]: affordance-gated UCT over snapshot-capable environments.
//! - [`policy`]: the GMM classifier policy and random initial datasets.
//! - [`env`]: the planar handover simulator.
//! - [`run`]: the outer improvement loop, evaluation and artifacts.
//! - [`social`]: the eye-contact prior dataset.
//! - [`config`], [`cli`]: configuration files and command implementations.

pub mod action;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod env;
pub mod error;
pub mod gmm;
pub mod policy;
pub mod run;
pub mod seed;
pub mod social;
pub mod stam;
pub mod state;
pub mod uct;

pub use action::{ActionId, ActionSet, NUM_ACTIONS};
pub use dataset::LabeledDataset;
pub use env::{EnvConfig, HandoverEnv};
pub use error::{Error, Result};
pub use gmm::{GaussianComponent, MixtureModel};
pub use policy::PolicyModel;
pub use stam::{AffordanceGrid, AffordanceSignature, LegalitySample};
pub use state::{StateBounds, StateVector, STATE_DIM};
pub use uct::{ExpansionStats, SearchConfig};
