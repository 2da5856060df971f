//! The eye-contact prior.
//!
//! A hand-built initial dataset encoding a social rule: while the human is
//! not looking at the robot only head rotations and the null action are
//! demonstrated; once the human looks, the arms move. Fitting a signature on
//! it and probing at both attention values shows which actions the rule
//! favors.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::action::{ActionId, NUM_ACTIONS};
use crate::dataset::{LabeledDataset, DEFAULT_RHO};
use crate::env::{EnvConfig, HandoverEnv};
use crate::error::Result;
use crate::gmm::DEFAULT_COMPONENTS;
use crate::seed::{self, Purpose};
use crate::stam::{fit_signatures, AffordanceSignature, FeatureProjection};
use crate::state::*;

/// Demonstrated states per attention value.
pub const PRIOR_STATES: usize = 120;

/// Arm offsets step away from rest on a 5-point lattice per coordinate, so
/// demonstrations with different `k` are never ρ-equal. Arm offsets are not
/// affordance features, so the lattice leaves the fitted models unchanged in
/// shape.
fn demo_state(cfg: &EnvConfig, rng: &mut impl Rng, attention: bool, k: usize) -> StateVector {
    let d = rng.gen_range(0.45..=0.60);
    let [tx, ty, _] = cfg.target_position;
    let mut s = StateVector::zeros();
    s.set(BODY_X, tx - d + rng.gen_range(-0.03..=0.03));
    s.set(BODY_Y, ty + rng.gen_range(-0.05..=0.05));
    s.set(BODY_HEADING, rng.gen_range(-0.1..=0.1));
    let mut digits = k;
    for dim in LEFT_ARM_DX..=RIGHT_ARM_DZ {
        let rest = cfg.arm_rest[(dim - LEFT_ARM_DX) % 3];
        s.set(dim, rest + cfg.step_arm * ((digits % 5) as f64 - 2.0));
        digits /= 5;
    }
    s.set(LEFT_HAND_OPEN, 1.0);
    s.set(RIGHT_HAND_OPEN, 1.0);
    s.set(TARGET_DISTANCE, (tx - s[BODY_X]).hypot(ty - s[BODY_Y]));
    s.set(ATTENTION, if attention { 1.0 } else { 0.0 });
    s
}

/// Without attention: mostly null, with some head rotations. With
/// attention: arm motions, led by the right arm reaching forward.
pub fn eye_contact_prior(cfg: &EnvConfig, seed: u64) -> Result<LabeledDataset> {
    let mut rng = seed::stream(seed, Purpose::Prior, 0, 0);
    let mut pairs = Vec::with_capacity(2 * PRIOR_STATES);
    for k in 0..PRIOR_STATES {
        let s = demo_state(cfg, &mut rng, false, k);
        let a = if k % 2 == 0 { ActionId::NULL } else { ActionId::new((k / 2) % 4)? };
        pairs.push((s, a));
    }
    for k in 0..PRIOR_STATES {
        let s = demo_state(cfg, &mut rng, true, k);
        let a = if k % 3 == 0 {
            ActionId::RIGHT_ARM_FORWARD
        } else {
            ActionId::new(10 + (k % 12))?
        };
        pairs.push((s, a));
    }
    LabeledDataset::from_pairs(DEFAULT_RHO, StateBounds::handover(), pairs)
}

/// The robot at its mean spawn pose with the given attention bit.
pub fn probe_state(cfg: &EnvConfig, attention: bool) -> Result<StateVector> {
    let env = HandoverEnv::reset(cfg.clone(), 0.525, 0.525, 0)?;
    let mut s = *env.state();
    s.set(ATTENTION, if attention { 1.0 } else { 0.0 });
    Ok(s)
}

/// Affordance of every action at `s`, in action order.
pub fn affordance_bars(sig: &AffordanceSignature, s: &StateVector) -> [f64; NUM_ACTIONS] {
    sig.values(s)
}

pub fn bars_csv(values: &[f64; NUM_ACTIONS], log_values: &[f64; NUM_ACTIONS]) -> String {
    let mut out = String::from("index,action,value,log_value\n");
    for a in ActionId::all() {
        let i = a.index();
        let _ = writeln!(out, "{i},{},{:e},{:e}", a.name(), values[i], log_values[i]);
    }
    out
}

/// The prior, its signature and the two probe bar charts.
pub struct SocialDemo {
    pub prior: LabeledDataset,
    pub signature: AffordanceSignature,
    pub attention0: [f64; NUM_ACTIONS],
    pub attention1: [f64; NUM_ACTIONS],
    pub log_attention0: [f64; NUM_ACTIONS],
    pub log_attention1: [f64; NUM_ACTIONS],
}

impl SocialDemo {
    pub fn build(cfg: &EnvConfig, seed: u64) -> Result<Self> {
        let prior = eye_contact_prior(cfg, seed)?;
        let signature = fit_signatures(
            &prior,
            DEFAULT_COMPONENTS,
            seed::derive(seed, Purpose::SignatureFit, 0, 0),
            &FeatureProjection::affordance_default(),
        )?;
        let s0 = probe_state(cfg, false)?;
        let s1 = probe_state(cfg, true)?;
        Ok(SocialDemo {
            attention0: affordance_bars(&signature, &s0),
            attention1: affordance_bars(&signature, &s1),
            log_attention0: signature.log_values(&s0),
            log_attention1: signature.log_values(&s1),
            prior,
            signature,
        })
    }

    pub fn attention0_csv(&self) -> String {
        bars_csv(&self.attention0, &self.log_attention0)
    }

    pub fn attention1_csv(&self) -> String {
        bars_csv(&self.attention1, &self.log_attention1)
    }

    /// Writes `prior_dataset.csv`, `signature_0.json`,
    /// `affordance_attention0.csv` and `affordance_attention1.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.prior.save(&dir.join("prior_dataset.csv"))?;
        self.signature.save(&dir.join("signature_0.json"))?;
        fs::write(dir.join("affordance_attention0.csv"), self.attention0_csv())?;
        fs::write(dir.join("affordance_attention1.csv"), self.attention1_csv())?;
        Ok(())
    }
}
