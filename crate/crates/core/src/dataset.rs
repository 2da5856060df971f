//! Labeled (state, action) datasets with ρ-deduplicating aggregation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::action::ActionId;
use crate::error::{Error, Result};
use crate::state::{states_equal, StateBounds, StateVector, STATE_DIM};

pub const DEFAULT_RHO: f64 = 0.05;
const FORMAT_VERSION: u32 = 1;

/// Ordered (state, action) pairs in which no two states are ρ-equal.
///
/// States are stored raw; comparisons happen on their normalized images
/// under `bounds`. Iteration order is insertion order, newest last.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pairs: Vec<(StateVector, ActionId)>,
    normalized: Vec<StateVector>,
    rho: f64,
    bounds: StateBounds,
}

impl LabeledDataset {
    pub fn new(rho: f64) -> Self {
        Self::with_bounds(rho, StateBounds::handover())
    }

    pub fn with_bounds(rho: f64, bounds: StateBounds) -> Self {
        LabeledDataset {
            pairs: Vec::new(),
            normalized: Vec::new(),
            rho,
            bounds,
        }
    }

    /// Builds a dataset by inserting `pairs` in order (later pairs win).
    pub fn from_pairs(rho: f64, bounds: StateBounds, pairs: impl IntoIterator<Item = (StateVector, ActionId)>) -> Result<Self> {
        let mut d = Self::with_bounds(rho, bounds);
        for (s, a) in pairs {
            d.insert(s, a)?;
        }
        Ok(d)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn bounds(&self) -> &StateBounds {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(StateVector, ActionId)] {
        &self.pairs
    }

    pub fn iter(&self) -> impl Iterator<Item = &(StateVector, ActionId)> {
        self.pairs.iter()
    }

    /// States labeled with `action`, in insertion order.
    pub fn states_for(&self, action: ActionId) -> impl Iterator<Item = &StateVector> {
        self.pairs.iter().filter(move |(_, a)| *a == action).map(|(s, _)| s)
    }

    pub fn class_counts(&self) -> [usize; crate::action::NUM_ACTIONS] {
        let mut counts = [0; crate::action::NUM_ACTIONS];
        for (_, a) in &self.pairs {
            counts[a.index()] += 1;
        }
        counts
    }

    /// Appends a pair, first removing every stored state ρ-equal to `s`.
    pub fn insert(&mut self, s: StateVector, a: ActionId) -> Result<()> {
        let n = self.bounds.normalize(&s)?;
        self.remove_equal(&n);
        self.pairs.push((s, a));
        self.normalized.push(n);
        Ok(())
    }

    fn remove_equal(&mut self, n: &StateVector) {
        let rho = self.rho;
        let mut keep = self.normalized.iter().map(|m| !states_equal(m, n, rho));
        self.pairs.retain(|_| keep.next().unwrap());
        self.normalized.retain(|m| !states_equal(m, n, rho));
    }

    /// `self ∪ new` where new labels replace ρ-equal old states.
    ///
    /// `new` is deduplicated internally first (last occurrence wins); then
    /// every old pair ρ-equal to a surviving new state is dropped. Old
    /// survivors keep their order and precede the new pairs.
    pub fn aggregate(&self, new: &LabeledDataset) -> Result<LabeledDataset> {
        if self.rho != new.rho {
            return Err(Error::ThresholdMismatch {
                left: self.rho,
                right: new.rho,
            });
        }
        let mut fresh = LabeledDataset::with_bounds(self.rho, self.bounds.clone());
        for (s, a) in &new.pairs {
            fresh.insert(*s, *a)?;
        }

        let mut out = LabeledDataset::with_bounds(self.rho, self.bounds.clone());
        for ((s, a), n) in self.pairs.iter().zip(&self.normalized) {
            if !fresh.normalized.iter().any(|m| states_equal(m, n, self.rho)) {
                out.pairs.push((*s, *a));
                out.normalized.push(*n);
            }
        }
        out.pairs.extend(fresh.pairs);
        out.normalized.extend(fresh.normalized);
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# rho={} version={FORMAT_VERSION}", self.rho);
        for d in 0..STATE_DIM {
            let _ = write!(out, "s{d},");
        }
        out.push_str("action\n");
        for (s, a) in &self.pairs {
            for v in s.as_slice() {
                let _ = write!(out, "{v:.16e},");
            }
            let _ = writeln!(out, "{}", a.index());
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: &Path, bounds: StateBounds) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse_csv(&text, bounds).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path, message),
            other => other,
        })
    }

    pub fn parse_csv(text: &str, bounds: StateBounds) -> Result<Self> {
        let bad = |m: String| Error::parse("<dataset>", m);
        let mut lines = text.lines();
        let meta = lines.next().ok_or_else(|| bad("missing metadata line".into()))?;
        let meta = meta
            .strip_prefix('#')
            .ok_or_else(|| bad("metadata line must start with '#'".into()))?;
        let mut rho = None;
        let mut version = None;
        for field in meta.split_whitespace() {
            match field.split_once('=') {
                Some(("rho", v)) => rho = v.parse::<f64>().ok(),
                Some(("version", v)) => version = v.parse::<u32>().ok(),
                _ => {}
            }
        }
        let rho = rho.ok_or_else(|| bad("missing rho".into()))?;
        match version {
            Some(FORMAT_VERSION) => {}
            Some(v) => return Err(Error::UnsupportedVersion(v)),
            None => return Err(bad("missing version".into())),
        }
        let header = lines.next().ok_or_else(|| bad("missing header".into()))?;
        if header.split(',').count() != STATE_DIM + 1 {
            return Err(bad(format!("header must have {} columns", STATE_DIM + 1)));
        }

        let mut d = LabeledDataset::with_bounds(rho, bounds);
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != STATE_DIM + 1 {
                return Err(bad(format!("row {}: expected {} fields", lineno + 1, STATE_DIM + 1)));
            }
            let mut s = [0.0; STATE_DIM];
            for (slot, f) in s.iter_mut().zip(&fields) {
                *slot = f
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("row {}: bad number {f:?}", lineno + 1)))?;
            }
            let a: usize = fields[STATE_DIM]
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {}: bad action", lineno + 1)))?;
            d.insert(StateVector(s), ActionId::new(a)?)?;
        }
        Ok(d)
    }
}
