//! Fixed-length state vectors, per-dimension bounds and the approximate
//! state comparison used by search statistics and dataset aggregation.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STATE_DIM: usize = 18;

pub const BODY_X: usize = 0;
pub const BODY_Y: usize = 1;
pub const BODY_HEADING: usize = 2;
pub const HEAD_PAN: usize = 3;
pub const HEAD_TILT: usize = 4;
pub const LEFT_ARM_DX: usize = 5;
pub const LEFT_ARM_DY: usize = 6;
pub const LEFT_ARM_DZ: usize = 7;
pub const RIGHT_ARM_DX: usize = 8;
pub const RIGHT_ARM_DY: usize = 9;
pub const RIGHT_ARM_DZ: usize = 10;
pub const LEFT_HAND_OPEN: usize = 11;
pub const RIGHT_HAND_OPEN: usize = 12;
pub const TARGET_DISTANCE: usize = 13;
pub const IMAGE_U: usize = 14;
pub const IMAGE_V: usize = 15;
pub const TARGET_VISIBLE: usize = 16;
pub const ATTENTION: usize = 17;

/// Dimensions that only take the values 0 and 1.
pub const BIT_FIELDS: [usize; 4] = [LEFT_HAND_OPEN, RIGHT_HAND_OPEN, TARGET_VISIBLE, ATTENTION];

pub const FIELD_NAMES: [&str; STATE_DIM] = [
    "body_x",
    "body_y",
    "body_heading",
    "head_pan",
    "head_tilt",
    "left_arm_dx",
    "left_arm_dy",
    "left_arm_dz",
    "right_arm_dx",
    "right_arm_dy",
    "right_arm_dz",
    "left_hand_open",
    "right_hand_open",
    "target_distance",
    "image_u",
    "image_v",
    "target_visible",
    "attention_bit",
];

pub fn is_bit_field(dim: usize) -> bool {
    BIT_FIELDS.contains(&dim)
}

/// Robot, target and attention features. Values are raw (meters, radians,
/// bits) unless produced by [`StateBounds::normalize`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector(pub [f64; STATE_DIM]);

impl StateVector {
    pub fn zeros() -> Self {
        StateVector([0.0; STATE_DIM])
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; STATE_DIM] = values.try_into().map_err(|_| Error::DimensionMismatch {
            expected: STATE_DIM,
            got: values.len(),
        })?;
        Ok(StateVector(arr))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, dim: usize) -> f64 {
        self.0[dim]
    }

    pub fn set(&mut self, dim: usize, value: f64) {
        self.0[dim] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Checks the structural invariants of a raw state.
    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::InvalidState("non-finite entry".into()));
        }
        for &d in &BIT_FIELDS {
            let v = self.0[d];
            if v != 0.0 && v != 1.0 {
                return Err(Error::InvalidState(format!("{} must be 0 or 1, got {v}", FIELD_NAMES[d])));
            }
        }
        if self.0[TARGET_DISTANCE] < 0.0 {
            return Err(Error::InvalidState("negative target distance".into()));
        }
        let (u, v) = (self.0[IMAGE_U], self.0[IMAGE_V]);
        if self.0[TARGET_VISIBLE] == 1.0 {
            if !(-1.0..=1.0).contains(&u) || !(-1.0..=1.0).contains(&v) {
                return Err(Error::InvalidState("image coordinates outside [-1, 1]".into()));
            }
        } else if u != 0.0 || v != 0.0 {
            return Err(Error::InvalidState("image coordinates set for invisible target".into()));
        }
        Ok(())
    }
}

impl Index<usize> for StateVector {
    type Output = f64;

    fn index(&self, dim: usize) -> &f64 {
        &self.0[dim]
    }
}

/// Per-dimension `[min, max]` used to map raw states affinely onto `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateBounds {
    pub min: [f64; STATE_DIM],
    pub max: [f64; STATE_DIM],
}

impl StateBounds {
    pub fn new(min: [f64; STATE_DIM], max: [f64; STATE_DIM]) -> Result<Self> {
        for d in 0..STATE_DIM {
            if !min[d].is_finite() || !max[d].is_finite() || min[d] >= max[d] {
                return Err(Error::InvalidArgument(format!(
                    "bounds for {} must be finite with min < max",
                    FIELD_NAMES[d]
                )));
            }
        }
        Ok(StateBounds { min, max })
    }

    /// Bounds covering the reachable region of the default handover simulator.
    pub fn handover() -> Self {
        use std::f64::consts::PI;
        let mut min = [0.0; STATE_DIM];
        let mut max = [1.0; STATE_DIM];
        let mut set = |d: usize, lo: f64, hi: f64| {
            min[d] = lo;
            max[d] = hi;
        };
        set(BODY_X, -2.0, 2.0);
        set(BODY_Y, -2.0, 2.0);
        set(BODY_HEADING, -PI, PI);
        set(HEAD_PAN, -2.0857, 2.0857);
        set(HEAD_TILT, -0.5149, 0.6720);
        for d in LEFT_ARM_DX..=RIGHT_ARM_DZ {
            set(d, -0.3, 0.3);
        }
        set(TARGET_DISTANCE, 0.0, 3.0);
        set(IMAGE_U, -1.0, 1.0);
        set(IMAGE_V, -1.0, 1.0);
        StateBounds { min, max }
    }

    /// Maps each dimension affinely onto `[0, 1]`; bit fields pass through.
    pub fn normalize(&self, s: &StateVector) -> Result<StateVector> {
        if !s.is_finite() {
            return Err(Error::InvalidState("non-finite entry".into()));
        }
        let mut out = [0.0; STATE_DIM];
        for (d, o) in out.iter_mut().enumerate() {
            *o = if is_bit_field(d) {
                s.0[d]
            } else {
                (s.0[d] - self.min[d]) / (self.max[d] - self.min[d])
            };
        }
        Ok(StateVector(out))
    }
}

impl Default for StateBounds {
    fn default() -> Self {
        StateBounds::handover()
    }
}

/// L∞ distance between two normalized states.
pub fn linf_distance(a: &StateVector, b: &StateVector) -> f64 {
    a.0.iter()
        .zip(b.0.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// True iff the normalized states are closer than `rho` in L∞.
///
/// Symmetric, and reflexive for `rho > 0`. Not transitive: a chain of
/// states each within `rho` of the next can span more than `rho`.
pub fn states_equal(a: &StateVector, b: &StateVector, rho: f64) -> bool {
    linf_distance(a, b) < rho
}
