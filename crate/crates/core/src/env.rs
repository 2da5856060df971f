//! Planar handover simulator.
//!
//! A mobile robot with a pan/tilt head camera, two arms moved by Cartesian
//! end-effector steps and two grippers approaches a static target held by a
//! simulated human. The world frame has the target at the origin by default;
//! the robot spawns on the −x side facing +x. The only stochastic element is
//! the human's attention, driven by a ChaCha8 stream that is part of the
//! environment state (and therefore of every snapshot).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{ActionId, Motion, Side};
use crate::error::{Error, Result};
use crate::state::*;
use crate::uct::SearchEnv;

pub const DEFAULT_DELTA_MIN: f64 = 0.45;
pub const DEFAULT_DELTA_MAX: f64 = 0.60;

/// Simulator constants. All lengths in meters, angles in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub step_translate: f64,
    pub step_rotate: f64,
    pub step_arm: f64,
    pub step_head: f64,
    pub arm_reach_max: f64,
    pub target_position: [f64; 3],
    pub grasp_distance: f64,
    /// Horizontal field of view.
    pub camera_fov: f64,
    pub camera_vfov: f64,
    pub camera_height: f64,
    pub head_pan_limit: f64,
    pub head_tilt_min: f64,
    pub head_tilt_max: f64,
    pub shoulder_height: f64,
    pub shoulder_half_width: f64,
    /// End-effector offset from the shoulder at reset, body frame (fwd, left, up).
    pub arm_rest: [f64; 3],
    pub face_position: [f64; 3],
    /// Gaze within this angle of the face establishes eye contact.
    pub gaze_tolerance: f64,
    pub attention_flip_prob: f64,
    pub w_dist: f64,
    pub w_center: f64,
    pub w_hand_penalty: f64,
    pub dist_scale: f64,
    /// Hand-to-target distance that counts as holding the object.
    pub success_reach: f64,
    pub social_rule_enabled: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            step_translate: 0.05,
            step_rotate: 0.1745,
            step_arm: 0.04,
            step_head: 0.1745,
            arm_reach_max: 0.30,
            target_position: [0.0, 0.0, 0.45],
            grasp_distance: 0.25,
            camera_fov: 1.047,
            camera_vfov: 0.831,
            camera_height: 0.16,
            head_pan_limit: 2.0857,
            head_tilt_min: -0.5149,
            head_tilt_max: 0.6720,
            shoulder_height: 0.13,
            shoulder_half_width: 0.06,
            arm_rest: [0.05, 0.0, -0.08],
            face_position: [0.15, 0.0, 0.70],
            gaze_tolerance: 0.2,
            attention_flip_prob: 0.05,
            w_dist: 0.5,
            w_center: 0.3,
            w_hand_penalty: 0.4,
            dist_scale: 0.3,
            success_reach: 0.10,
            social_rule_enabled: false,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("step_translate", self.step_translate),
            ("step_rotate", self.step_rotate),
            ("step_arm", self.step_arm),
            ("step_head", self.step_head),
            ("arm_reach_max", self.arm_reach_max),
            ("grasp_distance", self.grasp_distance),
            ("dist_scale", self.dist_scale),
            ("camera_fov", self.camera_fov),
            ("camera_vfov", self.camera_vfov),
            ("head_pan_limit", self.head_pan_limit),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("w_dist", self.w_dist),
            ("w_center", self.w_center),
            ("w_hand_penalty", self.w_hand_penalty),
            ("gaze_tolerance", self.gaze_tolerance),
            ("success_reach", self.success_reach),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.camera_fov >= PI || self.camera_vfov >= PI {
            return Err(Error::Config("camera fields of view must be below pi".into()));
        }
        if !(0.0..=1.0).contains(&self.attention_flip_prob) {
            return Err(Error::Config("attention_flip_prob must be in [0, 1]".into()));
        }
        if self.head_tilt_min >= self.head_tilt_max {
            return Err(Error::Config("head_tilt_min must be below head_tilt_max".into()));
        }
        let all = self
            .target_position
            .iter()
            .chain(&self.face_position)
            .chain(&self.arm_rest)
            .chain([&self.camera_height, &self.shoulder_height, &self.shoulder_half_width]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite geometry".into()));
        }
        Ok(())
    }

    /// Parses a `key = value` file, either flat or under an `[env]` table.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Wrapped {
            env: EnvConfig,
        }
        let cfg = match toml::from_str::<Wrapped>(text) {
            Ok(w) => w.env,
            Err(_) => toml::from_str::<EnvConfig>(text).map_err(|e| Error::Config(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

/// Observable state plus the attention stream.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub state: StateVector,
    rng: ChaCha8Rng,
}

/// Restorable copy of an [`EnvState`].
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSnapshot(EnvState);

const TOKEN_LEN: usize = STATE_DIM * 8 + 32 + 8 + 16 + 8;

impl EnvSnapshot {
    /// Opaque byte token with a trailing checksum.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(TOKEN_LEN);
        for v in self.0.state.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.0.rng.get_seed());
        out.extend_from_slice(&self.0.rng.get_stream().to_le_bytes());
        out.extend_from_slice(&self.0.rng.get_word_pos().to_le_bytes());
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != TOKEN_LEN {
            return Err(Error::CorruptedSnapshot);
        }
        let (body, sum) = bytes.split_at(TOKEN_LEN - 8);
        if fnv1a(body).to_le_bytes() != sum {
            return Err(Error::CorruptedSnapshot);
        }
        let mut s = [0.0; STATE_DIM];
        for (i, v) in s.iter_mut().enumerate() {
            *v = f64::from_le_bytes(body[i * 8..i * 8 + 8].try_into().unwrap());
        }
        let mut at = STATE_DIM * 8;
        let seed: [u8; 32] = body[at..at + 32].try_into().unwrap();
        at += 32;
        let stream = u64::from_le_bytes(body[at..at + 8].try_into().unwrap());
        at += 8;
        let word_pos = u128::from_le_bytes(body[at..at + 16].try_into().unwrap());
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        let state = StateVector(s);
        if !state.is_finite() {
            return Err(Error::CorruptedSnapshot);
        }
        Ok(EnvSnapshot(EnvState { state, rng }))
    }

    pub fn state(&self) -> &StateVector {
        &self.0.state
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[derive(Clone, Debug)]
pub struct HandoverEnv {
    cfg: EnvConfig,
    st: EnvState,
}

impl HandoverEnv {
    /// Draws an initial state: the robot stands at a uniform distance in
    /// `[delta_min, delta_max]` straight in front of the target, facing it,
    /// with arms at rest, hands open, head centered and a fair-coin attention bit.
    pub fn reset(cfg: EnvConfig, delta_min: f64, delta_max: f64, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if !(delta_min > 0.0 && delta_min <= delta_max && delta_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "invalid reset range [{delta_min}, {delta_max}]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = if delta_min == delta_max {
            delta_min
        } else {
            rng.gen_range(delta_min..=delta_max)
        };
        let attention = rng.gen_bool(0.5);

        let [tx, ty, _] = cfg.target_position;
        let mut s = StateVector::zeros();
        s.set(BODY_X, tx - dist);
        s.set(BODY_Y, ty);
        for (base, _) in [(LEFT_ARM_DX, Side::Left), (RIGHT_ARM_DX, Side::Right)] {
            for k in 0..3 {
                s.set(base + k, cfg.arm_rest[k]);
            }
        }
        s.set(LEFT_HAND_OPEN, 1.0);
        s.set(RIGHT_HAND_OPEN, 1.0);
        s.set(ATTENTION, if attention { 1.0 } else { 0.0 });
        let mut env = HandoverEnv {
            cfg,
            st: EnvState { state: s, rng },
        };
        env.derive_features();
        Ok(env)
    }

    pub fn reset_default(seed: u64) -> Result<Self> {
        Self::reset(EnvConfig::default(), DEFAULT_DELTA_MIN, DEFAULT_DELTA_MAX, seed)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &StateVector {
        &self.st.state
    }

    pub fn env_state(&self) -> &EnvState {
        &self.st
    }

    pub fn step(&mut self, a: ActionId) {
        let c = &self.cfg;
        let s = &mut self.st.state;
        match a.motion() {
            Motion::Head { pan, tilt } => {
                let p = s[HEAD_PAN] + pan as f64 * c.step_head;
                let t = s[HEAD_TILT] + tilt as f64 * c.step_head;
                s.set(HEAD_PAN, p.clamp(-c.head_pan_limit, c.head_pan_limit));
                s.set(HEAD_TILT, t.clamp(c.head_tilt_min, c.head_tilt_max));
            }
            Motion::Body { forward, left, turn } => {
                let h = s[BODY_HEADING];
                let (sin, cos) = h.sin_cos();
                let (f, l) = (forward as f64 * c.step_translate, left as f64 * c.step_translate);
                s.set(BODY_X, s[BODY_X] + f * cos - l * sin);
                s.set(BODY_Y, s[BODY_Y] + f * sin + l * cos);
                s.set(BODY_HEADING, wrap_angle(h + turn as f64 * c.step_rotate));
            }
            Motion::Arm { side, forward, left, up } => {
                let base = arm_base(side);
                let mut off = [s[base], s[base + 1], s[base + 2]];
                off[0] += forward as f64 * c.step_arm;
                off[1] += left as f64 * c.step_arm;
                off[2] += up as f64 * c.step_arm;
                let norm = off.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > c.arm_reach_max {
                    let k = c.arm_reach_max / norm;
                    off.iter_mut().for_each(|v| *v *= k);
                }
                for (k, v) in off.iter().enumerate() {
                    s.set(base + k, *v);
                }
            }
            Motion::Hand { side, open } => {
                let field = match side {
                    Side::Left => LEFT_HAND_OPEN,
                    Side::Right => RIGHT_HAND_OPEN,
                };
                s.set(field, if open { 1.0 } else { 0.0 });
            }
            Motion::Null => {}
        }
        self.derive_features();
        self.advance_attention();
    }

    pub fn reward(&self) -> f64 {
        reward(&self.st.state, &self.cfg)
    }

    pub fn is_success(&self) -> bool {
        is_success(&self.st.state, &self.cfg)
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot(self.st.clone())
    }

    pub fn restore(&mut self, snap: &EnvSnapshot) {
        self.st.clone_from(&snap.0);
    }

    /// Restores from a byte token produced by [`EnvSnapshot::to_bytes`].
    pub fn restore_bytes(&mut self, token: &[u8]) -> Result<()> {
        let snap = EnvSnapshot::from_bytes(token)?;
        self.restore(&snap);
        Ok(())
    }

    fn derive_features(&mut self) {
        let c = &self.cfg;
        let s = &mut self.st.state;
        let [tx, ty, tz] = c.target_position;
        s.set(TARGET_DISTANCE, (tx - s[BODY_X]).hypot(ty - s[BODY_Y]));
        let cam = Camera::new(s, c);
        match cam.project(c, [tx, ty, tz]) {
            Some((u, v)) => {
                s.set(IMAGE_U, u);
                s.set(IMAGE_V, v);
                s.set(TARGET_VISIBLE, 1.0);
            }
            None => {
                s.set(IMAGE_U, 0.0);
                s.set(IMAGE_V, 0.0);
                s.set(TARGET_VISIBLE, 0.0);
            }
        }
    }

    fn advance_attention(&mut self) {
        let draw: f64 = self.st.rng.gen();
        let s = &mut self.st.state;
        let cam = Camera::new(s, &self.cfg);
        if cam.angle_to(self.cfg.face_position) <= self.cfg.gaze_tolerance {
            s.set(ATTENTION, 1.0);
        } else if draw < self.cfg.attention_flip_prob {
            s.set(ATTENTION, 1.0 - s[ATTENTION]);
        }
    }
}

impl SearchEnv for HandoverEnv {
    type Snapshot = EnvSnapshot;

    fn observe(&self) -> StateVector {
        self.st.state
    }

    fn reward(&self) -> f64 {
        HandoverEnv::reward(self)
    }

    fn snapshot(&self) -> EnvSnapshot {
        HandoverEnv::snapshot(self)
    }

    fn restore(&mut self, snap: &EnvSnapshot) -> Result<()> {
        HandoverEnv::restore(self, snap);
        Ok(())
    }

    fn step(&mut self, a: ActionId) -> Result<()> {
        HandoverEnv::step(self, a);
        Ok(())
    }
}

fn arm_base(side: Side) -> usize {
    match side {
        Side::Left => LEFT_ARM_DX,
        Side::Right => RIGHT_ARM_DX,
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Head camera frame: optical axis `fwd`, image-left `left`, image-up `up`.
struct Camera {
    pos: [f64; 3],
    fwd: [f64; 3],
    left: [f64; 3],
    up: [f64; 3],
}

impl Camera {
    fn new(s: &StateVector, c: &EnvConfig) -> Self {
        let yaw = s[BODY_HEADING] + s[HEAD_PAN];
        let pitch = s[HEAD_TILT];
        let (sy, cy) = yaw.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        Camera {
            pos: [s[BODY_X], s[BODY_Y], c.camera_height],
            fwd: [cp * cy, cp * sy, sp],
            left: [-sy, cy, 0.0],
            up: [-sp * cy, -sp * sy, cp],
        }
    }

    fn rel(&self, p: [f64; 3]) -> [f64; 3] {
        [p[0] - self.pos[0], p[1] - self.pos[1], p[2] - self.pos[2]]
    }

    /// Normalized pinhole coordinates (u to the right, v up), or `None` if
    /// the point is behind the camera or outside the field of view.
    fn project(&self, c: &EnvConfig, p: [f64; 3]) -> Option<(f64, f64)> {
        let r = self.rel(p);
        let xf = dot(r, self.fwd);
        if xf <= 0.0 {
            return None;
        }
        let u = -(dot(r, self.left) / xf) / (0.5 * c.camera_fov).tan();
        let v = (dot(r, self.up) / xf) / (0.5 * c.camera_vfov).tan();
        (u.abs() <= 1.0 && v.abs() <= 1.0).then_some((u, v))
    }

    fn angle_to(&self, p: [f64; 3]) -> f64 {
        let r = self.rel(p);
        let n = dot(r, r).sqrt();
        if n == 0.0 {
            return 0.0;
        }
        (dot(r, self.fwd) / n).clamp(-1.0, 1.0).acos()
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `clamp01(w_dist·exp(−d/σ_d) + w_center·c − w_hand_penalty·p)`.
///
/// `c` is the centering score of a visible target, `p` flags a closed hand
/// while the target is still out of grasp range. The social rule only
/// withholds grasp credit, and the reward has no grasp credit, so it does
/// not change the value.
pub fn reward(s: &StateVector, cfg: &EnvConfig) -> f64 {
    let d = s[TARGET_DISTANCE];
    let center = if s[TARGET_VISIBLE] == 1.0 {
        1.0 - (s[IMAGE_U].abs() + s[IMAGE_V].abs()) / 2.0
    } else {
        0.0
    };
    let closed = s[LEFT_HAND_OPEN] == 0.0 || s[RIGHT_HAND_OPEN] == 0.0;
    let penalty = if closed && d > cfg.grasp_distance { 1.0 } else { 0.0 };
    let r = cfg.w_dist * (-d / cfg.dist_scale).exp() + cfg.w_center * center - cfg.w_hand_penalty * penalty;
    r.clamp(0.0, 1.0)
}

/// World position of a hand's end-effector.
pub fn hand_position(s: &StateVector, cfg: &EnvConfig, side: Side) -> [f64; 3] {
    let base = arm_base(side);
    let lateral = match side {
        Side::Left => cfg.shoulder_half_width,
        Side::Right => -cfg.shoulder_half_width,
    };
    let local = [s[base], lateral + s[base + 1], cfg.shoulder_height + s[base + 2]];
    let (sin, cos) = s[BODY_HEADING].sin_cos();
    [
        s[BODY_X] + local[0] * cos - local[1] * sin,
        s[BODY_Y] + local[0] * sin + local[1] * cos,
        local[2],
    ]
}

/// A hand is closed within grasp range with its end-effector at the target
/// (and, under the social rule, the human is paying attention).
pub fn is_success(s: &StateVector, cfg: &EnvConfig) -> bool {
    if s[TARGET_DISTANCE] > cfg.grasp_distance {
        return false;
    }
    if cfg.social_rule_enabled && s[ATTENTION] != 1.0 {
        return false;
    }
    [(Side::Left, LEFT_HAND_OPEN), (Side::Right, RIGHT_HAND_OPEN)]
        .into_iter()
        .any(|(side, field)| {
            if s[field] != 0.0 {
                return false;
            }
            let h = hand_position(s, cfg, side);
            let t = cfg.target_position;
            let dist = ((h[0] - t[0]).powi(2) + (h[1] - t[1]).powi(2) + (h[2] - t[2]).powi(2)).sqrt();
            dist <= cfg.success_reach
        })
}

/// One row of a debugging trajectory: state after the step, the action that
/// led there (none for the initial state) and its reward.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub state: StateVector,
    pub action: Option<ActionId>,
    pub reward: f64,
}

pub fn trajectory_csv(steps: &[TrajectoryStep]) -> String {
    let mut out = String::from("step,");
    for name in FIELD_NAMES {
        out.push_str(name);
        out.push(',');
    }
    out.push_str("action,reward\n");
    for (i, st) in steps.iter().enumerate() {
        let _ = write!(out, "{i},");
        for v in st.state.as_slice() {
            let _ = write!(out, "{v:.16e},");
        }
        let action = st.action.map(|a| a.index().to_string()).unwrap_or_default();
        let _ = writeln!(out, "{action},{:.16e}", st.reward);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> HandoverEnv {
        HandoverEnv::reset_default(1).unwrap()
    }

    #[test]
    fn reset_is_deterministic_and_in_range() {
        assert_eq!(env().state(), env().state());
        for seed in 0..1000 {
            let e = HandoverEnv::reset_default(seed).unwrap();
            let d = e.state()[TARGET_DISTANCE];
            assert!((0.45..=0.60).contains(&d), "seed {seed}: {d}");
            assert_eq!(e.state()[BODY_HEADING], 0.0);
            assert!(e.state().validate().is_ok());
        }
    }

    #[test]
    fn degenerate_reset_interval() {
        let e = HandoverEnv::reset(EnvConfig::default(), 0.5, 0.5, 3).unwrap();
        assert_eq!(e.state()[TARGET_DISTANCE], 0.5);
        assert!(HandoverEnv::reset(EnvConfig::default(), 0.6, 0.5, 3).is_err());
        assert!(HandoverEnv::reset(EnvConfig::default(), 0.0, 0.5, 3).is_err());
    }

    #[test]
    fn target_hidden_at_spawn_with_centered_head() {
        for seed in 0..50 {
            let e = HandoverEnv::reset_default(seed).unwrap();
            assert_eq!(e.state()[TARGET_VISIBLE], 0.0);
        }
    }

    #[test]
    fn body_forward_moves_by_step() {
        let mut e = env();
        e.st.state.set(BODY_X, 0.0);
        e.st.state.set(BODY_Y, 0.0);
        e.st.state.set(BODY_HEADING, 0.0);
        e.step(ActionId::BODY_FORWARD);
        assert_eq!(e.state()[BODY_X], 0.05);
        assert_eq!(e.state()[BODY_Y], 0.0);
    }

    #[test]
    fn hand_close_then_open_restores_pose() {
        let mut e = env();
        let before = *e.state();
        e.step(ActionId::LEFT_HAND_CLOSE);
        assert_eq!(e.state()[LEFT_HAND_OPEN], 0.0);
        e.step(ActionId::LEFT_HAND_OPEN);
        let after = *e.state();
        assert_eq!(after[LEFT_HAND_OPEN], 1.0);
        for d in 0..ATTENTION {
            assert_eq!(before[d], after[d], "dim {d}");
        }
    }

    #[test]
    fn arm_offsets_stay_in_reach() {
        let mut e = env();
        for _ in 0..20 {
            e.step(ActionId::RIGHT_ARM_FORWARD);
        }
        let s = e.state();
        let n = (s[RIGHT_ARM_DX].powi(2) + s[RIGHT_ARM_DY].powi(2) + s[RIGHT_ARM_DZ].powi(2)).sqrt();
        assert!(n <= 0.30 + 1e-12);
    }

    #[test]
    fn head_limits_clamp() {
        let mut e = env();
        for _ in 0..20 {
            e.step(ActionId::HEAD_UP);
        }
        assert_eq!(e.state()[HEAD_TILT], e.config().head_tilt_max);
    }

    #[test]
    fn reward_examples() {
        let cfg = EnvConfig::default();
        let mut s = StateVector::zeros();
        s.set(LEFT_HAND_OPEN, 1.0);
        s.set(RIGHT_HAND_OPEN, 1.0);
        s.set(TARGET_DISTANCE, 50.0);
        assert!(reward(&s, &cfg) < 1e-12);

        s.set(TARGET_DISTANCE, 0.20);
        s.set(TARGET_VISIBLE, 1.0);
        let expected = 0.5 * (-0.2f64 / 0.3).exp() + 0.3;
        assert!((reward(&s, &cfg) - expected).abs() < 1e-12);
        assert!((reward(&s, &cfg) - 0.55671).abs() < 1e-5);
    }

    #[test]
    fn closed_hand_penalty_is_exact() {
        let cfg = EnvConfig { w_dist: 1.0, ..EnvConfig::default() };
        let mut s = StateVector::zeros();
        s.set(LEFT_HAND_OPEN, 1.0);
        s.set(RIGHT_HAND_OPEN, 1.0);
        s.set(TARGET_DISTANCE, 0.5);
        s.set(TARGET_VISIBLE, 1.0);
        let open = reward(&s, &cfg);
        s.set(RIGHT_HAND_OPEN, 0.0);
        let closed = reward(&s, &cfg);
        // 1.0·e^(−5/3) + 0.3 = 0.489 keeps both values inside the clamp.
        assert!(open - 0.4 > 0.0);
        assert!((open - closed - 0.4).abs() < 1e-12);
    }

    #[test]
    fn snapshot_restore_replays_identically() {
        let mut e = env();
        let snap = e.snapshot();
        let script = [2, 4, 26, 2, 16];
        let run = |e: &mut HandoverEnv| {
            for &a in &script {
                e.step(ActionId::new(a).unwrap());
            }
            *e.state()
        };
        let first = run(&mut e);
        e.restore(&snap);
        assert_eq!(run(&mut e), first);
    }

    #[test]
    fn nested_snapshots_restore_independently() {
        let mut e = env();
        let outer = e.snapshot();
        e.step(ActionId::BODY_FORWARD);
        let inner = e.snapshot();
        let inner_state = *e.state();
        e.step(ActionId::HEAD_UP);
        e.restore(&outer);
        assert_eq!(e.env_state(), &outer.0);
        e.restore(&inner);
        assert_eq!(e.state(), &inner_state);
    }

    #[test]
    fn byte_tokens_round_trip_and_detect_corruption() {
        let mut e = env();
        for _ in 0..7 {
            e.step(ActionId::HEAD_LEFT);
        }
        let snap = e.snapshot();
        let bytes = snap.to_bytes();
        assert_eq!(EnvSnapshot::from_bytes(&bytes).unwrap(), snap);
        let mut bad = bytes.clone();
        bad[5] ^= 0x40;
        assert!(matches!(EnvSnapshot::from_bytes(&bad), Err(Error::CorruptedSnapshot)));
        assert!(matches!(e.restore_bytes(&bytes[..10]), Err(Error::CorruptedSnapshot)));
    }

    #[test]
    fn gaze_at_face_establishes_attention() {
        let cfg = EnvConfig { attention_flip_prob: 0.0, ..EnvConfig::default() };
        let mut e = HandoverEnv::reset(cfg, 0.5, 0.5, 0).unwrap();
        e.st.state.set(ATTENTION, 0.0);
        // Face at (0.15, 0, 0.70) from the camera at (−0.5, 0, 0.16).
        let elevation = (0.54f64).atan2(0.65);
        while e.state()[HEAD_TILT] < elevation - 0.2 {
            e.step(ActionId::HEAD_UP);
        }
        assert_eq!(e.state()[ATTENTION], 1.0);
    }

    #[test]
    fn wrap_angle_range() {
        for k in -20..20 {
            let a = wrap_angle(k as f64 * 0.7);
            assert!(a > -PI && a <= PI);
        }
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        assert!(EnvConfig::from_toml_str("[env]\nstep_arm = 0.02\n").is_ok());
        assert!(EnvConfig::from_toml_str("step_arm = 0.02\n").is_ok());
        assert!(EnvConfig::from_toml_str("[env]\nwarp = 1\n").is_err());
        assert!(EnvConfig::from_toml_str("[env]\nstep_arm = -1.0\n").is_err());
    }

    #[test]
    fn trajectory_dump_has_header_and_rows() {
        let e = env();
        let rows = vec![TrajectoryStep { state: *e.state(), action: None, reward: e.reward() }];
        let csv = trajectory_csv(&rows);
        assert!(csv.starts_with("step,body_x,"));
        assert_eq!(csv.lines().count(), 2);
    }
}
