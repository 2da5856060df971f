//! C ABI over the handover simulator, affordance signatures and policies.
//!
//! Every function returns a [`PistamStatus`]; results are written through
//! out-pointers. Objects are opaque handles created by `*_new`, `*_load` or
//! `*_from_json` and released with the matching `*_free`. On failure the
//! thread's last error message describes the cause and can be read with
//! [`pistam_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pistam::env::{EnvConfig, EnvSnapshot, HandoverEnv};
use pistam::stam::legal_actions;
use pistam::{ActionId, AffordanceSignature, Error, PolicyModel, StateVector, NUM_ACTIONS, STATE_DIM};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PistamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidAction = 3,
    CorruptedSnapshot = 4,
    Parse = 5,
    Io = 6,
    Untrained = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

/// A handover environment.
pub struct PistamEnv(HandoverEnv);

/// A saved environment state.
pub struct PistamSnapshot(EnvSnapshot);

/// Per-action affordance models.
pub struct PistamSignature(AffordanceSignature);

/// A trained policy.
pub struct PistamPolicy(PolicyModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

struct Failure(PistamStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidAction(_) | Error::UnknownActionName(_) => PistamStatus::InvalidAction,
            Error::CorruptedSnapshot => PistamStatus::CorruptedSnapshot,
            Error::Parse { .. } | Error::Json(_) | Error::Config(_) | Error::UnsupportedVersion(_) | Error::MissingModel(_) => {
                PistamStatus::Parse
            }
            Error::Io(_) => PistamStatus::Io,
            Error::UntrainedPolicy => PistamStatus::Untrained,
            Error::InvalidState(_) | Error::DimensionMismatch { .. } | Error::InvalidArgument(_) => PistamStatus::InvalidArgument,
            _ => PistamStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: PistamStatus, message: &str) -> Failure {
    Failure(status, message.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PistamStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PistamStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            PistamStatus::Internal
        }
    }
}

unsafe fn get<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(PistamStatus::NullPointer, "null pointer"))
}

unsafe fn get_mut<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(PistamStatus::NullPointer, "null pointer"))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(PistamStatus::NullPointer, "null out pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(PistamStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PistamStatus::InvalidArgument, "string is not UTF-8"))
}

unsafe fn state_arg(p: *const f64, len: usize) -> Result<StateVector, Failure> {
    if p.is_null() {
        return Err(fail(PistamStatus::NullPointer, "null state"));
    }
    let s = StateVector::from_slice(std::slice::from_raw_parts(p, len))?;
    s.validate()?;
    Ok(s)
}

fn action_arg(index: u32) -> Result<ActionId, Failure> {
    Ok(ActionId::new(index as usize)?)
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// The last error message of the calling thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pistam_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn pistam_num_actions() -> u32 {
    NUM_ACTIONS as u32
}

#[no_mangle]
pub extern "C" fn pistam_state_dim() -> u32 {
    STATE_DIM as u32
}

/// Static name of action `index`, or null when out of range.
#[no_mangle]
pub extern "C" fn pistam_action_name(index: u32) -> *const c_char {
    static NAMES: OnceLock<Vec<CString>> = OnceLock::new();
    let names = NAMES.get_or_init(|| ActionId::all().map(|a| CString::new(a.name()).expect("action names have no NUL")).collect());
    names.get(index as usize).map_or(ptr::null(), |n| n.as_ptr())
}

/// # Safety
/// `name` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pistam_action_from_name(name: *const c_char, out: *mut u32) -> PistamStatus {
    guard(|| {
        let a: ActionId = str_arg(name)?.parse()?;
        put(out, a.index() as u32)
    })
}

/// Resets a default-configured environment with distance drawn from
/// `[delta_min, delta_max]`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pistam_env_new(seed: u64, delta_min: f64, delta_max: f64, out: *mut *mut PistamEnv) -> PistamStatus {
    guard(|| {
        let env = HandoverEnv::reset(EnvConfig::default(), delta_min, delta_max, seed)?;
        put(out, boxed(PistamEnv(env)))
    })
}

/// Like [`pistam_env_new`] with an environment configuration in TOML.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pistam_env_new_with_config(
    config_toml: *const c_char,
    seed: u64,
    delta_min: f64,
    delta_max: f64,
    out: *mut *mut PistamEnv,
) -> PistamStatus {
    guard(|| {
        let cfg = EnvConfig::from_toml_str(str_arg(config_toml)?)?;
        let env = HandoverEnv::reset(cfg, delta_min, delta_max, seed)?;
        put(out, boxed(PistamEnv(env)))
    })
}

/// # Safety
/// `env` must be null or a handle from `pistam_env_new*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pistam_env_free(env: *mut PistamEnv) {
    release(env)
}

/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pistam_env_step(env: *mut PistamEnv, action: u32) -> PistamStatus {
    guard(|| {
        let env = get_mut(env)?;
        env.0.step(action_arg(action)?);
        Ok(())
    })
}

/// Copies the state vector into `out[0..len]`; `len` must be at least the
/// state dimension.
///
/// # Safety
/// `env` must be a live handle and `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pistam_env_state(env: *const PistamEnv, out: *mut f64, len: usize) -> PistamStatus {
    guard(|| {
        let env = get(env)?;
        if out.is_null() {
            return Err(fail(PistamStatus::NullPointer, "null out pointer"));
        }
        if len < STATE_DIM {
            return Err(fail(PistamStatus::BufferTooSmall, "state buffer too small"));
        }
        ptr::copy_nonoverlapping(env.0.state().as_slice().as_ptr(), out, STATE_DIM);
        Ok(())
    })
}

/// # Safety
/// `env` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pistam_env_reward(env: *const PistamEnv, out: *mut f64) -> PistamStatus {
    guard(|| put(out, get(env)?.0.reward()))
}

/// # Safety
/// `env` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pistam_env_is_success(env: *const PistamEnv, out: *mut bool) -> PistamStatus {
    guard(|| put(out, get(env)?.0.is_success()))
}

/// # Safety
/// `env` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pistam_env_snapshot(env: *const PistamEnv, out: *mut *mut PistamSnapshot) -> PistamStatus {
    guard(|| put(out, boxed(PistamSnapshot(get(env)?.0.snapshot()))))
}

/// # Safety
/// `env` and `snapshot` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn pistam_env_restore(env: *mut PistamEnv, snapshot: *const PistamSnapshot) -> PistamStatus {
    guard(|| {
        let snap = get(snapshot)?;
        get_mut(env)?.0.restore(&snap.0);
        Ok(())
    })
}

/// Restores from a byte token written by [`pistam_snapshot_to_bytes`].
///
/// # Safety
/// `env` must be a live handle and `bytes` readable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pistam_env_restore_bytes(env: *mut PistamEnv, bytes: *const u8, len: usize) -> PistamStatus {
    guard(|| {
        let env = get_mut(env)?;
        if bytes.is_null() {
            return Err(fail(PistamStatus::NullPointer, "null token"));
        }
        env.0.restore_bytes(std::slice::from_raw_parts(bytes, len))?;
        Ok(())
    })
}

/// # Safety
/// `snapshot` must be null or a handle from `pistam_env_snapshot` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pistam_snapshot_free(snapshot: *mut PistamSnapshot) {
    release(snapshot)
}

/// Serializes a snapshot. `out_len` always receives the token length; when
/// `capacity` is smaller the call returns `BufferTooSmall` and writes
/// nothing else, so a null `buf` with zero capacity queries the size.
///
/// # Safety
/// `snapshot` must be a live handle, `buf` writable for `capacity` bytes
/// and `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn pistam_snapshot_to_bytes(
    snapshot: *const PistamSnapshot,
    buf: *mut u8,
    capacity: usize,
    out_len: *mut usize,
) -> PistamStatus {
    guard(|| {
        let bytes = get(snapshot)?.0.to_bytes();
        put(out_len, bytes.len())?;
        if capacity < bytes.len() {
            return Err(fail(PistamStatus::BufferTooSmall, "token buffer too small"));
        }
        if buf.is_null() {
            return Err(fail(PistamStatus::NullPointer, "null token buffer"));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pistam_signature_load(path: *const c_char, out: *mut *mut PistamSignature) -> PistamStatus {
    guard(|| {
        let sig = AffordanceSignature::load(Path::new(str_arg(path)?))?;
        put(out, boxed(PistamSignature(sig)))
    })
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pistam_signature_from_json(json: *const c_char, out: *mut *mut PistamSignature) -> PistamStatus {
    guard(|| {
        let sig = AffordanceSignature::from_json(str_arg(json)?)?;
        put(out, boxed(PistamSignature(sig)))
    })
}

/// # Safety
/// `signature` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pistam_signature_free(signature: *mut PistamSignature) {
    release(signature)
}

/// Affordance density of `action` at a state of `len` values.
///
/// # Safety
/// `signature` must be a live handle, `state` readable for `len` doubles
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pistam_signature_value(
    signature: *const PistamSignature,
    state: *const f64,
    len: usize,
    action: u32,
    out: *mut f64,
) -> PistamStatus {
    guard(|| {
        let sig = get(signature)?;
        let s = state_arg(state, len)?;
        put(out, sig.0.affordance_value(&s, action_arg(action)?))
    })
}

/// Legal action set at a state as a bit mask (bit `i` is action `i`).
/// Below-threshold actions are admitted with probability `epsilon` from a
/// stream seeded by `seed`.
///
/// # Safety
/// `signature` must be a live handle, `state` readable for `len` doubles
/// and `out_bits` writable.
#[no_mangle]
pub unsafe extern "C" fn pistam_signature_legal(
    signature: *const PistamSignature,
    state: *const f64,
    len: usize,
    epsilon: f64,
    seed: u64,
    out_bits: *mut u32,
) -> PistamStatus {
    guard(|| {
        let sig = get(signature)?;
        let s = state_arg(state, len)?;
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(fail(PistamStatus::InvalidArgument, "epsilon must be in [0, 1]"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        put(out_bits, legal_actions(&s, &sig.0, epsilon, &mut rng).legal.bits())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pistam_policy_load(path: *const c_char, out: *mut *mut PistamPolicy) -> PistamStatus {
    guard(|| {
        let policy = PolicyModel::load(Path::new(str_arg(path)?))?;
        put(out, boxed(PistamPolicy(policy)))
    })
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pistam_policy_from_json(json: *const c_char, out: *mut *mut PistamPolicy) -> PistamStatus {
    guard(|| {
        let policy = PolicyModel::from_json(str_arg(json)?)?;
        put(out, boxed(PistamPolicy(policy)))
    })
}

/// # Safety
/// `policy` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pistam_policy_free(policy: *mut PistamPolicy) {
    release(policy)
}

/// The policy's action at a state of `len` values.
///
/// # Safety
/// `policy` must be a live handle, `state` readable for `len` doubles and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pistam_policy_act(policy: *const PistamPolicy, state: *const f64, len: usize, out: *mut u32) -> PistamStatus {
    guard(|| {
        let policy = get(policy)?;
        let s = state_arg(state, len)?;
        put(out, policy.0.act(&s)?.index() as u32)
    })
}
