//! Derivation of independent random streams from one master seed.
//!
//! Every stochastic choice in a run draws from a ChaCha8 stream whose seed is
//! the master seed and whose stream id packs `(purpose, major, minor)`:
//! bits 56..64 hold the purpose tag, bits 28..56 the major index (usually the
//! iteration), bits 0..28 the minor index (root, trial, action).

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    InitialDataset = 1,
    Reset = 2,
    Search = 3,
    PolicyFit = 4,
    SignatureFit = 5,
    Evaluation = 6,
    Rollin = 7,
    Prior = 8,
}

const MINOR_BITS: u32 = 28;
const MAJOR_BITS: u32 = 28;

pub fn stream_id(purpose: Purpose, major: u64, minor: u64) -> u64 {
    let major = major & ((1 << MAJOR_BITS) - 1);
    let minor = minor & ((1 << MINOR_BITS) - 1);
    ((purpose as u64) << (MAJOR_BITS + MINOR_BITS)) | (major << MINOR_BITS) | minor
}

/// A ready-to-use generator for the given purpose and indices.
pub fn stream(master: u64, purpose: Purpose, major: u64, minor: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream_id(purpose, major, minor));
    rng
}

/// A derived 64-bit seed, for APIs that take a seed rather than a generator.
pub fn derive(master: u64, purpose: Purpose, major: u64, minor: u64) -> u64 {
    stream(master, purpose, major, minor).next_u64()
}
