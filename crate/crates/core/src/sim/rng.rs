//! Counter-derived random streams.
//!
//! Every block of `CHUNK_LEN` samples of every noise process draws from its
//! own ChaCha8 generator keyed by `(seed, stream, chunk)`, so any chunk can be
//! produced independently and the output never depends on how work is split.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Samples per independently seeded block.
pub const CHUNK_LEN: usize = 8192;

/// Identifies one independent noise process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    DiffMode = 1,
    SumMode = 2,
    VacuumSignal = 3,
    VacuumIdler = 4,
    HwpBeat = 5,
    ElecData = 6,
    ElecShot = 7,
    ElecDark = 8,
    PowerMeter = 9,
}

pub fn chunk_rng(seed: u64, stream: Stream, chunk: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(stream as u64).to_le_bytes());
    key[16..24].copy_from_slice(&chunk.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Fills `out` with i.i.d. normals of standard deviation `std`.
pub fn fill_normal(seed: u64, stream: Stream, chunk: u64, std: f64, out: &mut [f64]) {
    let mut rng = chunk_rng(seed, stream, chunk);
    for x in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *x = std * z;
    }
}
