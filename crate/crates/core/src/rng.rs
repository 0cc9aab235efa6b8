//! Deterministic random streams.
//!
//! Every stochastic unit of a run (population slot, repertoire sampler,
//! initializer, ...) owns its own ChaCha stream derived from the master seed,
//! a purpose tag and a unit index. Results therefore do not depend on the
//! order in which parallel units finish.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags for derived streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Tessellation = 1,
    ParamInit = 2,
    Hyperparams = 3,
    Slot = 4,
    Repertoire = 5,
    Population = 6,
    MapElitesInit = 7,
}

/// Derives the stream for `(purpose, index)` under `master`.
pub fn stream(master: u64, purpose: Stream, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(master ^ mix(purpose as u64)));
    rng.set_stream(index);
    rng
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
