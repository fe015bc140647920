//! Seeded random streams.
//!
//! Every shuffle, sample and fallback choice in the harness draws from a
//! [`StreamRng`], a PCG XSL-RR 128/64 generator (`rand_pcg::Pcg64`). Streams
//! are keyed by `(seed, scope, lane)`: the 32-byte generator seed is the
//! SHA-256 digest of a fixed domain tag followed by the three key components
//! encoded as little-endian integers. For a tournament the scope is the match
//! id, so every match owns independent streams and can be scheduled on any
//! thread without perturbing results.

use rand::SeedableRng;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Identifier written into every log header so a reader knows how streams were derived.
pub const RNG_ALGORITHM: &str = "pcg64-xsl-rr-128/64;seed=sha256(dixit-stream-v1|seed|scope|lane)";

const DOMAIN_TAG: &[u8] = b"dixit-stream-v1";

pub type StreamRng = Pcg64;

/// Which consumer a stream belongs to within one scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lane {
    /// Deck shuffles, candidate shuffles and discard reshuffles.
    Engine,
    /// Decisions (scripted randomness and fallbacks) for one seat, 1..=4.
    Seat(u8),
    /// Distractor sampling and option shuffling for one bench item.
    BenchCuration(u8),
    /// Per-item agent decisions during a bench run.
    BenchRun,
    /// Round selection for a human session.
    Session,
}

impl Lane {
    fn code(self) -> u64 {
        match self {
            Lane::Engine => 0,
            Lane::Seat(s) => 0x100 | u64::from(s),
            Lane::BenchCuration(d) => 0x200 | u64::from(d),
            Lane::BenchRun => 0x300,
            Lane::Session => 0x400,
        }
    }
}

/// Derive the generator for `(seed, scope, lane)`.
pub fn stream(seed: u64, scope: u64, lane: Lane) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(DOMAIN_TAG);
    hasher.update(seed.to_le_bytes());
    hasher.update(scope.to_le_bytes());
    hasher.update(lane.code().to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    Pcg64::from_seed(key)
}
