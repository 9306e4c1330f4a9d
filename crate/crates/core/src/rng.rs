//! Named random streams derived from a single top-level seed.
//!
//! Every subsystem draws from its own ChaCha20 stream so that, for example,
//! changing the number of training epochs never perturbs the base matrix.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Tag written into checkpoint headers describing how normals are drawn.
pub const PRNG_TAG: &[u8; 16] = b"chacha20+zig0.5\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    BaseMatrix = 1,
    Init = 2,
    RandomPolicy = 3,
    DropRandom = 4,
    Shuffle = 5,
    Synth = 6,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
