//! Counter-style RNG streams: every (seed, stream, substream) triple maps
//! to an independent ChaCha8 key, so parallel work is reproducible
//! regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const RNG_NAME: &str = "chacha8[seed|stream|substream|domain]";

pub fn stream(seed: u64, stream: u64, substream: u64, domain: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(&substream.to_le_bytes());
    key[24..32].copy_from_slice(&domain.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

pub const DOMAIN_SIMULATION: u64 = 1;
pub const DOMAIN_CLEARING: u64 = 2;
pub const DOMAIN_POPULATION: u64 = 3;
pub const DOMAIN_RESHUFFLE: u64 = 4;
