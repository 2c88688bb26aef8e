//! Keyed random streams.
//!
//! Each draw in a simulated trial comes from its own ChaCha8 stream keyed by
//! `(seed, replicate, patient, purpose)`. Designs that make different choices
//! on the same replicate therefore still see the same arrivals and the same
//! latent uniforms, and adding new draw purposes never shifts existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Arrival,
    EventTimes,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Arrival => 0xA1,
            Purpose::EventTimes => 0xE7,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for one `(seed, replicate, patient, purpose)` key.
pub fn keyed_rng(seed: u64, replicate: u64, patient: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for part in [replicate, patient, purpose.tag()] {
        h = splitmix64(splitmix64(h) ^ part);
    }
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_exact_mut(8) {
        h = splitmix64(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// The random streams belonging to one simulated trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicateStreams {
    pub seed: u64,
    pub replicate: u64,
}

impl ReplicateStreams {
    pub fn new(seed: u64, replicate: u64) -> Self {
        Self { seed, replicate }
    }

    /// Stream for the patient at 0-based position `patient`.
    pub fn stream(&self, patient: usize, purpose: Purpose) -> ChaCha8Rng {
        keyed_rng(self.seed, self.replicate, patient as u64, purpose)
    }
}
