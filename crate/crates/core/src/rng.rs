//! Keyed random streams.
//!
//! Every random draw in a filter run comes from a stream derived from
//! `(master seed, time, particle, cluster, purpose)`, so results do not depend
//! on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator handed to model samplers.
pub type StreamRng = ChaCha8Rng;

/// What a stream is used for; part of the derivation key.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Initial = 1,
    Resample = 2,
    Identifier = 3,
    Propagate = 4,
    Simulate = 5,
    Parameters = 6,
    Scenario = 7,
    Custom = 8,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct RngPolicy {
    seed: u64,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngPolicy {
    pub fn new(seed: u64) -> Self {
        RngPolicy { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn key(&self, parts: [u64; 4]) -> [u8; 32] {
        let mut h = splitmix64(self.seed);
        let mut out = [0u8; 32];
        for (i, p) in parts.iter().enumerate() {
            h = splitmix64(h ^ splitmix64(p.wrapping_add(i as u64 + 1)));
            out[i * 8..(i + 1) * 8].copy_from_slice(&h.to_le_bytes());
        }
        out
    }

    /// The stream for one `(time, particle, cluster, purpose)` key.
    pub fn stream(
        &self,
        time: usize,
        particle: usize,
        cluster: usize,
        purpose: Purpose,
    ) -> StreamRng {
        ChaCha8Rng::from_seed(self.key([
            time as u64,
            particle as u64,
            cluster as u64,
            purpose as u64,
        ]))
    }

    /// A child policy, e.g. one per `(dimension, algorithm)` row of a sweep.
    pub fn derive(&self, label: u64, index: u64) -> RngPolicy {
        let k = self.key([label, index, u64::MAX, Purpose::Custom as u64]);
        RngPolicy::new(u64::from_le_bytes(k[24..32].try_into().expect("8 bytes")))
    }
}
