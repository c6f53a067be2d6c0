//! Seeded random streams. Every replication of every scenario gets its own
//! ChaCha stream derived from the master seed, so results never depend on
//! how work is split across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser, used to decorrelate seed components.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A reproducible random number generator with an explicit 64-bit seed.
#[derive(Debug, Clone)]
pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Stream for replication `rep` of scenario `scenario` under `master`.
    pub fn for_replication(master: u64, scenario: u64, rep: u64) -> Self {
        let key = mix64(master ^ mix64(scenario.wrapping_add(0xA076_1D64_78BD_642F)));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(rep);
        SeededRng(rng)
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}
