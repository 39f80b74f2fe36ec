//! Deterministic seed fan-out.
//!
//! One master seed feeds every random decision in a run. Each consumer
//! (channel draw, sample matrix, receiver noise, precoder, trial, probe)
//! gets its own substream derived from `(master, label, index...)`, so no
//! consumer can shift another's output by drawing more or fewer values,
//! and per-sample streams can be regenerated in any order. That is what
//! makes results independent of thread count and chunking.
//!
//! Derivation: fold each tag into the state with a SplitMix64 step, then
//! seed a ChaCha8 stream from the folded value. ChaCha output is stable
//! across platforms and crate versions, which keeps golden CSV files
//! valid.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// Substream labels. Values are arbitrary but frozen: changing one
/// invalidates every recorded output.
pub mod stream {
    pub const CHANNEL: u64 = 0x01;
    pub const SAMPLES: u64 = 0x02;
    pub const NOISE: u64 = 0x03;
    pub const PRECODER: u64 = 0x04;
    pub const TRIAL: u64 = 0x05;
    pub const PROBE: u64 = 0x06;
    pub const PILOT: u64 = 0x07;
    pub const INSTANCE: u64 = 0x08;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `tags` into `seed`, one SplitMix64 finalizer per tag.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix(seed);
    for &t in tags {
        s = splitmix(s ^ t.wrapping_mul(GOLDEN));
    }
    s
}

/// A fresh ChaCha8 stream for `(seed, tags...)`.
pub fn substream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derive_is_stable_and_tag_sensitive() {
        let a = derive(1, &[stream::CHANNEL]);
        assert_eq!(a, derive(1, &[stream::CHANNEL]));
        assert_ne!(a, derive(1, &[stream::SAMPLES]));
        assert_ne!(a, derive(2, &[stream::CHANNEL]));
        assert_ne!(a, derive(1, &[stream::CHANNEL, 0]));
    }

    #[test]
    fn substreams_do_not_interfere() {
        // Drawing any amount from one stream leaves a sibling untouched.
        let mut a = substream(7, &[stream::SAMPLES, 0]);
        let first = substream(7, &[stream::NOISE, 0]).next_u64();
        for _ in 0..100 {
            a.next_u64();
        }
        assert_eq!(substream(7, &[stream::NOISE, 0]).next_u64(), first);
    }
}
