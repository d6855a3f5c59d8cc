//! Seeded, splittable random streams and coin transcripts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type LabRng = ChaCha8Rng;

/// Independent stream `stream` derived from a 64-bit seed. Streams with
/// different indices never overlap.
pub fn stream_rng(seed: u64, stream: u64) -> LabRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The span of random words a sampler consumed, enough to replay it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coins {
    pub key: String,
    pub stream: u64,
    pub word_start: u64,
    pub word_end: u64,
}

impl Coins {
    pub fn begin(rng: &LabRng) -> CoinMark {
        CoinMark {
            key: rng.get_seed(),
            stream: rng.get_stream(),
            start: rng.get_word_pos(),
        }
    }

    /// A generator positioned where the recorded span starts.
    pub fn replay(&self) -> LabRng {
        let mut key = [0u8; 32];
        for (i, b) in key.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.key[2 * i..2 * i + 2], 16).expect("hex key");
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_start as u128);
        rng
    }

    pub fn words(&self) -> u64 {
        self.word_end - self.word_start
    }
}

pub struct CoinMark {
    key: [u8; 32],
    stream: u64,
    start: u128,
}

impl CoinMark {
    pub fn finish(self, rng: &LabRng) -> Coins {
        Coins {
            key: self.key.iter().map(|b| format!("{b:02x}")).collect(),
            stream: self.stream,
            word_start: self.start as u64,
            word_end: rng.get_word_pos() as u64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_differ_and_replay() {
        let mut a = stream_rng(7, 0);
        let mut b = stream_rng(7, 1);
        assert_ne!(a.random::<u64>(), b.random::<u64>());
        let mark = Coins::begin(&a);
        let x: Vec<u32> = (0..5).map(|_| a.random()).collect();
        let coins = mark.finish(&a);
        let mut r = coins.replay();
        let y: Vec<u32> = (0..5).map(|_| r.random()).collect();
        assert_eq!(x, y);
        assert_eq!(coins.words(), 5);
    }
}
