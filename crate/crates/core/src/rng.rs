//! Seed derivation and serializable generator state.
//!
//! Every random stream in a run (embedding initialization, each client's
//! batching and negative sampling, the server's client sampler) is derived
//! from the master seed plus a label, so streams never interfere with each
//! other and the same entity receives the same initial row in every setting.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SeededRng = ChaCha8Rng;

/// Derives a 32-byte generator seed from the master seed and a path of labels.
pub fn derive_seed(master: u64, parts: &[&str]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"fede-seed");
    hasher.update(master.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    seed
}

pub fn derive_rng(master: u64, parts: &[&str]) -> SeededRng {
    SeededRng::from_seed(derive_seed(master, parts))
}

/// Exact position of a [`SeededRng`], enough to resume the stream bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &SeededRng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> SeededRng {
        let mut rng = SeededRng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}
