//! Seed derivation.
//!
//! Every random consumer in a run gets its own ChaCha stream keyed by the
//! master seed and a purpose label. Monte-Carlo transfers additionally use the
//! transfer index as the ChaCha stream id, so a transfer's draws do not depend
//! on which worker ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

/// Purposes that receive independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Dataset,
    Init,
    Shuffle,
    TrainingNoise,
    Transfers,
    Heatmap,
    Synthetic,
    Custom(&'static str),
}

impl Purpose {
    fn label(self) -> &'static str {
        match self {
            Purpose::Dataset => "dataset",
            Purpose::Init => "init",
            Purpose::Shuffle => "shuffle",
            Purpose::TrainingNoise => "training-noise",
            Purpose::Transfers => "transfers",
            Purpose::Heatmap => "heatmap",
            Purpose::Synthetic => "synthetic",
            Purpose::Custom(s) => s,
        }
    }
}

fn key(master: u64, purpose: Purpose) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"crossbar/v1/");
    h.update(purpose.label().as_bytes());
    h.update(master.to_le_bytes());
    h.finalize().into()
}

/// Stream 0 of the generator for `purpose`.
pub fn stream(master: u64, purpose: Purpose) -> SimRng {
    SimRng::from_seed(key(master, purpose))
}

/// Stream `index` of the generator for `purpose`.
pub fn indexed_stream(master: u64, purpose: Purpose, index: u64) -> SimRng {
    let mut rng = SimRng::from_seed(key(master, purpose));
    rng.set_stream(index);
    rng
}
