//! Counter-based seed splitting.
//!
//! Every random stream in the crate is keyed by a master seed plus a short
//! path of integer tags (experiment id, cell, replicate, attempt, ...). The
//! key is hashed with SplitMix64 into a ChaCha8 seed, so a stream depends only
//! on its key and never on how many other streams were drawn before it or on
//! which thread draws it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const TAG_INIT: u64 = 0x494e_4954;
pub const TAG_CV: u64 = 0x4356_464f;
pub const TAG_BOOT: u64 = 0x424f_4f54;
pub const TAG_DATA: u64 = 0x4441_5441;
pub const TAG_FIT: u64 = 0x4649_5421;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit child seed from `master` and a tag path.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix(master);
    for &t in tags {
        h = splitmix(h ^ splitmix(t.wrapping_add(0xA076_1D64_78BD_642F)));
    }
    h
}

/// Independent stream for the key `(master, tags...)`.
pub fn substream(master: u64, tags: &[u64]) -> StreamRng {
    let s0 = derive_seed(master, tags);
    let mut seed = [0u8; 32];
    let mut s = s0;
    for chunk in seed.chunks_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
