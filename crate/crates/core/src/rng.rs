//! Seed derivation and counter-addressed Gaussian streams.
//!
//! Every random quantity in the crate is addressed by `(seed, block)`: block
//! `b` of a stream is produced by a ChaCha8 generator keyed with `seed` and
//! positioned on stream `b`. The content of a sample therefore depends only on
//! its index, never on how work is split across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Rows per generator block.
pub const BLOCK_ROWS: usize = 1024;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a master seed and a label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    // FNV-1a over the label, then mixed with the master seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in label.bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(master ^ splitmix64(h))
}

/// Generator for block `block` of the stream keyed by `seed`.
pub fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Fills `out` with standard normal draws.
pub fn fill_gaussian<R: Rng>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// `n` rows of `d` i.i.d. standard normals, row-major.
///
/// Row `i` lives in block `i / BLOCK_ROWS`, so any prefix of a longer request
/// with the same seed is identical to a shorter request.
pub fn gaussian_rows(d: usize, n: usize, seed: u64) -> Vec<f64> {
    use rayon::prelude::*;
    let mut xs = vec![0.0; n * d];
    if d == 0 {
        return xs;
    }
    xs.par_chunks_mut(BLOCK_ROWS * d).enumerate().for_each(|(b, chunk)| {
        let mut rng = block_rng(seed, b as u64);
        fill_gaussian(&mut rng, chunk);
    });
    xs
}
