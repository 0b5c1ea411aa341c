//! Random streams.
//!
//! Two kinds of randomness are used:
//!
//! * [`cell_uniform`] is a stateless counter-based generator keyed by
//!   `(seed, step, cell)`. Ring simulations draw one uniform per cell per
//!   step from it, so a run is reproducible regardless of how the cells of a
//!   step are split between workers.
//! * [`stream`] returns a ChaCha8 generator positioned on an independent
//!   stream of a seed. Sequential samplers (boundary walks, volume chunks)
//!   take one stream per run or chunk.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64 random bits for counter `(step, cell)` under key `seed`.
#[inline]
pub fn cell_bits(seed: u64, step: u64, cell: u64) -> u64 {
    let k = mix64(seed.wrapping_add(GOLDEN));
    let s = mix64(k ^ step.wrapping_mul(GOLDEN).wrapping_add(0x632b_e59b_d9b4_e019));
    mix64(s ^ cell.wrapping_mul(0xd1b5_4a32_d192_ed03).wrapping_add(GOLDEN))
}

/// Uniform in `[0, 1)` with 53 random bits.
#[inline]
pub fn cell_uniform(seed: u64, step: u64, cell: u64) -> f64 {
    (cell_bits(seed, step, cell) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Fills `out` with the uniforms of one ring step, cell-major.
pub fn step_uniforms(seed: u64, step: u64, out: &mut [f64]) {
    for (cell, u) in out.iter_mut().enumerate() {
        *u = cell_uniform(seed, step, cell as u64);
    }
}

/// Independent ChaCha8 stream `index` of `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
