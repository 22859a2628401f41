//! Counter-based random numbers: every Gaussian is a pure function of
//! (seed, mode index), so synthesis order and thread count never change a
//! sample path.

use num_complex::Complex64;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; full-avalanche 64-bit mixer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash an argument list into one well-mixed word.
#[inline]
pub fn hash_words(words: &[u64]) -> u64 {
    let mut state: u64 = 0x243f_6a88_85a3_08d3; // pi digits, arbitrary non-zero start
    for &w in words {
        state = mix64(state.wrapping_add(GOLDEN).wrapping_add(w));
    }
    state
}

/// Uniform in (0, 1), never exactly 0 or 1.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Domain tags keep independent uses of the same seed decorrelated.
pub mod tag {
    pub const MODE: u64 = 0x01;
    pub const SAMPLE: u64 = 0x02;
    pub const FIELD: u64 = 0x03;
}

/// Seed for Monte-Carlo sample `index` derived from the master seed.
#[inline]
pub fn sample_seed(master: u64, index: u64) -> u64 {
    hash_words(&[tag::SAMPLE, master, index])
}

/// Standard complex Gaussian attached to one Hermitian pair of noise modes.
///
/// `j` indexes the temporal frequency xi_j = (j + 1/2) dxi (j in Z), `k`
/// the spatial frequency; the canonical representative of the pair
/// {(j, k), (-1-j, -k)} is the one with j >= 0. Both members map to
/// conjugate values, so any field synthesized from these coefficients is
/// real. Unpaired law: each real component has variance 1/2.
pub fn mode_gaussian(seed: u64, j: i64, k: [i64; 2]) -> Complex64 {
    if j >= 0 {
        let base = hash_words(&[tag::MODE, seed, j as u64, k[0] as u64, k[1] as u64]);
        let u1 = unit_f64(mix64(base ^ 0x5851_f42d_4c95_7f2d));
        let u2 = unit_f64(mix64(base ^ 0x1405_7b7e_f767_814f));
        let r = (-u1.ln()).sqrt();
        let th = 2.0 * std::f64::consts::PI * u2;
        Complex64::new(r * th.cos(), r * th.sin())
    } else {
        mode_gaussian(seed, -1 - j, [-k[0], -k[1]]).conj()
    }
}
