#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subgen_core::model::{run_systematic, ErasureChannel, StateFeedbackMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A non-degenerate reduced matrix from a systematic phase with up to
/// `max_k` packets and `max_n` receivers.
pub fn random_sfm(rng: &mut ChaCha8Rng, max_k: usize, max_n: usize) -> StateFeedbackMatrix {
    loop {
        let k = rng.random_range(1..=max_k);
        let n = rng.random_range(1..=max_n);
        let p = rng.random_range(0.05..0.7);
        let channel = ErasureChannel::new(p, rng.random()).unwrap();
        if let Ok(sfm) = run_systematic(k, n, &channel) {
            return sfm;
        }
    }
}

/// Wants sets as bitmasks over packet columns, read straight from the rows.
pub fn want_masks(sfm: &StateFeedbackMatrix) -> Vec<u32> {
    (0..sfm.n_receivers())
        .map(|r| {
            sfm.row(r)
                .iter()
                .enumerate()
                .filter(|(_, &b)| b == 1)
                .fold(0u32, |m, (c, _)| m | 1 << c)
        })
        .collect()
}

/// True when no receiver wants two packets of `mask`.
pub fn instantly_decodable(wants: &[u32], mask: u32) -> bool {
    wants.iter().all(|w| (w & mask).count_ones() <= 1)
}

/// Carry-less multiply then reduce, bit by bit.
pub fn schoolbook_mul(a: u8, b: u8, bits: u32, poly: u32) -> u8 {
    let mut acc: u32 = 0;
    for i in 0..bits {
        if b >> i & 1 == 1 {
            acc ^= (a as u32) << i;
        }
    }
    for i in (bits..2 * bits).rev() {
        if acc >> i & 1 == 1 {
            acc ^= poly << (i - bits);
        }
    }
    acc as u8
}
