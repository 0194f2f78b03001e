//! Encode/decode round trips and rank statistics against a schoolbook oracle.

mod common;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use subgen_core::galois::{encode, rank_and_solve, Decoder, Field};

const POLYS: [(u8, u32); 4] = [(1, 0b11), (2, 0b111), (4, 0x13), (8, 0x11D)];

fn poly(bits: u8) -> u32 {
    POLYS.iter().find(|(b, _)| *b == bits).unwrap().1
}

/// Rank by plain Gaussian elimination with the schoolbook multiply.
fn oracle_rank(rows: &[Vec<u8>], bits: u8) -> usize {
    let p = poly(bits);
    let mul = |a, b| common::schoolbook_mul(a, b, bits as u32, p);
    let inv = |a: u8| (1..=255u8).find(|&x| mul(a, x) == 1).unwrap();
    let mut m = rows.to_vec();
    let cols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(piv) = (rank..m.len()).find(|&r| m[r][c] != 0) else {
            continue;
        };
        m.swap(rank, piv);
        let iv = inv(m[rank][c]);
        let pivot: Vec<u8> = m[rank].iter().map(|&x| mul(x, iv)).collect();
        for r in 0..m.len() {
            if r != rank && m[r][c] != 0 {
                let f = m[r][c];
                for (x, &y) in m[r].iter_mut().zip(&pivot) {
                    *x ^= mul(f, y);
                }
            }
        }
        m[rank] = pivot;
        rank += 1;
    }
    rank
}

fn random_payloads(rng: &mut ChaCha8Rng, n: usize, len: usize) -> Vec<Vec<u8>> {
    (0..n).map(|_| (0..len).map(|_| rng.random()).collect()).collect()
}

#[test]
fn full_rank_systems_decode_in_every_field() {
    let mut rng = common::rng(61);
    for bits in [1u8, 4, 8] {
        let f = Field::new(bits).unwrap();
        let mut solved = 0;
        while solved < 1_000 {
            let n = rng.random_range(1..=8);
            let rows: Vec<Vec<u8>> = (0..n).map(|_| f.random_vector(&mut rng, n)).collect();
            if oracle_rank(&rows, bits) < n {
                continue;
            }
            let originals = random_payloads(&mut rng, n, 24);
            let refs: Vec<&[u8]> = originals.iter().map(Vec::as_slice).collect();
            let coded: Vec<Vec<u8>> = rows.iter().map(|c| encode(&f, 0, &refs, c).unwrap().payload).collect();
            let (rank, out) = rank_and_solve(&f, &rows, &coded).unwrap();
            assert_eq!(rank, n);
            assert_eq!(out.unwrap(), originals);
            solved += 1;
        }
    }
}

#[test]
fn decoder_rank_agrees_with_oracle() {
    let mut rng = common::rng(62);
    for bits in [1u8, 2, 4, 8] {
        let f = Field::new(bits).unwrap();
        for _ in 0..500 {
            let n = rng.random_range(1..=6);
            let count = rng.random_range(1..=8);
            let rows: Vec<Vec<u8>> = (0..count).map(|_| f.random_vector(&mut rng, n)).collect();
            let mut dec = Decoder::new(n, 1);
            for r in &rows {
                // Zero payloads keep every system consistent.
                dec.push(&f, r, &[0]).unwrap();
            }
            assert_eq!(dec.rank(), oracle_rank(&rows, bits));
        }
    }
}

#[test]
fn singular_frequency_matches_theory_for_gf256() {
    let f = Field::gf256();
    let mut rng = common::rng(63);
    let n = 5;
    let trials = 10_000;
    let singular = (0..trials)
        .filter(|_| {
            let mut dec = Decoder::new(n, 1);
            for _ in 0..n {
                dec.push(&f, &f.random_vector(&mut rng, n), &[0]).unwrap();
            }
            !dec.is_complete()
        })
        .count();
    let q = 256f64;
    let p = 1.0 - (1..=n).map(|i| 1.0 - q.powi(-(i as i32))).product::<f64>();
    let expected = p * trials as f64;
    let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
    assert!((singular as f64 - expected).abs() <= 3.0 * sigma, "{singular} vs {expected:.2}±{sigma:.2}");
}
