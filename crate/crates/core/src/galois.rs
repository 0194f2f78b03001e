//! GF(2^m) arithmetic for m in {1, 2, 4, 8} and the coding kernel used
//! inside a sub-generation.
//!
//! Elements are stored in the low `m` bits of a `u8`. Payload bytes pack
//! `8 / m` elements each, so scaling a payload by a coefficient works lane by
//! lane; addition is plain XOR for every field.

use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GaloisError {
    #[error("unsupported extension degree {0}; expected 1, 2, 4 or 8")]
    UnsupportedDegree(u8),
    #[error("division by zero")]
    DivisionByZero,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("element {0} is outside the field")]
    NotAnElement(u8),
    #[error("linear system is inconsistent")]
    InconsistentSystem,
}

/// Reduction polynomials (with the leading term).
const fn reduction_poly(bits: u8) -> u16 {
    match bits {
        1 => 0b11,
        2 => 0b111,
        4 => 0b1_0011,
        _ => 0x11D,
    }
}

/// A binary extension field with log/antilog tables and a byte-scaling table.
#[derive(Clone)]
pub struct Field {
    bits: u8,
    exp: Vec<u8>,
    log: Vec<u8>,
    // byte_mul[c * 256 + b]: every m-bit lane of byte b multiplied by c.
    byte_mul: Vec<u8>,
}

impl std::fmt::Debug for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GF(2^{})", self.bits)
    }
}

impl Field {
    pub fn new(bits: u8) -> Result<Self, GaloisError> {
        if !matches!(bits, 1 | 2 | 4 | 8) {
            return Err(GaloisError::UnsupportedDegree(bits));
        }
        let q = 1usize << bits;
        let poly = reduction_poly(bits);
        let mut exp = vec![0u8; 2 * (q - 1)];
        let mut log = vec![0u8; q];
        let mut x: u16 = 1;
        for i in 0..q - 1 {
            exp[i] = x as u8;
            log[x as usize] = i as u8;
            x <<= 1;
            if x & (1 << bits) != 0 {
                x ^= poly;
            }
        }
        for i in q - 1..2 * (q - 1) {
            exp[i] = exp[i - (q - 1)];
        }
        let mut field = Self {
            bits,
            exp,
            log,
            byte_mul: Vec::new(),
        };
        let mask = (q - 1) as u8;
        let lanes = 8 / bits;
        let mut table = vec![0u8; q * 256];
        for c in 0..q {
            for b in 0..=255u8 {
                let mut out = 0u8;
                for lane in 0..lanes {
                    let shift = lane * bits;
                    let e = (b >> shift) & mask;
                    out |= field.mul(c as u8, e) << shift;
                }
                table[c * 256 + b as usize] = out;
            }
        }
        field.byte_mul = table;
        Ok(field)
    }

    pub fn gf256() -> Self {
        Self::new(8).expect("degree 8 is supported")
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    /// Field size q.
    pub fn order(&self) -> usize {
        1 << self.bits
    }

    pub fn contains(&self, a: u8) -> bool {
        (a as usize) < self.order()
    }

    #[inline]
    pub fn add(&self, a: u8, b: u8) -> u8 {
        a ^ b
    }

    #[inline]
    pub fn mul(&self, a: u8, b: u8) -> u8 {
        if a == 0 || b == 0 {
            return 0;
        }
        self.exp[self.log[a as usize] as usize + self.log[b as usize] as usize]
    }

    pub fn inv(&self, a: u8) -> Result<u8, GaloisError> {
        if a == 0 {
            return Err(GaloisError::DivisionByZero);
        }
        let q1 = self.order() - 1;
        Ok(self.exp[(q1 - self.log[a as usize] as usize) % q1])
    }

    pub fn div(&self, a: u8, b: u8) -> Result<u8, GaloisError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn random_element<R: Rng + ?Sized>(&self, rng: &mut R) -> u8 {
        rng.random_range(0..self.order()) as u8
    }

    /// Uniform coefficient vector, zero included.
    pub fn random_vector<R: Rng + ?Sized>(&self, rng: &mut R, len: usize) -> Vec<u8> {
        (0..len).map(|_| self.random_element(rng)).collect()
    }

    /// `dst += c * src`, byte-wise over packed lanes.
    pub fn axpy(&self, dst: &mut [u8], c: u8, src: &[u8]) {
        match c {
            0 => {}
            1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= s),
            _ => {
                let row = &self.byte_mul[c as usize * 256..c as usize * 256 + 256];
                dst.iter_mut().zip(src).for_each(|(d, &s)| *d ^= row[s as usize]);
            }
        }
    }

    /// `buf *= c`.
    pub fn scale(&self, buf: &mut [u8], c: u8) {
        if c == 1 {
            return;
        }
        let row = &self.byte_mul[c as usize * 256..c as usize * 256 + 256];
        buf.iter_mut().for_each(|b| *b = row[*b as usize]);
    }
}

/// A linear combination of the packets of one sub-generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedPacket {
    pub subgen: usize,
    pub coefficients: Vec<u8>,
    pub payload: Vec<u8>,
}

/// Combines `packets` with `coeffs`. All payloads must have the same length.
pub fn encode(
    field: &Field,
    subgen: usize,
    packets: &[&[u8]],
    coeffs: &[u8],
) -> Result<CodedPacket, GaloisError> {
    if coeffs.len() != packets.len() {
        return Err(GaloisError::LengthMismatch {
            expected: packets.len(),
            found: coeffs.len(),
        });
    }
    if let Some(&bad) = coeffs.iter().find(|&&c| !field.contains(c)) {
        return Err(GaloisError::NotAnElement(bad));
    }
    let len = packets.first().map_or(0, |p| p.len());
    let mut payload = vec![0u8; len];
    for (p, &c) in packets.iter().zip(coeffs) {
        if p.len() != len {
            return Err(GaloisError::LengthMismatch {
                expected: len,
                found: p.len(),
            });
        }
        field.axpy(&mut payload, c, p);
    }
    Ok(CodedPacket {
        subgen,
        coefficients: coeffs.to_vec(),
        payload,
    })
}

/// Removes the contribution of every packet the receiver already holds.
/// `members[i]` is the packet behind `coded.coefficients[i]`.
pub fn receiver_reduce(
    field: &Field,
    coded: &CodedPacket,
    members: &[usize],
    known: &HashMap<usize, Vec<u8>>,
) -> Result<CodedPacket, GaloisError> {
    if members.len() != coded.coefficients.len() {
        return Err(GaloisError::LengthMismatch {
            expected: coded.coefficients.len(),
            found: members.len(),
        });
    }
    let mut out = coded.clone();
    for (i, packet) in members.iter().enumerate() {
        if let Some(payload) = known.get(packet) {
            if payload.len() != out.payload.len() {
                return Err(GaloisError::LengthMismatch {
                    expected: out.payload.len(),
                    found: payload.len(),
                });
            }
            let c = out.coefficients[i];
            field.axpy(&mut out.payload, c, payload);
            out.coefficients[i] = 0;
        }
    }
    Ok(out)
}

/// Incremental Gaussian elimination over a fixed number of unknowns. Rows
/// are kept in reduced echelon form.
#[derive(Debug, Clone)]
pub struct Decoder {
    n_unknowns: usize,
    payload_len: usize,
    // pivot column -> (row, payload), row normalised to 1 at the pivot
    rows: Vec<Option<(Vec<u8>, Vec<u8>)>>,
    rank: usize,
}

impl Decoder {
    pub fn new(n_unknowns: usize, payload_len: usize) -> Self {
        Self {
            n_unknowns,
            payload_len,
            rows: vec![None; n_unknowns],
            rank: 0,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_unknowns
    }

    pub fn is_complete(&self) -> bool {
        self.rank == self.n_unknowns
    }

    /// Adds one equation. Returns whether it raised the rank.
    pub fn push(&mut self, field: &Field, coeffs: &[u8], payload: &[u8]) -> Result<bool, GaloisError> {
        if coeffs.len() != self.n_unknowns {
            return Err(GaloisError::LengthMismatch {
                expected: self.n_unknowns,
                found: coeffs.len(),
            });
        }
        if payload.len() != self.payload_len {
            return Err(GaloisError::LengthMismatch {
                expected: self.payload_len,
                found: payload.len(),
            });
        }
        let mut row = coeffs.to_vec();
        let mut data = payload.to_vec();
        for col in 0..self.n_unknowns {
            if row[col] == 0 {
                continue;
            }
            if let Some((prow, pdata)) = &self.rows[col] {
                let c = row[col];
                for (r, &p) in row.iter_mut().zip(prow) {
                    *r ^= field.mul(c, p);
                }
                field.axpy(&mut data, c, pdata);
            }
        }
        let Some(pivot) = row.iter().position(|&c| c != 0) else {
            if data.iter().any(|&b| b != 0) {
                return Err(GaloisError::InconsistentSystem);
            }
            return Ok(false);
        };
        let inv = field.inv(row[pivot])?;
        for r in row.iter_mut() {
            *r = field.mul(*r, inv);
        }
        field.scale(&mut data, inv);
        // Back-substitute into existing rows to keep reduced form.
        for slot in self.rows.iter_mut().flatten() {
            let c = slot.0[pivot];
            if c != 0 {
                for (r, &p) in slot.0.iter_mut().zip(&row) {
                    *r ^= field.mul(c, p);
                }
                field.axpy(&mut slot.1, c, &data);
            }
        }
        self.rows[pivot] = Some((row, data));
        self.rank += 1;
        Ok(true)
    }

    /// Decoded payloads in unknown order, once the system has full rank.
    pub fn solve(&self) -> Option<Vec<Vec<u8>>> {
        if !self.is_complete() {
            return None;
        }
        Some(
            self.rows
                .iter()
                .map(|r| r.as_ref().expect("full rank").1.clone())
                .collect(),
        )
    }
}

/// Rank of `rows` and, when it equals the number of unknowns, the solved
/// payloads in unknown order.
pub fn rank_and_solve(
    field: &Field,
    rows: &[Vec<u8>],
    payloads: &[Vec<u8>],
) -> Result<(usize, Option<Vec<Vec<u8>>>), GaloisError> {
    if rows.len() != payloads.len() {
        return Err(GaloisError::LengthMismatch {
            expected: rows.len(),
            found: payloads.len(),
        });
    }
    let Some(first) = rows.first() else {
        return Ok((0, None));
    };
    let mut dec = Decoder::new(first.len(), payloads[0].len());
    for (r, p) in rows.iter().zip(payloads) {
        dec.push(field, r, p)?;
    }
    Ok((dec.rank(), dec.solve()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Carry-less multiply then reduce; independent of the log tables.
    fn slow_mul(bits: u8, a: u8, b: u8) -> u8 {
        let mut acc: u16 = 0;
        for i in 0..bits {
            if b >> i & 1 == 1 {
                acc ^= (a as u16) << i;
            }
        }
        for i in (bits..2 * bits).rev() {
            if acc >> i & 1 == 1 {
                acc ^= reduction_poly(bits) << (i - bits);
            }
        }
        acc as u8
    }

    #[test]
    fn tables_match_schoolbook_multiplication() {
        for bits in [1u8, 2, 4, 8] {
            let f = Field::new(bits).unwrap();
            let q = f.order() as u16;
            for a in 0..q {
                for b in 0..q {
                    assert_eq!(f.mul(a as u8, b as u8), slow_mul(bits, a as u8, b as u8));
                }
            }
        }
    }

    #[test]
    fn axioms_small_fields_exhaustive() {
        for bits in [1u8, 2, 4] {
            let f = Field::new(bits).unwrap();
            let q = f.order() as u8;
            for a in 0..q {
                assert_eq!(f.add(a, a), 0);
                if a != 0 {
                    assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
                }
                for b in 0..q {
                    assert_eq!(f.mul(a, b), f.mul(b, a));
                    for c in 0..q {
                        assert_eq!(f.mul(a, f.mul(b, c)), f.mul(f.mul(a, b), c));
                        assert_eq!(f.mul(a, b ^ c), f.mul(a, b) ^ f.mul(a, c));
                    }
                }
            }
        }
    }

    #[test]
    fn gf2_is_and_xor() {
        let f = Field::new(1).unwrap();
        for a in 0..2u8 {
            for b in 0..2u8 {
                assert_eq!(f.mul(a, b), a & b);
                assert_eq!(f.add(a, b), a ^ b);
            }
        }
    }

    #[test]
    fn gf16_distributes_on_random_triples() {
        let f = Field::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..500 {
            let (a, b, c) = (f.random_element(&mut rng), f.random_element(&mut rng), f.random_element(&mut rng));
            assert_eq!(slow_mul(4, a, b ^ c), slow_mul(4, a, b) ^ slow_mul(4, a, c));
            assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
        }
    }

    #[test]
    fn gf256_inverse_and_division() {
        let f = Field::gf256();
        for a in 1..=255u8 {
            assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
            assert_eq!(f.div(a, a).unwrap(), 1);
        }
        assert_eq!(f.inv(0), Err(GaloisError::DivisionByZero));
        assert_eq!(f.div(3, 0), Err(GaloisError::DivisionByZero));
        assert!(Field::new(3).is_err());
    }

    #[test]
    fn packed_lane_scaling() {
        let f = Field::new(4).unwrap();
        let mut buf = vec![0x3A];
        f.scale(&mut buf, 7);
        assert_eq!(buf[0], f.mul(7, 0x3) << 4 | f.mul(7, 0xA));
    }

    fn payloads(rng: &mut ChaCha8Rng, n: usize, len: usize) -> Vec<Vec<u8>> {
        (0..n).map(|_| (0..len).map(|_| rng.random()).collect()).collect()
    }

    #[test]
    fn encode_identity_and_zero() {
        let f = Field::gf256();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = payloads(&mut rng, 3, 32);
        let refs: Vec<&[u8]> = p.iter().map(Vec::as_slice).collect();
        let unit = encode(&f, 0, &refs, &[0, 1, 0]).unwrap();
        assert_eq!(unit.payload, p[1]);
        let zero = encode(&f, 0, &refs, &[0, 0, 0]).unwrap();
        assert!(zero.payload.iter().all(|&b| b == 0));
        assert!(matches!(encode(&f, 0, &refs, &[1, 1]), Err(GaloisError::LengthMismatch { .. })));
    }

    #[test]
    fn gf2_all_ones_is_xor() {
        let f = Field::new(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = payloads(&mut rng, 3, 32);
        let refs: Vec<&[u8]> = p.iter().map(Vec::as_slice).collect();
        let x = encode(&f, 0, &refs, &[1, 1, 1]).unwrap();
        let expect: Vec<u8> = (0..32).map(|i| p[0][i] ^ p[1][i] ^ p[2][i]).collect();
        assert_eq!(x.payload, expect);
    }

    #[test]
    fn reduce_leaves_unknowns() {
        let f = Field::gf256();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = payloads(&mut rng, 3, 32);
        let refs: Vec<&[u8]> = p.iter().map(Vec::as_slice).collect();

        // XOR of packets 1 and 5 with packet 5 known leaves packet 1.
        let x = encode(&f, 0, &refs[..2], &[1, 1]).unwrap();
        let known = HashMap::from([(5usize, p[1].clone())]);
        let r = receiver_reduce(&f, &x, &[1, 5], &known).unwrap();
        assert_eq!(r.coefficients, vec![1, 0]);
        assert_eq!(r.payload, p[0]);

        // one of three known: two coefficients survive
        let x = encode(&f, 0, &refs, &[7, 9, 200]).unwrap();
        let known = HashMap::from([(12usize, p[1].clone())]);
        let r = receiver_reduce(&f, &x, &[11, 12, 13], &known).unwrap();
        assert_eq!(r.coefficients.iter().filter(|&&c| c != 0).count(), 2);

        // all known: nothing left
        let known: HashMap<usize, Vec<u8>> = (0..3).map(|i| (i + 11, p[i].clone())).collect();
        let r = receiver_reduce(&f, &x, &[11, 12, 13], &known).unwrap();
        assert!(r.coefficients.iter().all(|&c| c == 0));
        assert!(r.payload.iter().all(|&b| b == 0));

        let short = HashMap::from([(11usize, vec![0u8; 4])]);
        assert!(receiver_reduce(&f, &x, &[11, 12, 13], &short).is_err());
    }

    #[test]
    fn rank_of_dependent_rows() {
        let f = Field::new(2).unwrap();
        let rows = vec![vec![1, 2], vec![2, f.mul(2, 2)]];
        let payloads = vec![vec![0u8; 4]; 2];
        assert_eq!(rank_and_solve(&f, &rows, &payloads).unwrap().0, 1);

        let f = Field::gf256();
        let rows = vec![vec![1, 2, 3], vec![4, 5, 6], vec![1, 2, 3]];
        let p = vec![vec![1u8], vec![2u8], vec![1u8]];
        assert_eq!(rank_and_solve(&f, &rows, &p).unwrap().0, 2);
        let bad = vec![vec![1u8], vec![2u8], vec![9u8]];
        assert_eq!(rank_and_solve(&f, &rows, &bad), Err(GaloisError::InconsistentSystem));
    }

    #[test]
    fn round_trip_gf256() {
        let f = Field::gf256();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut decoded = 0;
        for _ in 0..1000 {
            let n = rng.random_range(1..=8);
            let p = payloads(&mut rng, n, 32);
            let refs: Vec<&[u8]> = p.iter().map(Vec::as_slice).collect();
            let mut dec = Decoder::new(n, 32);
            while !dec.is_complete() {
                let c = f.random_vector(&mut rng, n);
                let x = encode(&f, 0, &refs, &c).unwrap();
                dec.push(&f, &x.coefficients, &x.payload).unwrap();
            }
            assert_eq!(dec.solve().unwrap(), p);
            decoded += 1;
        }
        assert_eq!(decoded, 1000);
    }
}
