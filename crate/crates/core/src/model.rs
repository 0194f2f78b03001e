//! Packet demand state after the systematic phase, and the erasure channel.
//!
//! A [`StateFeedbackMatrix`] records which of the partially received packets
//! each receiver still wants. Rows are receivers, columns are packets; column
//! `k` maps back to the original block index `packet_ids[k]`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("row {row} has {found} entries, expected {expected}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{0} is all zeros; the matrix is not reduced")]
    EmptyRowOrColumn(String),
    #[error("entry ({row}, {col}) is {value}, expected 0 or 1")]
    InvalidEntry { row: usize, col: usize, value: u8 },
    #[error("expected {expected} packet ids, got {found}")]
    PacketIdCount { expected: usize, found: usize },
    #[error("packet id {0} is repeated or zero")]
    BadPacketId(usize),
    #[error("matrix has no rows")]
    Empty,
    #[error("every packet was received by every receiver")]
    DegenerateOutcome,
    #[error("erasure probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("block needs at least one packet and one receiver")]
    EmptyBlock,
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Binary receiver-by-packet demand matrix. Entry `(n, k)` is set when
/// receiver `n` still wants packet column `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateFeedbackMatrix {
    n_packets: usize,
    packet_ids: Vec<usize>,
    receiver_ids: Vec<usize>,
    entries: Vec<bool>,
    wants: Vec<Vec<usize>>,
    targets: Vec<Vec<usize>>,
}

impl StateFeedbackMatrix {
    /// Builds a validated matrix from 0/1 rows. `packet_ids` defaults to
    /// `1..=K` when `None`.
    pub fn from_rows(rows: &[Vec<u8>], packet_ids: Option<Vec<usize>>) -> Result<Self, ModelError> {
        if rows.is_empty() {
            return Err(ModelError::Empty);
        }
        let k = rows[0].len();
        let mut entries = Vec::with_capacity(rows.len() * k);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(ModelError::DimensionMismatch {
                    row: r,
                    expected: k,
                    found: row.len(),
                });
            }
            for (c, &v) in row.iter().enumerate() {
                match v {
                    0 => entries.push(false),
                    1 => entries.push(true),
                    value => return Err(ModelError::InvalidEntry { row: r, col: c, value }),
                }
            }
        }
        let packet_ids = packet_ids.unwrap_or_else(|| (1..=k).collect());
        let receiver_ids = (1..=rows.len()).collect();
        Self::from_entries(k, entries, packet_ids, receiver_ids)
    }

    fn from_entries(
        k: usize,
        entries: Vec<bool>,
        packet_ids: Vec<usize>,
        receiver_ids: Vec<usize>,
    ) -> Result<Self, ModelError> {
        if k == 0 {
            return Err(ModelError::EmptyRowOrColumn("the packet set".into()));
        }
        if packet_ids.len() != k {
            return Err(ModelError::PacketIdCount {
                expected: k,
                found: packet_ids.len(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for &id in &packet_ids {
            if id == 0 || !seen.insert(id) {
                return Err(ModelError::BadPacketId(id));
            }
        }
        let n = entries.len() / k;
        let mut wants = vec![Vec::new(); n];
        let mut targets = vec![Vec::new(); k];
        for r in 0..n {
            for c in 0..k {
                if entries[r * k + c] {
                    wants[r].push(c);
                    targets[c].push(r);
                }
            }
        }
        if let Some(r) = wants.iter().position(Vec::is_empty) {
            return Err(ModelError::EmptyRowOrColumn(format!("row {r}")));
        }
        if let Some(c) = targets.iter().position(Vec::is_empty) {
            return Err(ModelError::EmptyRowOrColumn(format!("column {c}")));
        }
        Ok(Self {
            n_packets: k,
            packet_ids,
            receiver_ids,
            entries,
            wants,
            targets,
        })
    }

    pub fn n_receivers(&self) -> usize {
        self.wants.len()
    }

    pub fn n_packets(&self) -> usize {
        self.n_packets
    }

    /// Original block index of each column.
    pub fn packet_ids(&self) -> &[usize] {
        &self.packet_ids
    }

    /// Original receiver index of each row (1-based).
    pub fn receiver_ids(&self) -> &[usize] {
        &self.receiver_ids
    }

    pub fn wants_packet(&self, receiver: usize, packet: usize) -> bool {
        self.entries[receiver * self.n_packets + packet]
    }

    /// Columns wanted by `receiver`, ascending.
    pub fn wants(&self, receiver: usize) -> &[usize] {
        &self.wants[receiver]
    }

    /// Rows that want column `packet`, ascending.
    pub fn targets(&self, packet: usize) -> &[usize] {
        &self.targets[packet]
    }

    pub fn row(&self, receiver: usize) -> Vec<u8> {
        (0..self.n_packets)
            .map(|c| self.wants_packet(receiver, c) as u8)
            .collect()
    }

    /// Looks up a column by its original packet id.
    pub fn column_of(&self, packet_id: usize) -> Option<usize> {
        self.packet_ids.iter().position(|&p| p == packet_id)
    }
}

impl fmt::Display for StateFeedbackMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.n_receivers(), self.n_packets)?;
        let ids: Vec<String> = self.packet_ids.iter().map(ToString::to_string).collect();
        writeln!(f, "packets: {}", ids.join(" "))?;
        for r in 0..self.n_receivers() {
            let row: Vec<String> = self.row(r).iter().map(ToString::to_string).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

impl FromStr for StateFeedbackMatrix {
    type Err = ModelError;

    /// Text form: a `N K` line, an optional `packets: ...` line, then `N`
    /// rows of `K` space-separated 0/1 entries. Blank lines and `#` comments
    /// are ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut lines = s
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let parse_err = |line: usize, msg: &str| ModelError::Parse {
            line,
            msg: msg.to_string(),
        };
        let (line, header) = lines.next().ok_or_else(|| parse_err(1, "missing `N K` line"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(line, "bad dimension")))
            .collect::<Result<_, _>>()?;
        let [n, k] = dims[..] else {
            return Err(parse_err(line, "expected `N K`"));
        };
        let mut packet_ids = None;
        let mut rows = Vec::with_capacity(n);
        for (line, text) in lines {
            if let Some(rest) = text.strip_prefix("packets:") {
                if !rows.is_empty() || packet_ids.is_some() {
                    return Err(parse_err(line, "`packets:` must precede the rows"));
                }
                let ids = rest
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| parse_err(line, "bad packet id")))
                    .collect::<Result<Vec<usize>, _>>()?;
                packet_ids = Some(ids);
                continue;
            }
            let row = text
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| parse_err(line, "bad entry")))
                .collect::<Result<Vec<u8>, _>>()?;
            if row.len() != k {
                return Err(ModelError::DimensionMismatch {
                    row: rows.len(),
                    expected: k,
                    found: row.len(),
                });
            }
            rows.push(row);
        }
        if rows.len() != n {
            return Err(parse_err(0, &format!("expected {n} rows, found {}", rows.len())));
        }
        Self::from_rows(&rows, packet_ids)
    }
}

/// Wants/Target set sizes of a matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandProfile {
    pub wants_sizes: Vec<usize>,
    pub w_max: usize,
    pub target_sizes: Vec<usize>,
    pub total_targets: usize,
}

pub fn demand_profile(sfm: &StateFeedbackMatrix) -> DemandProfile {
    let wants_sizes: Vec<usize> = (0..sfm.n_receivers()).map(|r| sfm.wants(r).len()).collect();
    let target_sizes: Vec<usize> = (0..sfm.n_packets()).map(|c| sfm.targets(c).len()).collect();
    DemandProfile {
        w_max: wants_sizes.iter().copied().max().unwrap_or(0),
        total_targets: target_sizes.iter().sum(),
        wants_sizes,
        target_sizes,
    }
}

/// Memoryless packet erasure channel from the sender to every receiver.
///
/// Draws come from independent ChaCha streams keyed by `(seed, stream key)`,
/// so two runs that consume the same stream in the same order see the same
/// erasure pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct ErasureChannel {
    erasure_prob: f64,
    per_receiver: Option<Vec<f64>>,
    seed: u64,
}

/// Stream key reserved for the systematic phase.
pub const SYSTEMATIC_STREAM: u64 = u64::MAX;

impl ErasureChannel {
    pub fn new(erasure_prob: f64, seed: u64) -> Result<Self, ModelError> {
        check_prob(erasure_prob)?;
        Ok(Self {
            erasure_prob,
            per_receiver: None,
            seed,
        })
    }

    /// Overrides the erasure probability per receiver (indexed by original
    /// receiver position in the block).
    pub fn with_receiver_probs(mut self, probs: Vec<f64>) -> Result<Self, ModelError> {
        for &p in &probs {
            check_prob(p)?;
        }
        self.per_receiver = Some(probs);
        Ok(self)
    }

    pub fn erasure_prob(&self) -> f64 {
        self.erasure_prob
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn receiver_prob(&self, receiver: usize) -> f64 {
        self.per_receiver
            .as_ref()
            .and_then(|p| p.get(receiver).copied())
            .unwrap_or(self.erasure_prob)
    }

    /// True when some receiver can never get a packet through.
    pub fn is_blocking(&self) -> bool {
        self.erasure_prob >= 1.0
            || self
                .per_receiver
                .as_ref()
                .is_some_and(|p| p.iter().any(|&q| q >= 1.0))
    }

    /// Channel for an independent trial; same parameters, derived seed.
    pub fn for_trial(&self, trial: u64) -> Self {
        Self {
            seed: mix(self.seed, trial),
            ..self.clone()
        }
    }

    pub fn rng(&self, key: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix(self.seed, key))
    }

    /// Erasure draws for one stream of transmissions.
    pub fn stream(&self, key: u64) -> ErasureStream<'_> {
        ErasureStream {
            channel: self,
            rng: self.rng(key),
        }
    }
}

fn check_prob(p: f64) -> Result<(), ModelError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ModelError::BadProbability(p))
    }
}

/// splitmix64 finalizer over two words.
pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct ErasureStream<'a> {
    channel: &'a ErasureChannel,
    rng: ChaCha8Rng,
}

impl ErasureStream<'_> {
    /// One transmission: `received[n]` for each of `n_receivers` receivers.
    pub fn draw(&mut self, n_receivers: usize) -> Vec<bool> {
        (0..n_receivers)
            .map(|n| self.rng.random::<f64>() >= self.channel.receiver_prob(n))
            .collect()
    }

    /// One transmission as seen by a single receiver.
    pub fn received(&mut self, receiver: usize) -> bool {
        self.rng.random::<f64>() >= self.channel.receiver_prob(receiver)
    }
}

/// Sends `k_total` packets uncoded to `n_total` receivers and returns the
/// reduced matrix of what is still missing. Receivers holding every packet
/// and packets held by every receiver are dropped.
pub fn run_systematic(
    k_total: usize,
    n_total: usize,
    channel: &ErasureChannel,
) -> Result<StateFeedbackMatrix, ModelError> {
    if k_total == 0 || n_total == 0 {
        return Err(ModelError::EmptyBlock);
    }
    let mut stream = channel.stream(SYSTEMATIC_STREAM);
    // missing[n][k]
    let mut missing = vec![vec![false; k_total]; n_total];
    for k in 0..k_total {
        for (n, got) in stream.draw(n_total).into_iter().enumerate() {
            missing[n][k] = !got;
        }
    }
    let cols: Vec<usize> = (0..k_total)
        .filter(|&k| missing.iter().any(|row| row[k]))
        .collect();
    let rows: Vec<usize> = (0..n_total)
        .filter(|&n| missing[n].iter().any(|&m| m))
        .collect();
    if cols.is_empty() {
        return Err(ModelError::DegenerateOutcome);
    }
    let mut entries = Vec::with_capacity(rows.len() * cols.len());
    for &n in &rows {
        entries.extend(cols.iter().map(|&k| missing[n][k]));
    }
    StateFeedbackMatrix::from_entries(
        cols.len(),
        entries,
        cols.iter().map(|k| k + 1).collect(),
        rows.iter().map(|n| n + 1).collect(),
    )
}

/// The worked-example matrix with four receivers and eight packets.
pub fn fixture_f1() -> StateFeedbackMatrix {
    include_str!("../fixtures/f1.sfm").parse().expect("fixture f1 is valid")
}

/// Six receivers, each wanting a distinct pair of four packets.
pub fn fixture_f2() -> StateFeedbackMatrix {
    include_str!("../fixtures/f2.sfm").parse().expect("fixture f2 is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_matrix() {
        let sfm = StateFeedbackMatrix::from_rows(&[vec![1]], None).unwrap();
        assert_eq!((sfm.n_receivers(), sfm.n_packets()), (1, 1));
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = StateFeedbackMatrix::from_rows(&[vec![1, 0, 1], vec![1, 0, 1, 1]], None).unwrap_err();
        assert!(matches!(err, ModelError::DimensionMismatch { row: 1, .. }));
    }

    #[test]
    fn zero_row_and_column_rejected() {
        let err = StateFeedbackMatrix::from_rows(&[vec![1, 0], vec![0, 0]], None).unwrap_err();
        assert!(matches!(err, ModelError::EmptyRowOrColumn(_)));
        let err = StateFeedbackMatrix::from_rows(&[vec![1, 0], vec![1, 0]], None).unwrap_err();
        assert!(matches!(err, ModelError::EmptyRowOrColumn(_)));
        let err = StateFeedbackMatrix::from_rows(&[vec![2]], None).unwrap_err();
        assert!(matches!(err, ModelError::InvalidEntry { .. }));
    }

    #[test]
    fn duplicate_packet_ids_rejected() {
        let err = StateFeedbackMatrix::from_rows(&[vec![1, 1]], Some(vec![3, 3])).unwrap_err();
        assert_eq!(err, ModelError::BadPacketId(3));
    }

    #[test]
    fn fixture_profiles() {
        let f1 = demand_profile(&fixture_f1());
        assert_eq!(f1.wants_sizes, vec![3, 4, 3, 4]);
        assert_eq!(f1.w_max, 4);
        assert_eq!(f1.target_sizes, vec![1, 2, 1, 2, 2, 3, 1, 2]);
        assert_eq!(f1.total_targets, 14);

        let f2 = demand_profile(&fixture_f2());
        assert_eq!(f2.wants_sizes, vec![2; 6]);
        assert_eq!(f2.w_max, 2);
        assert_eq!(f2.target_sizes, vec![3; 4]);
        assert_eq!(f2.total_targets, 12);

        let id = StateFeedbackMatrix::from_rows(&[vec![1, 0], vec![0, 1]], None).unwrap();
        let p = demand_profile(&id);
        assert_eq!((p.wants_sizes, p.target_sizes), (vec![1, 1], vec![1, 1]));
    }

    #[test]
    fn text_round_trip() {
        let f1 = fixture_f1();
        let again: StateFeedbackMatrix = f1.to_string().parse().unwrap();
        assert_eq!(f1, again);
        let bare: StateFeedbackMatrix = "2 2\n1 0\n0 1\n".parse().unwrap();
        assert_eq!(bare.packet_ids(), &[1, 2]);
        assert!("2 2\n1 0\n".parse::<StateFeedbackMatrix>().is_err());
    }

    #[test]
    fn systematic_edges() {
        let clean = ErasureChannel::new(0.0, 1).unwrap();
        assert_eq!(run_systematic(10, 5, &clean), Err(ModelError::DegenerateOutcome));

        let dead = ErasureChannel::new(1.0, 1).unwrap();
        let sfm = run_systematic(6, 4, &dead).unwrap();
        assert_eq!((sfm.n_receivers(), sfm.n_packets()), (4, 6));
        assert!((0..4).all(|r| sfm.wants(r).len() == 6));
        assert!(ErasureChannel::new(1.5, 0).is_err());
    }

    #[test]
    fn systematic_erasure_count_is_binomial() {
        // Binomial(400, 0.2): mean 80, sigma 8.
        let ch = ErasureChannel::new(0.2, 2024).unwrap();
        let sfm = run_systematic(20, 20, &ch).unwrap();
        let ones: usize = demand_profile(&sfm).total_targets;
        assert!((ones as f64 - 80.0).abs() <= 4.0 * 8.0, "ones = {ones}");
    }

    #[test]
    fn channel_is_deterministic() {
        let ch = ErasureChannel::new(0.3, 77).unwrap();
        assert_eq!(run_systematic(20, 30, &ch), run_systematic(20, 30, &ch));
        let a = ch.stream(5).draw(50);
        let b = ch.stream(5).draw(50);
        assert_eq!(a, b);
        assert_ne!(ch.stream(6).draw(50), a);
    }

    #[test]
    fn reduced_matrix_never_has_empty_lines() {
        let base = ErasureChannel::new(0.2, 9).unwrap();
        for t in 0..10_000 {
            let ch = base.for_trial(t);
            let n = 1 + (t as usize % 7);
            let k = 1 + (t as usize / 7 % 6);
            match run_systematic(k, n, &ch) {
                Ok(sfm) => {
                    assert!((0..sfm.n_receivers()).all(|r| !sfm.wants(r).is_empty()));
                    assert!((0..sfm.n_packets()).all(|c| !sfm.targets(c).is_empty()));
                    let p = demand_profile(&sfm);
                    assert_eq!(p.wants_sizes.iter().sum::<usize>(), p.total_targets);
                    assert!(p.w_max <= sfm.n_packets());
                }
                Err(e) => assert_eq!(e, ModelError::DegenerateOutcome),
            }
        }
    }
}
