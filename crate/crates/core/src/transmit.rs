//! Coded transmission phase under erasures.
//!
//! Sub-generations are broadcast either one after another until every
//! targeted receiver has finished (sequential), or interleaved in feedback
//! rounds that each send the current largest demand of every group
//! (semi-online), optionally merging groups whose remaining receivers do not
//! overlap.
//!
//! Receptions are drawn from one stream per (sub-generation, receiver), so a
//! receiver sees the same erasure pattern for a given sub-generation under
//! every strategy. Coefficients come from a separate per-group stream.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::galois::{Decoder, Field, GaloisError};
use crate::model::{mix, ErasureChannel, ErasureStream, StateFeedbackMatrix};
use crate::partition::{Partition, PartitionMode};

const COEFFICIENT_TAG: u64 = 0xC0EF_F1C1_E575_0001;
const PAYLOAD_TAG: u64 = 0x9A7_10AD_0000_0002;
const MERGE_TAG: u64 = 0x3E76_E000_0000_0003;
const SCHEDULE_TAG: u64 = 0x5C4E_D01E_0000_0004;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransmitError {
    #[error("packet {packet} sits in {diversity} sub-generations; reduce diversity before transmitting with g >= 2")]
    NonReducedDiversity { packet: usize, diversity: usize },
    #[error("log is incomplete: {pending} wanted packets were never decoded")]
    IncompleteLog { pending: usize },
    #[error("invalid strategy configuration: {0}")]
    Config(String),
    #[error("a receiver never receives anything, so the phase cannot finish")]
    BlockingChannel,
    #[error(transparent)]
    Galois(#[from] GaloisError),
    #[error("receiver {receiver} decoded a wrong payload for packet column {packet}")]
    DecodeMismatch { receiver: usize, packet: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Sequential,
    SemiOnline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecodeMode {
    /// Every received coded packet is innovative.
    Idealized,
    /// Real coefficients over GF(2^m) with rank tracking.
    Concrete,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    /// Merge non-conflicting groups between rounds (semi-online only).
    pub merging: bool,
    /// Sub-generation size per round, last value repeating (sequential only).
    pub g_schedule: Option<Vec<usize>>,
    pub decode_mode: DecodeMode,
    pub field_bits: u8,
    /// Payload bytes per packet in concrete mode.
    pub payload_len: usize,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Sequential,
            merging: false,
            g_schedule: None,
            decode_mode: DecodeMode::Idealized,
            field_bits: 8,
            payload_len: 16,
        }
    }
}

impl StrategyConfig {
    pub fn sequential() -> Self {
        Self::default()
    }

    pub fn semi_online(merging: bool) -> Self {
        Self {
            strategy: Strategy::SemiOnline,
            merging,
            ..Self::default()
        }
    }

    pub fn concrete(mut self, field_bits: u8) -> Self {
        self.decode_mode = DecodeMode::Concrete;
        self.field_bits = field_bits;
        self
    }

    pub fn validate(&self) -> Result<(), TransmitError> {
        if self.merging && self.strategy != Strategy::SemiOnline {
            return Err(TransmitError::Config("merging requires the semi-online strategy".into()));
        }
        if let Some(s) = &self.g_schedule {
            if self.strategy != Strategy::Sequential {
                return Err(TransmitError::Config("g_schedule requires the sequential strategy".into()));
            }
            if s.is_empty() || s.contains(&0) {
                return Err(TransmitError::Config("g_schedule needs at least one value, all >= 1".into()));
            }
        }
        if ![1, 2, 4, 8].contains(&self.field_bits) {
            return Err(TransmitError::Config(format!("field_bits {} not in {{1,2,4,8}}", self.field_bits)));
        }
        if self.payload_len == 0 {
            return Err(TransmitError::Config("payload_len must be positive".into()));
        }
        Ok(())
    }
}

/// One coded transmission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotRecord {
    /// 1-based slot within the coded phase.
    pub slot: usize,
    /// 1-based feedback round.
    pub round: usize,
    /// Sub-generation indices carried by this slot (several after a merge).
    pub members: Vec<usize>,
    /// Field degree of the coefficients; 1 for plain XOR.
    pub field_bits: u8,
    /// Receivers still missing something from this group.
    pub receivers: Vec<usize>,
    /// Reception flag aligned with `receivers`.
    pub received: Vec<bool>,
    /// (receiver, packet columns) decoded in this slot.
    pub decoded: Vec<(usize, Vec<usize>)>,
}

/// Outcome of a coded phase.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionLog {
    pub slots: Vec<SlotRecord>,
    /// Slot count at the end of each round.
    pub round_ends: Vec<usize>,
    /// Sum of current largest demands over live groups at the start of each
    /// round.
    pub round_w_max: Vec<usize>,
    /// (sum before, sum after) for every round boundary where merging ran.
    pub merges: Vec<(usize, usize)>,
    /// Decode slot per receiver and packet column, for wanted pairs.
    pub decode_slot: Vec<Vec<Option<usize>>>,
    wanted: Vec<Vec<bool>>,
    packet_ids: Vec<usize>,
}

impl TransmissionLog {
    /// Log of a block that needed no coded phase.
    pub fn empty() -> Self {
        Self {
            slots: Vec::new(),
            round_ends: Vec::new(),
            round_w_max: Vec::new(),
            merges: Vec::new(),
            decode_slot: Vec::new(),
            wanted: Vec::new(),
            packet_ids: Vec::new(),
        }
    }

    fn new(sfm: &StateFeedbackMatrix) -> Self {
        let wanted: Vec<Vec<bool>> = (0..sfm.n_receivers())
            .map(|r| (0..sfm.n_packets()).map(|c| sfm.wants_packet(r, c)).collect())
            .collect();
        Self {
            decode_slot: vec![vec![None; sfm.n_packets()]; sfm.n_receivers()],
            wanted,
            packet_ids: sfm.packet_ids().to_vec(),
            ..Self::empty()
        }
    }

    pub fn slots_sent(&self) -> usize {
        self.slots.len()
    }

    pub fn n_rounds(&self) -> usize {
        self.round_ends.len()
    }

    /// Last slot in which any receiver decoded something.
    pub fn completion(&self) -> usize {
        self.decode_slot.iter().flatten().flatten().copied().max().unwrap_or(0)
    }

    /// Sum of decode slots over decoded wanted pairs.
    pub fn delay_sum(&self) -> usize {
        self.decode_slot.iter().flatten().flatten().sum()
    }

    pub fn total_targets(&self) -> usize {
        self.wanted.iter().flatten().filter(|&&w| w).count()
    }

    /// Wanted (receiver, packet) pairs not yet decoded.
    pub fn pending(&self) -> usize {
        self.wanted
            .iter()
            .zip(&self.decode_slot)
            .map(|(w, d)| w.iter().zip(d).filter(|(&w, d)| w && d.is_none()).count())
            .sum()
    }

    /// CSV rows `slot,round,subgen,receiver,received,decoded_packets`, one
    /// per live receiver per slot. Merged groups list members joined by `+`;
    /// decoded packets are original ids separated by spaces.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("slot,round,subgen,receiver,received,decoded_packets\n");
        for s in &self.slots {
            let subgen = s.members.iter().map(|m| m.to_string()).collect::<Vec<_>>().join("+");
            for (&r, &got) in s.receivers.iter().zip(&s.received) {
                let decoded = s
                    .decoded
                    .iter()
                    .find(|(n, _)| *n == r)
                    .map(|(_, ps)| {
                        ps.iter()
                            .map(|&p| self.packet_ids[p].to_string())
                            .collect::<Vec<_>>()
                            .join(" ")
                    })
                    .unwrap_or_default();
                let _ = writeln!(out, "{},{},{},{},{},{}", s.slot, s.round, subgen, r + 1, u8::from(got), decoded);
            }
        }
        out
    }
}

/// Completion slot and mean decoding delay of a finished log.
pub fn measure(log: &TransmissionLog) -> Result<(usize, f64), TransmitError> {
    let pending = log.pending();
    if pending > 0 {
        return Err(TransmitError::IncompleteLog { pending });
    }
    let pairs = log.total_targets();
    if pairs == 0 {
        return Ok((0, 0.0));
    }
    Ok((log.completion(), log.delay_sum() as f64 / pairs as f64))
}

/// Remaining demand after a round: what each receiver still needed minus
/// what it received, floored at zero.
pub fn round_update(remaining: &[usize], received: &[usize]) -> Vec<usize> {
    remaining.iter().zip(received).map(|(&r, &g)| r.saturating_sub(g)).collect()
}

/// Grouping of live sub-generations for the next round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergePlan {
    /// Input positions per merged group, members ascending, groups ordered by
    /// their first member.
    pub groups: Vec<Vec<usize>>,
    pub w_max_before: usize,
    pub w_max_after: usize,
}

/// Greedily merges sub-generations that no receiver still needs together.
/// `remaining[m][n]` is receiver `n`'s outstanding demand in group `m`.
/// Groups with no outstanding demand are dropped from the plan.
pub fn merge_subgenerations(remaining: &[Vec<usize>]) -> MergePlan {
    let w: Vec<usize> = remaining.iter().map(|r| r.iter().copied().max().unwrap_or(0)).collect();
    let mut live: Vec<usize> = (0..remaining.len()).filter(|&m| w[m] > 0).collect();
    live.sort_by_key(|&m| (std::cmp::Reverse(w[m]), m));
    let mut groups: Vec<(Vec<usize>, Vec<bool>)> = Vec::new();
    for m in live {
        let support: Vec<bool> = remaining[m].iter().map(|&x| x > 0).collect();
        let slot = groups
            .iter()
            .position(|(_, s)| !s.iter().zip(&support).any(|(&a, &b)| a && b));
        match slot {
            Some(i) => {
                groups[i].0.push(m);
                groups[i].1.iter_mut().zip(&support).for_each(|(a, &b)| *a |= b);
            }
            None => groups.push((vec![m], support)),
        }
    }
    let mut groups: Vec<Vec<usize>> = groups
        .into_iter()
        .map(|(mut g, _)| {
            g.sort_unstable();
            g
        })
        .collect();
    groups.sort_by_key(|g| g[0]);
    let w_max_after = groups
        .iter()
        .map(|g| {
            let n = remaining[g[0]].len();
            (0..n).map(|r| g.iter().map(|&m| remaining[m][r]).sum::<usize>()).max().unwrap_or(0)
        })
        .sum();
    MergePlan {
        groups,
        w_max_before: w.iter().sum(),
        w_max_after,
    }
}

/// A receiver's view of one group.
struct RxState<'a> {
    /// Wanted, not yet decoded packet columns of the group.
    unknowns: Vec<usize>,
    received: usize,
    decoder: Option<Decoder>,
    erasures: ErasureStream<'a>,
}

impl RxState<'_> {
    fn remaining(&self) -> usize {
        match &self.decoder {
            Some(d) => d.n_unknowns() - d.rank(),
            None => self.unknowns.len().saturating_sub(self.received),
        }
    }
}

struct Group<'a> {
    members: Vec<usize>,
    packets: Vec<usize>,
    rx: Vec<Option<RxState<'a>>>,
    coefficients: ChaCha8Rng,
}

impl Group<'_> {
    fn w_max(&self) -> usize {
        self.rx.iter().flatten().map(RxState::remaining).max().unwrap_or(0)
    }

    fn is_live(&self) -> bool {
        self.rx.iter().any(Option::is_some)
    }

    /// Every receiver misses at most one packet, so a plain sum serves all.
    fn is_xor(&self) -> bool {
        self.rx.iter().flatten().all(|s| s.unknowns.len() <= 1)
    }
}

struct Sim<'a> {
    sfm: &'a StateFeedbackMatrix,
    channel: &'a ErasureChannel,
    config: &'a StrategyConfig,
    field: Option<Field>,
    originals: Vec<Vec<u8>>,
    decoded: Vec<Vec<bool>>,
    groups: Vec<Group<'a>>,
    round: usize,
    log: TransmissionLog,
}

impl<'a> Sim<'a> {
    fn new(
        sfm: &'a StateFeedbackMatrix,
        channel: &'a ErasureChannel,
        config: &'a StrategyConfig,
    ) -> Result<Self, TransmitError> {
        config.validate()?;
        if channel.is_blocking() {
            return Err(TransmitError::BlockingChannel);
        }
        let (field, originals) = match config.decode_mode {
            DecodeMode::Idealized => (None, Vec::new()),
            DecodeMode::Concrete => {
                let mut rng = channel.rng(PAYLOAD_TAG);
                let originals = (0..sfm.n_packets())
                    .map(|_| (0..config.payload_len).map(|_| rng.random()).collect())
                    .collect();
                (Some(Field::new(config.field_bits)?), originals)
            }
        };
        Ok(Self {
            sfm,
            channel,
            config,
            field,
            originals,
            decoded: vec![vec![false; sfm.n_packets()]; sfm.n_receivers()],
            groups: Vec::new(),
            round: 0,
            log: TransmissionLog::new(sfm),
        })
    }

    fn make_group(&self, members: Vec<usize>, mut packets: Vec<usize>, key: u64) -> Group<'a> {
        packets.sort_unstable();
        packets.dedup();
        let concrete = self.field.is_some();
        let rx = (0..self.sfm.n_receivers())
            .map(|n| {
                let unknowns: Vec<usize> = packets
                    .iter()
                    .copied()
                    .filter(|&p| self.sfm.wants_packet(n, p) && !self.decoded[n][p])
                    .collect();
                (!unknowns.is_empty()).then(|| RxState {
                    decoder: concrete.then(|| Decoder::new(unknowns.len(), self.config.payload_len)),
                    unknowns,
                    received: 0,
                    erasures: self.channel.stream(mix(key, n as u64)),
                })
            })
            .collect();
        Group {
            members,
            packets,
            rx,
            coefficients: self.channel.rng(mix(key, COEFFICIENT_TAG)),
        }
    }

    /// Broadcasts one coded packet of group `gi`.
    fn send(&mut self, gi: usize) -> Result<(), TransmitError> {
        let slot = self.log.slots.len() + 1;
        let xor = self.groups[gi].is_xor();
        let bits = if xor { 1 } else { self.config.field_bits };
        let group = &mut self.groups[gi];
        let coded = match &self.field {
            None => None,
            Some(field) => {
                let coeffs = if xor {
                    vec![1u8; group.packets.len()]
                } else {
                    field.random_vector(&mut group.coefficients, group.packets.len())
                };
                let mut payload = vec![0u8; self.config.payload_len];
                for (&p, &c) in group.packets.iter().zip(&coeffs) {
                    field.axpy(&mut payload, c, &self.originals[p]);
                }
                Some((coeffs, payload))
            }
        };
        let mut record = SlotRecord {
            slot,
            round: self.round,
            members: group.members.clone(),
            field_bits: bits,
            receivers: Vec::new(),
            received: Vec::new(),
            decoded: Vec::new(),
        };
        for n in 0..group.rx.len() {
            let Some(state) = group.rx[n].as_mut() else {
                continue;
            };
            let got = state.erasures.received(n);
            record.receivers.push(n);
            record.received.push(got);
            if !got {
                continue;
            }
            state.received += 1;
            if let (Some(field), Some((coeffs, payload)), Some(decoder)) =
                (&self.field, &coded, state.decoder.as_mut())
            {
                // Strip what the receiver already holds, keep its unknowns.
                let mut data = payload.clone();
                let mut row = Vec::with_capacity(state.unknowns.len());
                for (&p, &c) in group.packets.iter().zip(coeffs) {
                    if state.unknowns.binary_search(&p).is_ok() {
                        row.push(c);
                    } else {
                        field.axpy(&mut data, c, &self.originals[p]);
                    }
                }
                decoder.push(field, &row, &data)?;
            }
            if state.remaining() == 0 {
                let state = group.rx[n].take().expect("state present");
                if let Some(decoder) = &state.decoder {
                    let solved = decoder.solve().expect("complete decoder solves");
                    for (&p, payload) in state.unknowns.iter().zip(solved) {
                        if payload != self.originals[p] {
                            return Err(TransmitError::DecodeMismatch { receiver: n, packet: p });
                        }
                    }
                }
                record.decoded.push((n, state.unknowns));
            }
        }
        for (n, packets) in &record.decoded {
            for &p in packets {
                self.decoded[*n][p] = true;
                self.log.decode_slot[*n][p] = Some(slot);
            }
        }
        self.log.slots.push(record);
        self.release_duplicates(gi);
        Ok(())
    }

    /// Drops freshly decoded packets from every other group. Only groups of
    /// single unknowns can share packets, so nothing partial is lost.
    fn release_duplicates(&mut self, gi: usize) {
        let Some(last) = self.log.slots.last() else {
            return;
        };
        if last.decoded.is_empty() {
            return;
        }
        for (j, group) in self.groups.iter_mut().enumerate() {
            if j == gi {
                continue;
            }
            for (n, packets) in &last.decoded {
                let Some(state) = group.rx[*n].as_mut() else {
                    continue;
                };
                let before = state.unknowns.len();
                state.unknowns.retain(|p| !packets.contains(p));
                if state.unknowns.len() == before {
                    continue;
                }
                if state.unknowns.is_empty() {
                    group.rx[*n] = None;
                } else if let Some(d) = state.decoder.as_mut() {
                    *d = Decoder::new(state.unknowns.len(), self.config.payload_len);
                    state.received = 0;
                }
            }
        }
    }

    fn close_round(&mut self) {
        self.log.round_ends.push(self.log.slots.len());
    }

    fn finish(self) -> TransmissionLog {
        self.log
    }
}

fn check_partition(partition: &Partition, sfm: &StateFeedbackMatrix) -> Result<(), TransmitError> {
    if partition.g >= 2 || partition.mode == PartitionMode::Classic {
        for packet in 0..sfm.n_packets() {
            let diversity = partition.diversity(packet);
            if diversity > 1 {
                return Err(TransmitError::NonReducedDiversity {
                    packet: partition.packet_ids()[packet],
                    diversity,
                });
            }
        }
    }
    Ok(())
}

/// Sends each sub-generation, in broadcast order, until all its targeted
/// receivers have decoded it. With a `g_schedule`, the remaining coding sets
/// are regrouped at every round into a group of the scheduled size.
pub fn run_sequential(
    partition: &Partition,
    sfm: &StateFeedbackMatrix,
    channel: &ErasureChannel,
    config: &StrategyConfig,
) -> Result<TransmissionLog, TransmitError> {
    check_partition(partition, sfm)?;
    let mut sim = Sim::new(sfm, channel, config)?;
    let order = partition.broadcast_order();
    let units: Vec<(Vec<usize>, Vec<usize>, u64)> = match &config.g_schedule {
        None => order
            .iter()
            .map(|&m| {
                let s = &partition.subgens[m];
                (vec![s.index], s.packets.clone(), s.index as u64)
            })
            .collect(),
        Some(schedule) => {
            if partition.mode != PartitionMode::Framework {
                return Err(TransmitError::Config("g_schedule needs a coding-set partition".into()));
            }
            let pool: Vec<&[usize]> = order
                .iter()
                .flat_map(|&m| partition.subgens[m].sets.iter().map(|s| s.packets.as_slice()))
                .collect();
            let mut units = Vec::new();
            let mut next = 0;
            while next < pool.len() {
                let g = schedule[units.len().min(schedule.len() - 1)].min(pool.len() - next);
                let packets = pool[next..next + g].concat();
                units.push((vec![units.len() + 1], packets, mix(SCHEDULE_TAG, units.len() as u64)));
                next += g;
            }
            units
        }
    };
    for (members, packets, key) in units {
        let group = sim.make_group(members, packets, key);
        if !group.is_live() {
            continue;
        }
        sim.round += 1;
        sim.log.round_w_max.push(group.w_max());
        sim.groups = vec![group];
        while sim.groups[0].is_live() {
            sim.send(0)?;
        }
        sim.close_round();
    }
    Ok(sim.finish())
}

/// Each round sends, for every live group in broadcast order, as many coded
/// packets as its currently most demanding receiver still needs; demands are
/// refreshed from feedback at the end of the round.
pub fn run_semi_online(
    partition: &Partition,
    sfm: &StateFeedbackMatrix,
    channel: &ErasureChannel,
    config: &StrategyConfig,
) -> Result<TransmissionLog, TransmitError> {
    check_partition(partition, sfm)?;
    let mut sim = Sim::new(sfm, channel, config)?;
    for m in partition.broadcast_order() {
        let s = &partition.subgens[m];
        let group = sim.make_group(vec![s.index], s.packets.clone(), s.index as u64);
        sim.groups.push(group);
    }
    sim.groups.retain(Group::is_live);
    while !sim.groups.is_empty() {
        sim.round += 1;
        let demands: Vec<usize> = sim.groups.iter().map(Group::w_max).collect();
        sim.log.round_w_max.push(demands.iter().sum());
        for (gi, &w) in demands.iter().enumerate() {
            for _ in 0..w {
                if !sim.groups[gi].is_live() {
                    break;
                }
                sim.send(gi)?;
            }
        }
        sim.close_round();
        sim.groups.retain(Group::is_live);
        if config.merging && sim.groups.len() > 1 {
            merge_groups(&mut sim);
        }
    }
    Ok(sim.finish())
}

fn merge_groups(sim: &mut Sim<'_>) {
    let remaining: Vec<Vec<usize>> = sim
        .groups
        .iter()
        .map(|g| g.rx.iter().map(|s| s.as_ref().map_or(0, RxState::remaining)).collect())
        .collect();
    let plan = merge_subgenerations(&remaining);
    sim.log.merges.push((plan.w_max_before, plan.w_max_after));
    if plan.groups.iter().all(|g| g.len() == 1) {
        return;
    }
    let mut old: Vec<Option<Group<'_>>> = std::mem::take(&mut sim.groups).into_iter().map(Some).collect();
    for positions in plan.groups {
        if positions.len() == 1 {
            sim.groups.push(old[positions[0]].take().expect("each group used once"));
            continue;
        }
        let parts: Vec<Group<'_>> = positions
            .iter()
            .map(|&i| old[i].take().expect("each group used once"))
            .collect();
        let mut members: Vec<usize> = parts.iter().flat_map(|g| g.members.iter().copied()).collect();
        members.sort_unstable();
        let mut packets: Vec<usize> = parts.iter().flat_map(|g| g.packets.iter().copied()).collect();
        packets.sort_unstable();
        packets.dedup();
        let n = parts[0].rx.len();
        let mut rx: Vec<Option<RxState<'_>>> = (0..n).map(|_| None).collect();
        for part in parts {
            for (slot, state) in rx.iter_mut().zip(part.rx) {
                if state.is_some() {
                    *slot = state;
                }
            }
        }
        let key = mix(MERGE_TAG, mix(sim.round as u64, members[0] as u64));
        sim.groups.push(Group {
            members,
            packets,
            rx,
            coefficients: sim.channel.rng(mix(key, COEFFICIENT_TAG)),
        });
    }
}

/// Runs the configured strategy.
pub fn run(
    partition: &Partition,
    sfm: &StateFeedbackMatrix,
    channel: &ErasureChannel,
    config: &StrategyConfig,
) -> Result<TransmissionLog, TransmitError> {
    match config.strategy {
        Strategy::Sequential => run_sequential(partition, sfm, channel, config),
        Strategy::SemiOnline => run_semi_online(partition, sfm, channel, config),
    }
}
