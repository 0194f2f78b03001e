//! Grouping coding sets (or raw packets) into sub-generations, and the
//! analytic completion time and decoding delay of a partition.

use std::cmp::Reverse;
use std::fmt;

use thiserror::Error;

use crate::idnc::{CodingSet, IdncSolution};
use crate::model::StateFeedbackMatrix;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PartitionError {
    #[error("sub-generation size {g} is outside [1, {max}]")]
    InvalidG { g: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    /// Groups of coding sets from an IDNC solution.
    Framework,
    /// Consecutive packets by column order.
    Classic,
}

/// One group of packets encoded together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubGeneration {
    /// 1-based position in construction order.
    pub index: usize,
    /// Positions (0-based) of the member sets in the sorted solution. Empty
    /// in classic mode.
    pub member_sets: Vec<usize>,
    pub sets: Vec<CodingSet>,
    /// Union of member packets, ascending columns.
    pub packets: Vec<usize>,
    /// Wanted packets of this group, per receiver.
    pub per_receiver_wants: Vec<usize>,
    pub w_max: usize,
    /// Sum of target sizes over `packets`.
    pub total_targets: usize,
}

impl SubGeneration {
    pub fn contains(&self, packet: usize) -> bool {
        self.packets.binary_search(&packet).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub subgens: Vec<SubGeneration>,
    pub g: usize,
    pub mode: PartitionMode,
    packet_ids: Vec<usize>,
}

impl Partition {
    pub fn n_subgens(&self) -> usize {
        self.subgens.len()
    }

    /// Sub-generation positions in transmission order: most targeted
    /// receivers first, ties kept in construction order.
    pub fn broadcast_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.subgens.len()).collect();
        order.sort_by_key(|&m| Reverse(self.subgens[m].total_targets));
        order
    }

    /// Number of sub-generations containing packet column `packet`.
    pub fn diversity(&self, packet: usize) -> usize {
        self.subgens.iter().filter(|s| s.contains(packet)).count()
    }

    pub fn max_diversity(&self) -> usize {
        (0..self.packet_ids.len()).map(|k| self.diversity(k)).max().unwrap_or(0)
    }

    pub fn w_max_sum(&self) -> usize {
        self.subgens.iter().map(|s| s.w_max).sum()
    }

    pub fn packet_ids(&self) -> &[usize] {
        &self.packet_ids
    }
}

impl fmt::Display for Partition {
    /// `m: [set indices] packets=[...] wmax=w`, one line per sub-generation,
    /// with 1-based set indices and original packet ids.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &mut dyn Iterator<Item = usize>| v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        for s in &self.subgens {
            writeln!(
                f,
                "{}: [{}] packets=[{}] wmax={}",
                s.index,
                join(&mut s.member_sets.iter().map(|i| i + 1)),
                join(&mut s.packets.iter().map(|&p| self.packet_ids[p])),
                s.w_max
            )?;
        }
        Ok(())
    }
}

fn make_subgen(
    sfm: &StateFeedbackMatrix,
    index: usize,
    member_sets: Vec<usize>,
    sets: Vec<CodingSet>,
    mut packets: Vec<usize>,
) -> SubGeneration {
    packets.sort_unstable();
    packets.dedup();
    let per_receiver_wants: Vec<usize> = (0..sfm.n_receivers())
        .map(|r| packets.iter().filter(|&&p| sfm.wants_packet(r, p)).count())
        .collect();
    SubGeneration {
        index,
        member_sets,
        sets,
        w_max: per_receiver_wants.iter().copied().max().unwrap_or(0),
        total_targets: packets.iter().map(|&p| sfm.targets(p).len()).sum(),
        per_receiver_wants,
        packets,
    }
}

fn framework_subgen(
    sfm: &StateFeedbackMatrix,
    sorted: &[CodingSet],
    index: usize,
    members: Vec<usize>,
) -> SubGeneration {
    let sets: Vec<CodingSet> = members.iter().map(|&i| sorted[i].clone()).collect();
    let packets = sets.iter().flat_map(|s| s.packets.iter().copied()).collect();
    make_subgen(sfm, index, members, sets, packets)
}

/// Coding sets in descending target order, stable.
fn sorted_sets(solution: &IdncSolution) -> Vec<CodingSet> {
    let mut sets = solution.sets().to_vec();
    sets.sort_by_key(|s| Reverse(s.target_count));
    sets
}

fn check_g(g: usize, max: usize) -> Result<(), PartitionError> {
    if g == 0 || g > max {
        Err(PartitionError::InvalidG { g, max })
    } else {
        Ok(())
    }
}

/// Consecutive chunks of `g` coding sets; the last chunk may be short.
pub fn partition_direct(
    solution: &IdncSolution,
    g: usize,
    sfm: &StateFeedbackMatrix,
) -> Result<Partition, PartitionError> {
    check_g(g, solution.cardinality())?;
    let sorted = sorted_sets(solution);
    let subgens = (0..sorted.len())
        .collect::<Vec<_>>()
        .chunks(g)
        .enumerate()
        .map(|(m, chunk)| framework_subgen(sfm, &sorted, m + 1, chunk.to_vec()))
        .collect();
    Ok(Partition {
        subgens,
        g,
        mode: PartitionMode::Framework,
        packet_ids: sfm.packet_ids().to_vec(),
    })
}

/// Fills sub-generations one at a time, preferring the most targeted
/// remaining set that does not raise the current group's largest demand.
pub fn partition_smart(
    solution: &IdncSolution,
    g: usize,
    sfm: &StateFeedbackMatrix,
) -> Result<Partition, PartitionError> {
    check_g(g, solution.cardinality())?;
    let sorted = sorted_sets(solution);
    let n = sfm.n_receivers();
    let mut remaining: Vec<usize> = (0..sorted.len()).collect();
    let mut subgens = Vec::new();
    while !remaining.is_empty() {
        let mut members = Vec::with_capacity(g);
        let mut in_group = vec![false; sfm.n_packets()];
        let mut counts = vec![0usize; n];
        let mut w_max = 0;
        for _ in 0..g {
            if remaining.is_empty() {
                break;
            }
            let demand_with = |set: &CodingSet| -> usize {
                let mut c = counts.clone();
                for &p in set.packets.iter().filter(|&&p| !in_group[p]) {
                    sfm.targets(p).iter().for_each(|&r| c[r] += 1);
                }
                c.into_iter().max().unwrap_or(0)
            };
            let pick = remaining
                .iter()
                .position(|&i| demand_with(&sorted[i]) <= w_max)
                .unwrap_or(0);
            let chosen = remaining.remove(pick);
            for &p in &sorted[chosen].packets {
                if !in_group[p] {
                    in_group[p] = true;
                    sfm.targets(p).iter().for_each(|&r| counts[r] += 1);
                }
            }
            w_max = counts.iter().copied().max().unwrap_or(0);
            members.push(chosen);
        }
        subgens.push(framework_subgen(sfm, &sorted, subgens.len() + 1, members));
    }
    Ok(Partition {
        subgens,
        g,
        mode: PartitionMode::Framework,
        packet_ids: sfm.packet_ids().to_vec(),
    })
}

/// Consecutive runs of `g` packets by column, ignoring coding structure.
pub fn partition_classic(sfm: &StateFeedbackMatrix, g: usize) -> Result<Partition, PartitionError> {
    check_g(g, sfm.n_packets())?;
    let subgens = (0..sfm.n_packets())
        .collect::<Vec<_>>()
        .chunks(g)
        .enumerate()
        .map(|(m, chunk)| make_subgen(sfm, m + 1, Vec::new(), Vec::new(), chunk.to_vec()))
        .collect();
    Ok(Partition {
        subgens,
        g,
        mode: PartitionMode::Classic,
        packet_ids: sfm.packet_ids().to_vec(),
    })
}

/// Minimum completion time and average decoding delay of a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticMetrics {
    pub u_g: usize,
    pub d_g: f64,
    /// Sum of decode slots over wanted pairs; `d_g = delay_sum / total_targets`.
    pub delay_sum: usize,
    pub total_targets: usize,
    /// Largest demand per sub-generation, construction order.
    pub per_subgen_wmax: Vec<usize>,
}

/// Each sub-generation, taken in broadcast order, costs its largest demand
/// in slots. A receiver decodes its packets of a group once it has as many
/// combinations as it wants from that group; a packet carried by several
/// groups counts at its first decode.
pub fn analytic_metrics(partition: &Partition, sfm: &StateFeedbackMatrix) -> AnalyticMetrics {
    let mut decoded = vec![vec![false; sfm.n_packets()]; sfm.n_receivers()];
    let mut offset = 0;
    let mut delay_sum = 0;
    for m in partition.broadcast_order() {
        let s = &partition.subgens[m];
        for (r, row) in decoded.iter_mut().enumerate() {
            let u = offset + s.per_receiver_wants[r];
            for &p in &s.packets {
                if sfm.wants_packet(r, p) && !row[p] {
                    row[p] = true;
                    delay_sum += u;
                }
            }
        }
        offset += s.w_max;
    }
    let total_targets: usize = (0..sfm.n_packets()).map(|k| sfm.targets(k).len()).sum();
    AnalyticMetrics {
        u_g: offset,
        d_g: delay_sum as f64 / total_targets as f64,
        delay_sum,
        total_targets,
        per_subgen_wmax: partition.subgens.iter().map(|s| s.w_max).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idnc::{build_graph, solve_exact};
    use crate::model::{demand_profile, fixture_f1, fixture_f2};

    fn ids(p: &Partition, m: usize) -> Vec<usize> {
        p.subgens[m].packets.iter().map(|&c| p.packet_ids()[c]).collect()
    }

    fn f1_solution() -> (StateFeedbackMatrix, IdncSolution) {
        let f1 = fixture_f1();
        let sol = solve_exact(&build_graph(&f1), &f1).unwrap();
        (f1, sol)
    }

    #[test]
    fn direct_g2_on_f1_is_the_good_partition() {
        let (f1, sol) = f1_solution();
        let p = partition_direct(&sol, 2, &f1).unwrap();
        assert_eq!(ids(&p, 0), vec![2, 3, 4, 7, 8]);
        assert_eq!(ids(&p, 1), vec![1, 5, 6]);
        assert_eq!(p.subgens[0].w_max, 2);
        assert_eq!(p.subgens[1].w_max, 2);
        let m = analytic_metrics(&p, &f1);
        assert_eq!((m.u_g, m.delay_sum, m.total_targets), (4, 38, 14));
        assert_eq!(p.to_string(), "1: [1 2] packets=[2 3 4 7 8] wmax=2\n2: [3 4] packets=[1 5 6] wmax=2\n");
    }

    #[test]
    fn extremes_are_idnc_and_rlnc() {
        let (f1, sol) = f1_solution();
        let idnc = partition_direct(&sol, 1, &f1).unwrap();
        assert_eq!(idnc.n_subgens(), 4);
        let m = analytic_metrics(&idnc, &f1);
        assert_eq!((m.u_g, m.delay_sum), (4, 32));

        let rlnc = partition_direct(&sol, 4, &f1).unwrap();
        assert_eq!(rlnc.n_subgens(), 1);
        assert_eq!(rlnc.subgens[0].packets.len(), 8);
        let m = analytic_metrics(&rlnc, &f1);
        let w = demand_profile(&f1).wants_sizes;
        assert_eq!(m.u_g, 4);
        assert_eq!(m.delay_sum, w.iter().map(|x| x * x).sum::<usize>());
        assert_eq!(m.delay_sum, 50);

        assert_eq!(partition_direct(&sol, 0, &f1), Err(PartitionError::InvalidG { g: 0, max: 4 }));
        assert!(partition_direct(&sol, 5, &f1).is_err());
        assert!(partition_smart(&sol, 5, &f1).is_err());
    }

    #[test]
    fn f2_rlnc_and_idnc() {
        let f2 = fixture_f2();
        let sol = solve_exact(&build_graph(&f2), &f2).unwrap();
        let rlnc = analytic_metrics(&partition_direct(&sol, 4, &f2).unwrap(), &f2);
        assert_eq!((rlnc.u_g, rlnc.delay_sum, rlnc.total_targets), (2, 24, 12));
        assert_eq!(rlnc.d_g, 2.0);
        let idnc = analytic_metrics(&partition_direct(&sol, 1, &f2).unwrap(), &f2);
        assert_eq!((idnc.u_g, idnc.delay_sum), (4, 30));
        assert_eq!(idnc.d_g, 2.5);
    }

    #[test]
    fn classic_on_f1() {
        let f1 = fixture_f1();
        let p = partition_classic(&f1, 4).unwrap();
        assert_eq!(p.mode, PartitionMode::Classic);
        assert_eq!(ids(&p, 0), vec![1, 2, 3, 4]);
        assert_eq!(p.subgens[0].w_max, 3);
        assert_eq!(p.subgens[1].w_max, 4);
        let m = analytic_metrics(&p, &f1);
        assert_eq!(m.u_g, 7);
        assert_eq!(m.delay_sum, 62);

        let whole = analytic_metrics(&partition_classic(&f1, 8).unwrap(), &f1);
        assert_eq!(whole.u_g, 4);
        assert!(partition_classic(&f1, 9).is_err());
    }

    /// Four singleton sets where one receiver wants a packet of each of the
    /// first three, but nobody wants three of sets 1, 2 and 4.
    fn smart_example() -> (StateFeedbackMatrix, IdncSolution) {
        let rows = vec![
            vec![1, 1, 1, 0],
            vec![1, 0, 0, 1],
            vec![0, 1, 0, 1],
            vec![0, 0, 1, 1],
            vec![1, 1, 0, 0],
            vec![1, 0, 1, 0],
        ];
        let sfm = StateFeedbackMatrix::from_rows(&rows, None).unwrap();
        let sol = IdncSolution::from_sets(&sfm, vec![vec![0], vec![1], vec![2], vec![3]]).unwrap();
        (sfm, sol)
    }

    #[test]
    fn smart_beats_direct_on_constructed_example() {
        let (sfm, sol) = smart_example();
        assert!(sol.is_non_mergeable(&sfm));
        let targets: Vec<usize> = sol.sets().iter().map(|s| s.target_count).collect();
        assert_eq!(targets, vec![4, 3, 3, 3]);

        let dp = partition_direct(&sol, 3, &sfm).unwrap();
        assert_eq!(dp.subgens[0].member_sets, vec![0, 1, 2]);
        assert_eq!(dp.subgens[0].w_max, 3);
        let sp = partition_smart(&sol, 3, &sfm).unwrap();
        assert_eq!(sp.subgens[0].member_sets, vec![0, 1, 3]);
        assert_eq!(sp.subgens[0].w_max, 2);
        assert!(sp.w_max_sum() < dp.w_max_sum());
    }

    #[test]
    fn g1_smart_equals_direct() {
        let (f1, sol) = f1_solution();
        assert_eq!(partition_smart(&sol, 1, &f1).unwrap(), partition_direct(&sol, 1, &f1).unwrap());
    }

    #[test]
    fn diversity_of_partition() {
        let (f1, sol) = f1_solution();
        let idnc = partition_direct(&sol, 1, &f1).unwrap();
        assert_eq!(idnc.diversity(0), 2);
        let g2 = partition_direct(&sol, 2, &f1).unwrap();
        assert_eq!(g2.max_diversity(), 1);
    }
}
