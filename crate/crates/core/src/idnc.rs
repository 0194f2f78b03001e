//! IDNC graph construction and clique-cover solvers.
//!
//! Two packets are adjacent in the IDNC graph when no receiver wants both;
//! a coding set is a clique of that graph. A minimum clique cover is a
//! minimum coloring of the complement (the conflict graph), which
//! [`solve_exact`] finds by DSATUR branch and bound.

use std::cmp::Reverse;
use std::fmt;

use thiserror::Error;

use crate::model::StateFeedbackMatrix;

/// Default vertex limit for [`solve_exact`].
pub const EXACT_VERTEX_LIMIT: usize = 25;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdncError {
    #[error("{vertices} packets exceed the exact solver limit of {limit}")]
    SizeLimitExceeded { vertices: usize, limit: usize },
    #[error("coding set {0} became empty; the solution had a redundant set")]
    EmptySetProduced(usize),
    #[error("packet column {0} is not part of this solution")]
    UnknownPacket(usize),
    #[error("set {0} is not an IDNC coding set")]
    NotACodingSet(usize),
    #[error("packet column {0} is not covered")]
    Uncovered(usize),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Undirected graph on packet columns; an edge joins two packets that no
/// receiver wants together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdncGraph {
    adjacency: Vec<Vec<bool>>,
}

impl IdncGraph {
    pub fn n_vertices(&self) -> usize {
        self.adjacency.len()
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i][j]
    }

    pub fn n_edges(&self) -> usize {
        let n = self.n_vertices();
        (0..n).map(|i| (i + 1..n).filter(|&j| self.adjacency[i][j]).count()).sum()
    }

    fn is_clique(&self, packets: &[usize]) -> bool {
        packets
            .iter()
            .enumerate()
            .all(|(a, &i)| packets[a + 1..].iter().all(|&j| self.adjacency[i][j]))
    }
}

pub fn build_graph(sfm: &StateFeedbackMatrix) -> IdncGraph {
    let k = sfm.n_packets();
    let mut adjacency = vec![vec![true; k]; k];
    for (i, row) in adjacency.iter_mut().enumerate() {
        row[i] = false;
    }
    for r in 0..sfm.n_receivers() {
        let w = sfm.wants(r);
        for (a, &i) in w.iter().enumerate() {
            for &j in &w[a + 1..] {
                adjacency[i][j] = false;
                adjacency[j][i] = false;
            }
        }
    }
    IdncGraph { adjacency }
}

/// True when no receiver wants two packets of `packets`.
pub fn is_coding_set(sfm: &StateFeedbackMatrix, packets: &[usize]) -> bool {
    (0..sfm.n_receivers()).all(|r| packets.iter().filter(|&&p| sfm.wants_packet(r, p)).count() <= 1)
}

/// Packets XORed into one IDNC transmission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodingSet {
    /// Packet columns, ascending.
    pub packets: Vec<usize>,
    /// Total number of targeted receivers, summed over packets.
    pub target_count: usize,
}

impl CodingSet {
    fn new(mut packets: Vec<usize>, targets: &[usize]) -> Self {
        packets.sort_unstable();
        packets.dedup();
        let target_count = packets.iter().map(|&p| targets[p]).sum();
        Self { packets, target_count }
    }

    pub fn contains(&self, packet: usize) -> bool {
        self.packets.binary_search(&packet).is_ok()
    }
}

/// Ordered collection of coding sets covering every packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdncSolution {
    sets: Vec<CodingSet>,
    packet_targets: Vec<usize>,
    packet_ids: Vec<usize>,
}

impl IdncSolution {
    /// Validates `sets` (packet columns) against `sfm` and keeps their order.
    pub fn from_sets(sfm: &StateFeedbackMatrix, sets: Vec<Vec<usize>>) -> Result<Self, IdncError> {
        let targets = target_sizes(sfm);
        let mut covered = vec![false; sfm.n_packets()];
        let mut out = Vec::with_capacity(sets.len());
        for (i, s) in sets.into_iter().enumerate() {
            if s.is_empty() || s.iter().any(|&p| p >= targets.len()) || !is_coding_set(sfm, &s) {
                return Err(IdncError::NotACodingSet(i));
            }
            s.iter().for_each(|&p| covered[p] = true);
            out.push(CodingSet::new(s, &targets));
        }
        if let Some(p) = covered.iter().position(|&c| !c) {
            return Err(IdncError::Uncovered(p));
        }
        Ok(Self {
            sets: out,
            packet_targets: targets,
            packet_ids: sfm.packet_ids().to_vec(),
        })
    }

    /// Reads the one-set-per-line dump format (original packet ids).
    pub fn parse(text: &str, sfm: &StateFeedbackMatrix) -> Result<Self, IdncError> {
        let mut sets = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let set = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>()
                        .ok()
                        .and_then(|id| sfm.column_of(id))
                        .ok_or_else(|| IdncError::Parse {
                            line: i + 1,
                            msg: format!("unknown packet `{t}`"),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            sets.push(set);
        }
        Self::from_sets(sfm, sets)
    }

    pub fn sets(&self) -> &[CodingSet] {
        &self.sets
    }

    pub fn cardinality(&self) -> usize {
        self.sets.len()
    }

    pub fn n_packets(&self) -> usize {
        self.packet_targets.len()
    }

    pub fn packet_targets(&self) -> &[usize] {
        &self.packet_targets
    }

    pub fn packet_ids(&self) -> &[usize] {
        &self.packet_ids
    }

    /// Set contents as original packet ids.
    pub fn packet_id_sets(&self) -> Vec<Vec<usize>> {
        self.sets
            .iter()
            .map(|s| s.packets.iter().map(|&p| self.packet_ids[p]).collect())
            .collect()
    }

    /// Whether every pair of sets has a union some receiver wants twice from.
    pub fn is_non_mergeable(&self, sfm: &StateFeedbackMatrix) -> bool {
        let n = self.sets.len();
        (0..n).all(|a| {
            (a + 1..n).all(|b| {
                let mut u = self.sets[a].packets.clone();
                u.extend(&self.sets[b].packets);
                u.sort_unstable();
                u.dedup();
                !is_coding_set(sfm, &u)
            })
        })
    }

    pub fn max_diversity(&self) -> usize {
        (0..self.n_packets())
            .map(|k| self.sets.iter().filter(|s| s.contains(k)).count())
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for IdncSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for set in self.packet_id_sets() {
            let ids: Vec<String> = set.iter().map(ToString::to_string).collect();
            writeln!(f, "{}", ids.join(" "))?;
        }
        Ok(())
    }
}

fn target_sizes(sfm: &StateFeedbackMatrix) -> Vec<usize> {
    (0..sfm.n_packets()).map(|k| sfm.targets(k).len()).collect()
}

/// Broadcast order for coding sets: most targeted receivers first, then
/// most receivers targeted through packets no other set carries, then the
/// lowest packet index, then lexicographic contents.
pub fn order_sets(sets: &mut [CodingSet], targets: &[usize]) {
    let mut diversity = vec![0usize; targets.len()];
    for s in sets.iter() {
        s.packets.iter().for_each(|&p| diversity[p] += 1);
    }
    let exclusive = |s: &CodingSet| -> usize {
        s.packets.iter().filter(|&&p| diversity[p] == 1).map(|&p| targets[p]).sum()
    };
    sets.sort_by(|a, b| {
        (Reverse(a.target_count), Reverse(exclusive(a)), &a.packets)
            .cmp(&(Reverse(b.target_count), Reverse(exclusive(b)), &b.packets))
    });
}

/// Sum of decode slots over every wanted (receiver, packet) pair when the
/// sets are sent once each in the given order.
pub fn idnc_delay_numerator(sets: &[CodingSet], targets: &[usize]) -> usize {
    (0..targets.len())
        .map(|k| {
            let slot = sets.iter().position(|s| s.contains(k)).map_or(0, |i| i + 1);
            slot * targets[k]
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactOptions {
    pub max_vertices: usize,
    /// Node budget for choosing among optimal covers. The chromatic number is
    /// always exact; only the choice between equal-size covers is bounded.
    pub selection_node_limit: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            max_vertices: EXACT_VERTEX_LIMIT,
            selection_node_limit: 20_000,
        }
    }
}

pub fn solve_exact(graph: &IdncGraph, sfm: &StateFeedbackMatrix) -> Result<IdncSolution, IdncError> {
    solve_exact_with(graph, sfm, ExactOptions::default())
}

/// Minimum clique cover with maximal sets.
///
/// The size comes from an exact coloring of the conflict graph. Among covers
/// of that size built from maximal cliques, the one with the smallest IDNC
/// decoding delay is returned. Ties go to the cover whose shared packets carry
/// the fewest targets, then to the lexicographically smallest set sequence.
pub fn solve_exact_with(
    graph: &IdncGraph,
    sfm: &StateFeedbackMatrix,
    opts: ExactOptions,
) -> Result<IdncSolution, IdncError> {
    let k = graph.n_vertices();
    let limit = opts.max_vertices.min(64);
    if k > limit {
        return Err(IdncError::SizeLimitExceeded { vertices: k, limit });
    }
    let targets = target_sizes(sfm);
    let compat: Vec<u64> = (0..k)
        .map(|i| (0..k).filter(|&j| graph.adjacent(i, j)).fold(0u64, |m, j| m | 1 << j))
        .collect();
    let full = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    let conflict: Vec<u64> = (0..k).map(|i| full & !compat[i] & !(1u64 << i)).collect();

    let colors = min_coloring(&conflict);
    let chi = colors.iter().copied().max().map_or(0, |c| c + 1);

    // Incumbent: expanded color classes.
    let by_desc_target = packets_by_desc_target(&targets);
    let mut incumbent: Vec<u64> = (0..chi)
        .map(|c| (0..k).filter(|&v| colors[v] == c).fold(0u64, |m, v| m | 1 << v))
        .map(|class| maximalize(class, &compat, &by_desc_target))
        .collect();
    incumbent.sort_unstable();

    let cliques = maximal_cliques(&compat);
    let mut search = CoverSearch {
        cliques: &cliques,
        containing: (0..k)
            .map(|p| (0..cliques.len()).filter(|&c| cliques[c] >> p & 1 == 1).collect())
            .collect(),
        conflict: &conflict,
        targets: &targets,
        full,
        budget: chi,
        nodes: 0,
        node_limit: opts.selection_node_limit,
        best: None,
    };
    search.consider(&incumbent);
    search.run(&mut Vec::new(), 0);
    let (_, sets) = search.best.expect("incumbent always present");
    Ok(IdncSolution {
        sets,
        packet_targets: targets,
        packet_ids: sfm.packet_ids().to_vec(),
    })
}

fn packets_by_desc_target(targets: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by_key(|&p| (Reverse(targets[p]), p));
    order
}

fn maximalize(mut set: u64, compat: &[u64], order: &[usize]) -> u64 {
    for &p in order {
        if set >> p & 1 == 0 && set & !compat[p] == 0 {
            set |= 1 << p;
        }
    }
    set
}

fn mask_to_vec(mask: u64) -> Vec<usize> {
    (0..64).filter(|&i| mask >> i & 1 == 1).collect()
}

struct CoverSearch<'a> {
    cliques: &'a [u64],
    containing: Vec<Vec<usize>>,
    conflict: &'a [u64],
    targets: &'a [usize],
    full: u64,
    budget: usize,
    nodes: usize,
    node_limit: usize,
    best: Option<(usize, Vec<CodingSet>)>,
}

/// Targets summed over all sets; the excess over the block total is the
/// demand carried by packets that sit in several sets.
fn overlap(sets: &[CodingSet]) -> usize {
    sets.iter().map(|s| s.target_count).sum()
}

fn ordered(sets: &[CodingSet]) -> Vec<&[usize]> {
    sets.iter().map(|s| s.packets.as_slice()).collect()
}

impl CoverSearch<'_> {
    fn consider(&mut self, masks: &[u64]) {
        let mut sets: Vec<CodingSet> = masks
            .iter()
            .map(|&m| CodingSet::new(mask_to_vec(m), self.targets))
            .collect();
        order_sets(&mut sets, self.targets);
        let delay = idnc_delay_numerator(&sets, self.targets);
        let better = match &self.best {
            None => true,
            Some((d, b)) => (delay, overlap(&sets), ordered(&sets)) < (*d, overlap(b), ordered(b)),
        };
        if better {
            self.best = Some((delay, sets));
        }
    }

    fn run(&mut self, chosen: &mut Vec<u64>, covered: u64) {
        if self.nodes >= self.node_limit {
            return;
        }
        self.nodes += 1;
        if covered == self.full {
            self.consider(chosen);
            return;
        }
        let left = self.budget - chosen.len();
        if left == 0 || self.conflict_clique_bound(self.full & !covered) > left {
            return;
        }
        let pivot = mask_to_vec(self.full & !covered)
            .into_iter()
            .min_by_key(|&p| (self.containing[p].len(), p))
            .expect("uncovered packet exists");
        for ci in self.containing[pivot].clone() {
            let c = self.cliques[ci];
            chosen.push(c);
            self.run(chosen, covered | c);
            chosen.pop();
        }
    }

    /// Greedy clique of pairwise conflicting packets among `cand`; each needs
    /// its own set.
    fn conflict_clique_bound(&self, mut cand: u64) -> usize {
        let mut size = 0;
        while cand != 0 {
            let v = mask_to_vec(cand)
                .into_iter()
                .max_by_key(|&v| ((self.conflict[v] & cand).count_ones(), Reverse(v)))
                .expect("non-empty");
            size += 1;
            cand &= self.conflict[v];
        }
        size
    }
}

/// All maximal cliques (Bron-Kerbosch with pivoting), sorted by contents.
fn maximal_cliques(adj: &[u64]) -> Vec<u64> {
    fn bk(r: u64, mut p: u64, mut x: u64, adj: &[u64], out: &mut Vec<u64>) {
        if p == 0 {
            if x == 0 {
                out.push(r);
            }
            return;
        }
        let pivot = mask_to_vec(p | x)
            .into_iter()
            .max_by_key(|&u| (adj[u] & p).count_ones())
            .expect("p is non-empty");
        for v in mask_to_vec(p & !adj[pivot]) {
            bk(r | 1 << v, p & adj[v], x & adj[v], adj, out);
            p &= !(1u64 << v);
            x |= 1 << v;
        }
    }
    let n = adj.len();
    let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut out = Vec::new();
    if n > 0 {
        bk(0, all, 0, adj, &mut out);
    }
    out.sort_by_key(|&m| mask_to_vec(m));
    out
}

/// Exact minimum coloring of a graph given as neighbour masks, by DSATUR
/// branch and bound. Returns a color per vertex.
fn min_coloring(adj: &[u64]) -> Vec<usize> {
    let n = adj.len();
    if n == 0 {
        return Vec::new();
    }
    let mut best = dsatur_greedy(adj);
    let mut best_k = best.iter().max().map_or(0, |c| c + 1);
    let lower = greedy_clique(adj);
    if lower < best_k {
        let mut colors = vec![usize::MAX; n];
        let mut nbr_colors = vec![0u64; n];
        branch(adj, &mut colors, &mut nbr_colors, 0, lower, &mut best_k, &mut best);
    }
    best
}

fn dsatur_pick(adj: &[u64], colors: &[usize], nbr_colors: &[u64]) -> Option<usize> {
    let uncolored: u64 = colors
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == usize::MAX)
        .fold(0, |m, (v, _)| m | 1 << v);
    mask_to_vec(uncolored).into_iter().max_by_key(|&v| {
        (
            nbr_colors[v].count_ones(),
            (adj[v] & uncolored).count_ones(),
            Reverse(v),
        )
    })
}

fn dsatur_greedy(adj: &[u64]) -> Vec<usize> {
    let n = adj.len();
    let mut colors = vec![usize::MAX; n];
    let mut nbr_colors = vec![0u64; n];
    while let Some(v) = dsatur_pick(adj, &colors, &nbr_colors) {
        let c = (!nbr_colors[v]).trailing_zeros() as usize;
        colors[v] = c;
        for u in mask_to_vec(adj[v]) {
            nbr_colors[u] |= 1 << c;
        }
    }
    colors
}

#[allow(clippy::too_many_arguments)]
fn branch(
    adj: &[u64],
    colors: &mut Vec<usize>,
    nbr_colors: &mut Vec<u64>,
    used: usize,
    lower: usize,
    best_k: &mut usize,
    best: &mut Vec<usize>,
) {
    if *best_k <= lower {
        return;
    }
    let Some(v) = dsatur_pick(adj, colors, nbr_colors) else {
        if used < *best_k {
            *best_k = used;
            *best = colors.clone();
        }
        return;
    };
    // Try existing colors first, then one new color if it can still win.
    for c in 0..=used {
        if c + 1 >= *best_k {
            break;
        }
        if nbr_colors[v] >> c & 1 == 1 {
            continue;
        }
        let saved: Vec<(usize, u64)> = mask_to_vec(adj[v]).into_iter().map(|u| (u, nbr_colors[u])).collect();
        colors[v] = c;
        for &(u, _) in &saved {
            nbr_colors[u] |= 1 << c;
        }
        branch(adj, colors, nbr_colors, used.max(c + 1), lower, best_k, best);
        for (u, m) in saved {
            nbr_colors[u] = m;
        }
        colors[v] = usize::MAX;
        if *best_k <= lower {
            return;
        }
    }
}

fn greedy_clique(adj: &[u64]) -> usize {
    let n = adj.len();
    let mut best = 0;
    for start in 0..n {
        let mut cand = adj[start];
        let mut size = 1;
        while cand != 0 {
            let v = mask_to_vec(cand)
                .into_iter()
                .max_by_key(|&v| (adj[v] & cand).count_ones())
                .expect("non-empty");
            size += 1;
            cand &= adj[v];
        }
        best = best.max(size);
    }
    best
}

/// Greedy clique cover: seed with the most targeted uncovered packet, grow
/// with uncovered packets in descending target order, then make the set
/// maximal. Redundant sets are dropped afterwards.
pub fn solve_heuristic(graph: &IdncGraph, sfm: &StateFeedbackMatrix) -> IdncSolution {
    let k = graph.n_vertices();
    let targets = target_sizes(sfm);
    let order = packets_by_desc_target(&targets);
    let mut covered = vec![false; k];
    let mut sets: Vec<Vec<usize>> = Vec::new();
    while let Some(&seed) = order.iter().find(|&&p| !covered[p]) {
        let mut set = vec![seed];
        for &p in order.iter().filter(|&&p| !covered[p] && p != seed) {
            if set.iter().all(|&q| graph.adjacent(p, q)) {
                set.push(p);
            }
        }
        for &p in &order {
            if !set.contains(&p) && set.iter().all(|&q| graph.adjacent(p, q)) {
                set.push(p);
            }
        }
        set.iter().for_each(|&p| covered[p] = true);
        sets.push(set);
    }
    // Drop sets fully covered by the others, last first.
    let mut i = sets.len();
    while i > 0 {
        i -= 1;
        let redundant = sets[i]
            .iter()
            .all(|&p| sets.iter().enumerate().any(|(j, s)| j != i && s.contains(&p)));
        if redundant {
            sets.remove(i);
        }
    }
    let mut sets: Vec<CodingSet> = sets.into_iter().map(|s| CodingSet::new(s, &targets)).collect();
    order_sets(&mut sets, &targets);
    debug_assert!(sets.iter().all(|s| graph.is_clique(&s.packets)));
    IdncSolution {
        sets,
        packet_targets: targets,
        packet_ids: sfm.packet_ids().to_vec(),
    }
}

/// Exact solver within its size limit, greedy otherwise.
pub fn solve(graph: &IdncGraph, sfm: &StateFeedbackMatrix) -> IdncSolution {
    solve_exact(graph, sfm).unwrap_or_else(|_| solve_heuristic(graph, sfm))
}

/// Drops each packet from every set after the first one containing it.
pub fn reduce_diversity(solution: &IdncSolution) -> Result<IdncSolution, IdncError> {
    let mut seen = vec![false; solution.n_packets()];
    let mut sets = Vec::with_capacity(solution.sets.len());
    for (i, s) in solution.sets.iter().enumerate() {
        let kept: Vec<usize> = s.packets.iter().copied().filter(|&p| !seen[p]).collect();
        if kept.is_empty() {
            return Err(IdncError::EmptySetProduced(i));
        }
        kept.iter().for_each(|&p| seen[p] = true);
        sets.push(CodingSet::new(kept, &solution.packet_targets));
    }
    Ok(IdncSolution {
        sets,
        packet_targets: solution.packet_targets.clone(),
        packet_ids: solution.packet_ids.clone(),
    })
}

/// Number of sets containing packet column `packet`.
pub fn diversity(solution: &IdncSolution, packet: usize) -> Result<usize, IdncError> {
    if packet >= solution.n_packets() {
        return Err(IdncError::UnknownPacket(packet));
    }
    Ok(solution.sets.iter().filter(|s| s.contains(packet)).count())
}
