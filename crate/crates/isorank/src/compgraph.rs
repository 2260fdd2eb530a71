//! Antisymmetric weighted comparison graph, its threshold-indexed DAGs, and
//! rank/band computations on the boundary-extended vertex set.
//!
//! Experts are numbered `0..n`. A positive weight `w[i][j]` is evidence that
//! expert `i` sits above expert `j`; the matrix stays antisymmetric and its
//! absolute entries only ever grow. Thresholding at `gamma` keeps the edges
//! with weight strictly above `gamma`. All rank computations run on a vertex
//! set extended by two virtual vertices: a bottom vertex below every expert
//! and a top vertex above every expert, mirroring the convention that the
//! signal matrix continues with rows of zeros below and rows of ones above.

use crate::error::{Error, Result};
use crate::perm::Permutation;
use ndarray::Array2;

/// A vertex of the extended comparison graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BandMember {
    /// Virtual vertex below all experts (pseudo-row of zeros).
    Bottom,
    Expert(usize),
    /// Virtual vertex above all experts (pseudo-row of ones).
    Top,
}

/// Antisymmetric weight matrix over `n` experts.
#[derive(Clone, Debug)]
pub struct WeightedGraph {
    n: usize,
    w: Array2<f64>,
}

/// What an update application did to the weights.
#[derive(Clone, Copy, Debug, Default)]
pub struct UpdateOutcome {
    /// Number of pairs whose weight was overwritten.
    pub applied: usize,
    /// Whether the edge set of the graph thresholded at the watched value
    /// changed (an edge appeared, disappeared, or flipped orientation).
    pub edges_changed: bool,
}

impl WeightedGraph {
    pub fn new(n: usize) -> Self {
        WeightedGraph {
            n,
            w: Array2::zeros((n, n)),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.w
    }

    /// Largest absolute weight (0 for an empty graph).
    pub fn max_abs_weight(&self) -> f64 {
        self.w.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    /// Overwrites the pair `(i, j)` whenever `|u| >= |w[i][j]|`; equality is
    /// allowed so a fresh statistic of the same strength may flip the
    /// orientation. Returns what changed, watching the edge set at threshold
    /// `watch_gamma`.
    pub fn apply_update(
        &mut self,
        i: usize,
        updates: &[(usize, f64)],
        watch_gamma: f64,
    ) -> UpdateOutcome {
        let mut outcome = UpdateOutcome::default();
        for &(j, u) in updates {
            assert!(j != i, "self-updates are not allowed");
            let old = self.w[(i, j)];
            if u.abs() >= old.abs() {
                self.w[(i, j)] = u;
                self.w[(j, i)] = -u;
                outcome.applied += 1;
                let before = (old > watch_gamma, -old > watch_gamma);
                let after = (u > watch_gamma, -u > watch_gamma);
                if before != after {
                    outcome.edges_changed = true;
                }
            }
        }
        outcome
    }
}

pub(crate) const BOTTOM_ID: usize = 0;

#[inline]
pub(crate) fn expert_id(e: usize) -> usize {
    e + 1
}

/// Rows of single-word-packed bits, one row per internal vertex.
struct BitMatrix {
    words: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    fn new(rows: usize, bits: usize) -> Self {
        let words = bits.div_ceil(64);
        BitMatrix {
            words,
            data: vec![0; rows * words],
        }
    }

    #[inline]
    fn set(&mut self, row: usize, bit: usize) {
        self.data[row * self.words + bit / 64] |= 1 << (bit % 64);
    }

    #[inline]
    fn get(&self, row: usize, bit: usize) -> bool {
        self.data[row * self.words + bit / 64] >> (bit % 64) & 1 == 1
    }

    /// `row_a |= row_b`.
    fn union_into(&mut self, row_a: usize, row_b: usize) {
        let (a, b) = (row_a * self.words, row_b * self.words);
        for w in 0..self.words {
            let v = self.data[b + w];
            self.data[a + w] |= v;
        }
    }

    /// Whether `row` contains all bits of `mask` (given as packed words).
    fn contains_all(&self, row: usize, mask: &[u64]) -> bool {
        let base = row * self.words;
        mask.iter()
            .enumerate()
            .all(|(w, &m)| self.data[base + w] & m == m)
    }
}

/// A thresholded digraph over the extended vertex set.
///
/// Internal vertex ids: `0` is the virtual bottom, `1..=n` are the experts
/// (expert `e` has id `e + 1`), and `n + 1` is the virtual top. Boundary
/// edges (top to everything, everything to bottom) are materialized so path
/// computations need no special cases.
pub struct ThresholdedDigraph {
    n: usize,
    /// Internal edges as expert index pairs, lexicographically sorted.
    edges: Vec<(usize, usize)>,
    succ: Vec<Vec<u32>>,
    pred: Vec<Vec<u32>>,
    /// Topological order over internal ids; `None` when cyclic.
    topo: Option<Vec<u32>>,
    /// Forward/backward reachability over internal ids; built only when
    /// acyclic.
    reach_fwd: Option<BitMatrix>,
    reach_bwd: Option<BitMatrix>,
}

impl ThresholdedDigraph {
    /// Builds the graph from an explicit internal edge list (expert indices).
    pub fn from_edges(n: usize, internal_edges: &[(usize, usize)]) -> Self {
        let v = n + 2;
        let top = n + 1;
        let mut succ: Vec<Vec<u32>> = vec![Vec::new(); v];
        let mut pred: Vec<Vec<u32>> = vec![Vec::new(); v];
        let mut edges: Vec<(usize, usize)> = internal_edges.to_vec();
        edges.sort_unstable();
        edges.dedup();
        for &(i, j) in &edges {
            assert!(i < n && j < n && i != j, "invalid internal edge ({i},{j})");
            succ[expert_id(i)].push(expert_id(j) as u32);
            pred[expert_id(j)].push(expert_id(i) as u32);
        }
        // Boundary edges: top above everything, everything above bottom.
        for (id, preds) in pred.iter_mut().enumerate().take(n + 1) {
            succ[top].push(id as u32);
            preds.push(top as u32);
        }
        for e in 0..n {
            succ[expert_id(e)].push(BOTTOM_ID as u32);
            pred[BOTTOM_ID].push(expert_id(e) as u32);
        }
        let mut graph = ThresholdedDigraph {
            n,
            edges,
            succ,
            pred,
            topo: None,
            reach_fwd: None,
            reach_bwd: None,
        };
        graph.topo = graph.kahn_topo();
        if graph.topo.is_some() {
            graph.build_reachability();
        }
        graph
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn top_id(&self) -> usize {
        self.n + 1
    }

    /// Internal (expert-to-expert) edges, sorted.
    pub fn internal_edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i, j)).is_ok()
    }

    pub fn is_acyclic(&self) -> bool {
        self.topo.is_some()
    }

    fn kahn_topo(&self) -> Option<Vec<u32>> {
        let v = self.n + 2;
        let mut indeg: Vec<u32> = (0..v).map(|id| self.pred[id].len() as u32).collect();
        let mut queue: Vec<u32> = (0..v as u32).filter(|&id| indeg[id as usize] == 0).collect();
        let mut order = Vec::with_capacity(v);
        let mut head = 0;
        while head < queue.len() {
            let id = queue[head];
            head += 1;
            order.push(id);
            for &s in &self.succ[id as usize] {
                indeg[s as usize] -= 1;
                if indeg[s as usize] == 0 {
                    queue.push(s);
                }
            }
        }
        (order.len() == v).then_some(order)
    }

    fn build_reachability(&mut self) {
        let v = self.n + 2;
        let topo = self.topo.as_ref().expect("reachability needs a DAG");
        let mut fwd = BitMatrix::new(v, v);
        for &id in topo.iter().rev() {
            for s_idx in 0..self.succ[id as usize].len() {
                let s = self.succ[id as usize][s_idx] as usize;
                fwd.set(id as usize, s);
                fwd.union_into(id as usize, s);
            }
        }
        let mut bwd = BitMatrix::new(v, v);
        for &id in topo.iter() {
            for p_idx in 0..self.pred[id as usize].len() {
                let p = self.pred[id as usize][p_idx] as usize;
                bwd.set(id as usize, p);
                bwd.union_into(id as usize, p);
            }
        }
        self.reach_fwd = Some(fwd);
        self.reach_bwd = Some(bwd);
    }

    fn require_acyclic(&self) -> Result<&Vec<u32>> {
        self.topo.as_ref().ok_or(Error::CyclicGraph)
    }

    /// Signed longest-path ranks relative to expert `i`: positive rank means
    /// `i` has a path down to the vertex, negative means the vertex has a
    /// path down to `i`, zero means incomparable.
    pub fn relative_rank(&self, i: usize) -> Result<RankProfile> {
        let topo = self.require_acyclic()?;
        let v = self.n + 2;
        let src = expert_id(i);
        // Longest path from src to each vertex (-1 = unreachable).
        let mut down = vec![-1i64; v];
        down[src] = 0;
        for &id in topo.iter() {
            let id = id as usize;
            if down[id] < 0 {
                continue;
            }
            for &s in &self.succ[id] {
                let s = s as usize;
                down[s] = down[s].max(down[id] + 1);
            }
        }
        // Longest path from each vertex to src.
        let mut up = vec![-1i64; v];
        up[src] = 0;
        for &id in topo.iter().rev() {
            let id = id as usize;
            if up[id] < 0 {
                continue;
            }
            for &p in &self.pred[id] {
                let p = p as usize;
                up[p] = up[p].max(up[id] + 1);
            }
        }
        let ranks = (0..v)
            .map(|j| down[j].max(0) - up[j].max(0))
            .collect();
        Ok(RankProfile {
            n: self.n,
            reference: i,
            ranks,
        })
    }

    /// Experts incomparable with `i` (always contains `i`).
    pub fn neighborhood(&self, i: usize) -> Result<Vec<usize>> {
        self.require_acyclic()?;
        let fwd = self.reach_fwd.as_ref().unwrap();
        let bwd = self.reach_bwd.as_ref().unwrap();
        let src = expert_id(i);
        Ok((0..self.n)
            .filter(|&j| {
                let id = expert_id(j);
                !fwd.get(src, id) && !bwd.get(src, id)
            })
            .collect())
    }

    /// Band levels for every extended vertex relative to the expert set `p`.
    pub fn band_structure(&self, p: &[usize]) -> Result<BandStructure> {
        let topo = self.require_acyclic()?;
        assert!(!p.is_empty(), "band structure needs a nonempty reference set");
        let v = self.n + 2;
        let words = v.div_ceil(64);
        let mut p_mask = vec![0u64; words];
        let mut in_p = vec![false; v];
        for &e in p {
            let id = expert_id(e);
            p_mask[id / 64] |= 1 << (id % 64);
            in_p[id] = true;
        }

        // Longest path ending at a member of p, and the set of p-members
        // reached, going with the edges (for the above side) or against them
        // (for the below side).
        let compute = |adj: &Vec<Vec<u32>>, order: &mut dyn Iterator<Item = u32>| {
            let mut level = vec![0i64; v];
            let mut reach = BitMatrix::new(v, v);
            for id in order {
                let id = id as usize;
                let mut best = 0i64;
                for &s in &adj[id] {
                    let s = s as usize;
                    if in_p[s] {
                        best = best.max(1);
                        reach.set(id, s);
                    }
                    if level[s] > 0 {
                        best = best.max(level[s] + 1);
                    }
                    reach.union_into(id, s);
                }
                level[id] = best;
            }
            let out: Vec<u32> = (0..v)
                .map(|id| {
                    if level[id] > 0 && reach.contains_all(id, &p_mask) {
                        level[id] as u32
                    } else {
                        0
                    }
                })
                .collect();
            out
        };

        // Above side: follow successor edges down into p (reverse topo order
        // so successors are finished first).
        let above_level = compute(&self.succ, &mut topo.iter().rev().copied());
        // Below side: follow predecessor edges up into p.
        let below_level = compute(&self.pred, &mut topo.iter().copied());
        // Only p-reaching members count, and reach is restricted to p members
        // seen along paths; vertices of p itself cannot reach all of p in a
        // DAG, so they are excluded automatically.
        Ok(BandStructure {
            n: self.n,
            above_level,
            below_level,
        })
    }

    /// The two bands at depth `a`: vertices above all of `p` within `a`
    /// levels, and vertices below all of `p` within `a` levels. Virtual
    /// vertices are included, so both sets fill up as `a` grows.
    pub fn banded_neighborhoods(
        &self,
        p: &[usize],
        a: usize,
    ) -> Result<(Vec<BandMember>, Vec<BandMember>)> {
        assert!(a >= 1);
        let bands = self.band_structure(p)?;
        Ok((bands.above_members(a), bands.below_members(a)))
    }

    /// Ranks experts by longest descending path (Mirsky levels); an expert
    /// with a longer chain below it lands at a higher position. Ties are
    /// broken by expert index, so the empty graph yields the identity.
    pub fn mirsky_permutation(&self) -> Result<Permutation> {
        let topo = self.require_acyclic()?;
        let v = self.n + 2;
        // Longest internal path from each expert down to a sink; boundary
        // edges are skipped (they shift every level equally).
        let mut level = vec![0i64; v];
        for &id in topo.iter().rev() {
            let id = id as usize;
            if id == BOTTOM_ID || id == self.top_id() {
                continue;
            }
            for &s in &self.succ[id] {
                let s = s as usize;
                if s == BOTTOM_ID {
                    continue;
                }
                level[id] = level[id].max(level[s] + 1);
            }
        }
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by_key(|&e| (level[expert_id(e)], e));
        let mut positions = vec![0usize; self.n];
        for (pos, &e) in order.iter().enumerate() {
            positions[e] = pos;
        }
        Ok(Permutation::from_positions(positions).expect("levels induce a bijection"))
    }

    /// Mirsky level of each expert (longest internal path to a sink).
    pub fn mirsky_levels(&self) -> Result<Vec<usize>> {
        let topo = self.require_acyclic()?;
        let mut level = vec![0i64; self.n + 2];
        for &id in topo.iter().rev() {
            let id = id as usize;
            if id == BOTTOM_ID || id == self.top_id() {
                continue;
            }
            for &s in &self.succ[id] {
                let s = s as usize;
                if s != BOTTOM_ID {
                    level[id] = level[id].max(level[s] + 1);
                }
            }
        }
        Ok((0..self.n).map(|e| level[expert_id(e)] as usize).collect())
    }
}

/// Longest-path ranks relative to one reference expert, over the extended
/// vertex set.
pub struct RankProfile {
    n: usize,
    pub reference: usize,
    /// Indexed by internal id.
    ranks: Vec<i64>,
}

impl RankProfile {
    pub fn rank_of_expert(&self, j: usize) -> i64 {
        self.ranks[expert_id(j)]
    }

    pub fn rank_of(&self, m: BandMember) -> i64 {
        match m {
            BandMember::Bottom => self.ranks[BOTTOM_ID],
            BandMember::Expert(e) => self.ranks[expert_id(e)],
            BandMember::Top => self.ranks[self.n + 1],
        }
    }
}

/// For every extended vertex, the smallest band depth at which it joins the
/// above band (respectively below band) of a reference set `p`; zero means it
/// never joins because it misses part of `p`.
pub struct BandStructure {
    pub n: usize,
    /// `above_level[id] = l > 0` means the vertex is above all of `p` and
    /// joins the above band for every depth `a >= l`.
    pub above_level: Vec<u32>,
    pub below_level: Vec<u32>,
}

impl BandStructure {
    fn members(&self, levels: &[u32], a: usize) -> Vec<BandMember> {
        (0..self.n + 2)
            .filter(|&id| levels[id] != 0 && levels[id] as usize <= a)
            .map(|id| self.member(id))
            .collect()
    }

    fn member(&self, id: usize) -> BandMember {
        if id == BOTTOM_ID {
            BandMember::Bottom
        } else if id == self.n + 1 {
            BandMember::Top
        } else {
            BandMember::Expert(id - 1)
        }
    }

    pub fn above_members(&self, a: usize) -> Vec<BandMember> {
        self.members(&self.above_level, a)
    }

    pub fn below_members(&self, a: usize) -> Vec<BandMember> {
        self.members(&self.below_level, a)
    }
}

/// The digraph whose internal edges are the pairs with weight strictly above
/// `gamma`.
pub fn threshold_graph(g: &WeightedGraph, gamma: f64) -> ThresholdedDigraph {
    assert!(gamma > 0.0, "thresholds must be positive");
    let n = g.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && g.weight(i, j) > gamma {
                edges.push((i, j));
            }
        }
    }
    ThresholdedDigraph::from_edges(n, &edges)
}

/// The least grid value whose thresholded graph is acyclic, or positive
/// infinity when even the largest grid value leaves a cycle. Acyclicity is
/// monotone in the threshold (larger thresholds only remove edges), which
/// justifies the binary search.
pub fn smallest_acyclic_threshold(g: &WeightedGraph, grid: &[f64]) -> f64 {
    assert!(!grid.is_empty(), "empty threshold grid");
    assert!(
        grid.windows(2).all(|w| w[0] <= w[1]),
        "grid must be sorted ascending"
    );
    if !threshold_graph(g, grid[grid.len() - 1]).is_acyclic() {
        return f64::INFINITY;
    }
    // Invariant: grid[hi] is acyclic, grid[lo..hi] undecided.
    let (mut lo, mut hi) = (0usize, grid.len() - 1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if threshold_graph(g, grid[mid]).is_acyclic() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    grid[lo]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set_weight(g: &mut WeightedGraph, i: usize, j: usize, value: f64) {
        g.apply_update(i, &[(j, value)], f64::INFINITY);
    }

    #[test]
    fn threshold_monotone_on_simple_weights() {
        let mut g = WeightedGraph::new(3);
        set_weight(&mut g, 0, 1, 3.0);
        assert_eq!(g.weight(1, 0), -3.0);
        let g2 = threshold_graph(&g, 2.0);
        assert_eq!(g2.internal_edges(), &[(0, 1)]);
        let g4 = threshold_graph(&g, 4.0);
        assert!(g4.internal_edges().is_empty());
        let zero = threshold_graph(&WeightedGraph::new(3), 1.0);
        assert!(zero.internal_edges().is_empty());
    }

    #[test]
    fn acyclicity_detection() {
        assert!(ThresholdedDigraph::from_edges(3, &[(0, 1), (1, 2)]).is_acyclic());
        assert!(!ThresholdedDigraph::from_edges(2, &[(0, 1), (1, 0)]).is_acyclic());
        assert!(!ThresholdedDigraph::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).is_acyclic());
    }

    #[test]
    fn rank_on_a_chain() {
        // Edges 2 -> 1 -> 0: expert 2 on top.
        let g = ThresholdedDigraph::from_edges(3, &[(2, 1), (1, 0)]);
        let rk = g.relative_rank(2).unwrap();
        assert_eq!(rk.rank_of_expert(1), 1);
        assert_eq!(rk.rank_of_expert(0), 2);
        assert_eq!(rk.rank_of_expert(2), 0);
        // Virtual vertices: top is one step above 2, bottom three below.
        assert_eq!(rk.rank_of(BandMember::Top), -1);
        assert_eq!(rk.rank_of(BandMember::Bottom), 3);
        // Cyclic graphs are rejected.
        let cyc = ThresholdedDigraph::from_edges(2, &[(0, 1), (1, 0)]);
        assert!(cyc.relative_rank(0).is_err());
    }

    #[test]
    fn rank_zero_on_empty_graph() {
        let g = ThresholdedDigraph::from_edges(4, &[]);
        let rk = g.relative_rank(1).unwrap();
        for j in 0..4 {
            assert_eq!(rk.rank_of_expert(j), 0);
        }
        assert_eq!(g.neighborhood(1).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn neighborhood_on_chain() {
        let g = ThresholdedDigraph::from_edges(3, &[(2, 1), (1, 0)]);
        assert_eq!(g.neighborhood(1).unwrap(), vec![1]);
        let g = ThresholdedDigraph::from_edges(3, &[(2, 0)]);
        assert_eq!(g.neighborhood(1).unwrap(), vec![0, 1, 2]);
        assert_eq!(g.neighborhood(2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn bands_on_empty_graph() {
        let g = ThresholdedDigraph::from_edges(4, &[]);
        let (above, below) = g.banded_neighborhoods(&[0, 1, 2, 3], 1).unwrap();
        assert_eq!(above, vec![BandMember::Top]);
        assert_eq!(below, vec![BandMember::Bottom]);
    }

    #[test]
    fn bands_on_chain() {
        // Chain 3 -> 2 -> 1 -> 0 with reference set {1, 2}. Expert 3 reaches
        // 2 in one step but 1 only in two, so it joins the above band at
        // depth 2; symmetrically for expert 0 below.
        let g = ThresholdedDigraph::from_edges(4, &[(3, 2), (2, 1), (1, 0)]);
        let p = vec![1, 2];
        let (above1, below1) = g.banded_neighborhoods(&p, 1).unwrap();
        assert!(above1.is_empty());
        assert!(below1.is_empty());
        let (above2, below2) = g.banded_neighborhoods(&p, 2).unwrap();
        assert_eq!(above2, vec![BandMember::Expert(3)]);
        assert_eq!(below2, vec![BandMember::Expert(0)]);
        // The virtual vertices join one level later (their longest path into
        // the reference set goes through experts 3 and 0 respectively).
        let (above3, below3) = g.banded_neighborhoods(&p, 3).unwrap();
        assert_eq!(above3, vec![BandMember::Expert(3), BandMember::Top]);
        assert_eq!(below3, vec![BandMember::Bottom, BandMember::Expert(0)]);
    }

    #[test]
    fn band_members_must_cover_whole_reference_set() {
        // 3 -> 1 only: expert 3 is above 1 but incomparable with 2, so it
        // never joins the above band of {1, 2}.
        let g = ThresholdedDigraph::from_edges(4, &[(3, 1)]);
        let bands = g.band_structure(&[1, 2]).unwrap();
        assert_eq!(bands.above_level[expert_id(3)], 0);
        // Top reaches both members, but its longest path into the reference
        // set routes through expert 3 (top -> 3 -> 1), so it joins at depth 2.
        assert_eq!(bands.above_level[4 + 1], 2);
    }

    #[test]
    fn mirsky_on_chain_and_empty() {
        let g = ThresholdedDigraph::from_edges(3, &[(2, 1), (1, 0)]);
        let pi = g.mirsky_permutation().unwrap();
        assert_eq!(pi.position(0), 0);
        assert_eq!(pi.position(1), 1);
        assert_eq!(pi.position(2), 2);
        let empty = ThresholdedDigraph::from_edges(3, &[]);
        assert_eq!(empty.mirsky_permutation().unwrap().as_slice(), &[0, 1, 2]);
    }

    #[test]
    fn mirsky_respects_every_edge() {
        // Diamond: 3 above {1, 2}, both above 0.
        let g = ThresholdedDigraph::from_edges(4, &[(3, 1), (3, 2), (1, 0), (2, 0)]);
        let pi = g.mirsky_permutation().unwrap();
        for &(i, j) in g.internal_edges() {
            assert!(pi.position(i) > pi.position(j), "edge ({i},{j}) violated");
        }
        assert_eq!(g.mirsky_levels().unwrap(), vec![0, 1, 1, 2]);
    }

    #[test]
    fn update_rule_keeps_stronger_weights() {
        let mut g = WeightedGraph::new(3);
        set_weight(&mut g, 0, 1, 2.0);
        // Weaker update is ignored.
        let out = g.apply_update(0, &[(1, 1.0)], 0.5);
        assert_eq!(out.applied, 0);
        assert_eq!(g.weight(0, 1), 2.0);
        // Stronger update with a sign flip is applied.
        let out = g.apply_update(0, &[(1, -3.0)], 0.5);
        assert_eq!(out.applied, 1);
        assert!(out.edges_changed);
        assert_eq!(g.weight(0, 1), -3.0);
        assert_eq!(g.weight(1, 0), 3.0);
        // Zero-on-zero is a no-op for the thresholded edge set.
        let mut h = WeightedGraph::new(2);
        let out = h.apply_update(0, &[(1, 0.0)], 0.5);
        assert_eq!(out.applied, 1);
        assert!(!out.edges_changed);
        assert_eq!(h.weight(0, 1), 0.0);
    }

    #[test]
    fn update_crossing_detection() {
        let mut g = WeightedGraph::new(2);
        // Below the watched threshold: no edge change.
        let out = g.apply_update(0, &[(1, 0.4)], 0.5);
        assert!(!out.edges_changed);
        // Crossing it: edge (0,1) appears.
        let out = g.apply_update(0, &[(1, 0.6)], 0.5);
        assert!(out.edges_changed);
        // Growing further above: the edge set is unchanged.
        let out = g.apply_update(0, &[(1, 0.9)], 0.5);
        assert!(!out.edges_changed);
    }

    #[test]
    fn smallest_acyclic_threshold_examples() {
        let zero = WeightedGraph::new(3);
        assert_eq!(smallest_acyclic_threshold(&zero, &[1.0, 6.0]), 1.0);
        // Directed triangle at weight 5: only thresholds above 5 break it.
        let mut g = WeightedGraph::new(3);
        set_weight(&mut g, 0, 1, 5.0);
        set_weight(&mut g, 1, 2, 5.0);
        set_weight(&mut g, 2, 0, 5.0);
        assert_eq!(smallest_acyclic_threshold(&g, &[1.0, 6.0]), 6.0);
        assert_eq!(smallest_acyclic_threshold(&g, &[1.0, 2.0]), f64::INFINITY);
        assert_eq!(smallest_acyclic_threshold(&g, &[1.0, 5.0]), 5.0);
    }

    #[test]
    fn binary_search_matches_linear_scan() {
        use crate::rng::rng_from;
        use rand::Rng;
        for trial in 0..50 {
            let mut rng = rng_from(0xACC, &[trial]);
            let n = 2 + (rng.random::<u32>() % 5) as usize;
            let mut g = WeightedGraph::new(n);
            for i in 0..n {
                for j in 0..i {
                    if rng.random::<f64>() < 0.6 {
                        let w = rng.random::<f64>() * 4.0 - 2.0;
                        set_weight(&mut g, i, j, w);
                    }
                }
            }
            let grid: Vec<f64> = (1..=20).map(|u| 0.2 * u as f64).collect();
            let fast = smallest_acyclic_threshold(&g, &grid);
            let slow = grid
                .iter()
                .copied()
                .find(|&gamma| threshold_graph(&g, gamma).is_acyclic())
                .unwrap_or(f64::INFINITY);
            assert_eq!(fast, slow);
        }
    }
}
