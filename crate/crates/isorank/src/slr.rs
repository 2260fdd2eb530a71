//! One soft-local-ranking pass around a reference expert.
//!
//! A pass walks a dyadic height grid from coarse to fine. At each height it
//! (1) selects the question subset whose between-band widths are informative
//! at that height, (2) updates the comparison weights with plain averages
//! over the selected questions, and (3) estimates a spectral direction on the
//! restricted submatrix, maps it to nonnegative per-question weights, and
//! updates the comparison weights once more. Every update only ever replaces
//! a weight with one that is at least as large in absolute value.
//!
//! A pass owns nothing: the evolving weighted graph is shared across passes
//! and a cache keyed by graph content, reference neighborhood, and question
//! subset avoids recomputing band statistics and spectral directions that
//! cannot have changed.

use crate::compgraph::{
    threshold_graph, BandStructure, ThresholdedDigraph, WeightedGraph, BOTTOM_ID,
};
use crate::eig::{top_eigenpair, EigOptions, SymOp};
use crate::error::{Error, Result};
use crate::rng::{rng_from, splitmix64};
use crate::sampling::BatchedObservations;
use ndarray::Array2;
use rand::Rng;
use std::collections::{HashMap, HashSet};

/// Dyadic heights `2^-k` spanning `[1/(nd), 1]`, iterated coarse to fine.
#[derive(Clone, Debug)]
pub struct HeightGrid {
    heights: Vec<f64>,
}

impl HeightGrid {
    /// All dyadic heights in `[1/(nd), 1]`, descending.
    pub fn standard(n: usize, d: usize) -> Self {
        assert!(n >= 1 && d >= 1);
        let k_max = (n * d).ilog2();
        HeightGrid {
            heights: (0..=k_max).map(|k| 2f64.powi(-(k as i32))).collect(),
        }
    }

    /// Validates a custom list: strictly descending powers of two within
    /// `[1/(nd), 1]`.
    pub fn from_heights(heights: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if heights.is_empty() {
            return Err(Error::InvalidConfig("empty height grid".into()));
        }
        let lo = 1.0 / (n * d) as f64;
        for &h in &heights {
            let k = h.log2().round();
            if h != 2f64.powi(k as i32) || !(lo..=1.0).contains(&h) {
                return Err(Error::InvalidConfig(format!(
                    "height {h} is not a dyadic value in [1/(nd), 1]"
                )));
            }
        }
        if heights.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidConfig(
                "heights must be strictly descending".into(),
            ));
        }
        Ok(HeightGrid { heights })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.heights
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }
}

/// Questions selected at one height, with the band depth chosen per question.
#[derive(Clone, Debug)]
pub struct QuestionSelection {
    pub h: f64,
    /// Chosen band depth for every question (length `d`).
    pub a_hat: Vec<usize>,
    /// Selected questions, ascending.
    pub q_hat: Vec<usize>,
}

/// Nonnegative per-question weights used for one comparison update.
#[derive(Clone, Debug)]
pub struct UpdateVector {
    /// Question indices (into the full column range), ascending.
    pub cols: Vec<usize>,
    pub w: Vec<f64>,
}

impl UpdateVector {
    pub fn indicator(cols: Vec<usize>) -> Self {
        let w = vec![1.0; cols.len()];
        UpdateVector { cols, w }
    }

    pub fn norm2(&self) -> f64 {
        self.w.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn linf(&self) -> f64 {
        self.w.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.w.iter().all(|&x| x == 0.0)
    }

    /// The balance condition `lambda0 * ||w||_2^2 >= ||w||_inf^2` guarding
    /// against overly sparse weights; zero vectors never pass.
    pub fn passes_balance(&self, lambda0: f64) -> bool {
        let n2 = self.w.iter().map(|x| x * x).sum::<f64>();
        let li = self.linf();
        !self.is_zero() && lambda0 * n2 >= li * li
    }
}

/// `1 / sqrt(lambda0 min (1/lambda0))`, the update normalization.
pub fn update_scale(lambda0: f64) -> f64 {
    1.0 / lambda0.min(1.0 / lambda0).sqrt()
}

/// Scaled inner products `U[i][j]` of row differences against `w / ||w||`,
/// for every `j` in `p` other than `i`.
pub fn updating_weights(
    y: &Array2<f64>,
    p: &[usize],
    i: usize,
    w: &UpdateVector,
    lambda0: f64,
) -> Vec<(usize, f64)> {
    assert!(!w.is_zero(), "updating weights need a nonzero direction");
    let norm = w.norm2();
    let scale = update_scale(lambda0);
    let dot = |row: usize| -> f64 {
        w.cols
            .iter()
            .zip(&w.w)
            .map(|(&k, &wk)| y[(row, k)] * wk)
            .sum::<f64>()
    };
    let si = dot(i);
    p.iter()
        .copied()
        .filter(|&j| j != i)
        .map(|j| (j, scale * (si - dot(j)) / norm))
        .collect()
}

/// Per-level column sums and member counts of the two bands, cumulative in
/// the depth `a`. Virtual vertices contribute pseudo-rows: the top vertex a
/// constant `lambda1`, the bottom vertex zero.
struct BandColumnStats {
    d: usize,
    amax: usize,
    above_sum: Array2<f64>,
    below_sum: Array2<f64>,
    above_total: Vec<u32>,
    above_real: Vec<u32>,
    below_total: Vec<u32>,
    below_real: Vec<u32>,
}

impl BandColumnStats {
    fn new(y: &Array2<f64>, structure: &BandStructure, lambda1: f64) -> Self {
        let n = structure.n;
        let d = y.ncols();
        let amax = n + 2;
        let mut stats = BandColumnStats {
            d,
            amax,
            above_sum: Array2::zeros((amax + 1, d)),
            below_sum: Array2::zeros((amax + 1, d)),
            above_total: vec![0; amax + 1],
            above_real: vec![0; amax + 1],
            below_total: vec![0; amax + 1],
            below_real: vec![0; amax + 1],
        };
        let top_id = n + 1;
        for id in 0..n + 2 {
            for (side, level) in [
                (0, structure.above_level[id]),
                (1, structure.below_level[id]),
            ] {
                if level == 0 {
                    continue;
                }
                let lvl = level as usize;
                let (sum, total, real) = if side == 0 {
                    (
                        &mut stats.above_sum,
                        &mut stats.above_total,
                        &mut stats.above_real,
                    )
                } else {
                    (
                        &mut stats.below_sum,
                        &mut stats.below_total,
                        &mut stats.below_real,
                    )
                };
                total[lvl] += 1;
                if id == BOTTOM_ID {
                    // Pseudo-row of zeros: counts but adds nothing.
                } else if id == top_id {
                    for k in 0..d {
                        sum[(lvl, k)] += lambda1;
                    }
                } else {
                    real[lvl] += 1;
                    let row = y.row(id - 1);
                    for k in 0..d {
                        sum[(lvl, k)] += row[k];
                    }
                }
            }
        }
        // Cumulative over depths.
        for a in 1..=amax {
            stats.above_total[a] += stats.above_total[a - 1];
            stats.above_real[a] += stats.above_real[a - 1];
            stats.below_total[a] += stats.below_total[a - 1];
            stats.below_real[a] += stats.below_real[a - 1];
            for k in 0..d {
                let prev = stats.above_sum[(a - 1, k)];
                stats.above_sum[(a, k)] += prev;
                let prev = stats.below_sum[(a - 1, k)];
                stats.below_sum[(a, k)] += prev;
            }
        }
        stats
    }

    /// Width of question `k` at depth `a`: mean over the above band minus
    /// mean over the below band; `None` when either band is empty.
    fn width(&self, k: usize, a: usize) -> Option<f64> {
        let (ca, cb) = (self.above_total[a], self.below_total[a]);
        if ca == 0 || cb == 0 {
            return None;
        }
        Some(self.above_sum[(a, k)] / ca as f64 - self.below_sum[(a, k)] / cb as f64)
    }

    fn counts(&self, a: usize, count_virtual: bool) -> (u32, u32) {
        if count_virtual {
            (self.above_total[a], self.below_total[a])
        } else {
            (self.above_real[a], self.below_real[a])
        }
    }
}

/// Precomputed band-depth choices for every (height, question) pair over one
/// (graph, reference set, batch) combination.
pub struct WidthTable {
    stats: BandColumnStats,
    heights: Vec<f64>,
    /// `a_hat[(m, k)]` for height index `m`.
    a_hat: Array2<u32>,
}

impl WidthTable {
    pub fn new(
        y: &Array2<f64>,
        structure: &BandStructure,
        lambda0: f64,
        lambda1: f64,
        heights: &[f64],
    ) -> Self {
        let stats = BandColumnStats::new(y, structure, lambda1);
        let (d, amax) = (stats.d, stats.amax);
        let n_h = heights.len();
        let denom = lambda0.min(1.0);
        let mut a_hat = Array2::zeros((n_h, d));
        // bucket[l] = deepest a whose normalized width is below exactly the
        // l highest heights; suffix maxima then answer every height at once.
        let mut bucket = vec![0u32; n_h + 2];
        for k in 0..d {
            bucket.iter_mut().for_each(|b| *b = 0);
            for a in 1..=amax {
                // Undefined widths (an empty band) never count as small.
                let small_for = match stats.width(k, a) {
                    Some(w) => heights.partition_point(|&h| w / denom < h),
                    None => 0,
                };
                if small_for > 0 {
                    bucket[small_for] = bucket[small_for].max(a as u32);
                }
            }
            let mut suffix = 0u32;
            let mut deepest = vec![0u32; n_h + 1];
            for l in (1..=n_h).rev() {
                suffix = suffix.max(bucket[l]);
                deepest[l - 1] = suffix;
            }
            for m in 0..n_h {
                a_hat[(m, k)] = deepest[m] + 1;
            }
        }
        WidthTable {
            stats,
            heights: heights.to_vec(),
            a_hat,
        }
    }

    /// Question selection at the height with index `h_idx`.
    pub fn selection(&self, h_idx: usize, lambda0: f64, count_virtual: bool) -> QuestionSelection {
        let h = self.heights[h_idx];
        let bound = 1.0 / (lambda0 * h * h);
        let mut a_hat = Vec::with_capacity(self.stats.d);
        let mut q_hat = Vec::new();
        for k in 0..self.stats.d {
            let a = self.a_hat[(h_idx, k)] as usize;
            a_hat.push(a);
            let (ca, cb) = self.stats.counts(a.min(self.stats.amax), count_virtual);
            if ca.min(cb) as f64 <= bound {
                q_hat.push(k);
            }
        }
        QuestionSelection { h, a_hat, q_hat }
    }
}

/// Width of question `k` at depth `a` relative to the reference set `p`.
/// Returns positive infinity when either band is empty at that depth (the
/// width is undefined there and must never count as small).
pub fn width_statistic(
    y: &Array2<f64>,
    graph: &ThresholdedDigraph,
    p: &[usize],
    k: usize,
    a: usize,
    lambda0: f64,
) -> Result<f64> {
    assert!(a >= 1);
    let lambda1 = -(-lambda0).exp_m1();
    let structure = graph.band_structure(p)?;
    let stats = BandColumnStats::new(y, &structure, lambda1);
    Ok(stats
        .width(k, a.min(stats.amax))
        .unwrap_or(f64::INFINITY))
}

/// The chosen band depth for question `k` at height `h`: one more than the
/// deepest `a` whose normalized width stays below `h` (1 when there is none).
pub fn select_level(
    y: &Array2<f64>,
    graph: &ThresholdedDigraph,
    p: &[usize],
    k: usize,
    h: f64,
    lambda0: f64,
) -> Result<usize> {
    let lambda1 = -(-lambda0).exp_m1();
    let structure = graph.band_structure(p)?;
    let stats = BandColumnStats::new(y, &structure, lambda1);
    let denom = lambda0.min(1.0);
    let mut deepest = 0;
    for a in 1..=stats.amax {
        if let Some(w) = stats.width(k, a) {
            if w / denom < h {
                deepest = a;
            }
        }
    }
    Ok(deepest + 1)
}

/// Questions whose chosen band is small enough to be informative at height
/// `h`: band cardinality at the chosen depth at most `1/(lambda0 h^2)`.
pub fn select_questions(
    y: &Array2<f64>,
    graph: &ThresholdedDigraph,
    p: &[usize],
    h: f64,
    lambda0: f64,
    count_virtual: bool,
) -> Result<QuestionSelection> {
    let lambda1 = -(-lambda0).exp_m1();
    let structure = graph.band_structure(p)?;
    let table = WidthTable::new(y, &structure, lambda0, lambda1, &[h]);
    Ok(table.selection(0, lambda0, count_virtual))
}

/// A row/column-restricted view of a batch matrix with the column means over
/// the restricted rows subtracted. Only ever a view: entries are produced on
/// demand.
pub struct RestrictedCentered<'a> {
    y: &'a Array2<f64>,
    rows: &'a [usize],
    cols: &'a [usize],
    col_means: Vec<f64>,
}

impl<'a> RestrictedCentered<'a> {
    pub fn new(y: &'a Array2<f64>, rows: &'a [usize], cols: &'a [usize]) -> Self {
        let mut col_means = vec![0.0; cols.len()];
        if !rows.is_empty() {
            for &r in rows {
                for (c, &k) in cols.iter().enumerate() {
                    col_means[c] += y[(r, k)];
                }
            }
            let inv = 1.0 / rows.len() as f64;
            col_means.iter_mut().for_each(|m| *m *= inv);
        }
        RestrictedCentered {
            y,
            rows,
            cols,
            col_means,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        self.y[(self.rows[r], self.cols[c])] - self.col_means[c]
    }

    /// `out = A v` with `v` of length `ncols`.
    fn matvec(&self, v: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.rows[r];
            let mut acc = 0.0;
            for (c, &k) in self.cols.iter().enumerate() {
                acc += (self.y[(row, k)] - self.col_means[c]) * v[c];
            }
            *o = acc;
        }
    }

    /// `out = A^T v` with `v` of length `nrows`.
    fn matvec_t(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, &row) in self.rows.iter().enumerate() {
            let vr = v[r];
            for (c, &k) in self.cols.iter().enumerate() {
                out[c] += (self.y[(row, k)] - self.col_means[c]) * vr;
            }
        }
    }

    fn frob2_diff(&self, other: &RestrictedCentered) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.nrows() {
            for c in 0..self.ncols() {
                let d = self.entry(r, c) - other.entry(r, c);
                acc += d * d;
            }
        }
        acc
    }
}

/// The symmetric operator `S = A2 A2^T - (A2 - A3)(A2 - A3)^T / 2` applied
/// through five restricted matrix-vector passes, never materialized.
struct SpectralOp<'a> {
    a2: &'a RestrictedCentered<'a>,
    a3: &'a RestrictedCentered<'a>,
    shift: f64,
}

impl SymOp for SpectralOp<'_> {
    fn dim(&self) -> usize {
        self.a2.nrows()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let q = self.a2.ncols();
        let p = self.a2.nrows();
        let mut t2 = vec![0.0; q];
        let mut t3 = vec![0.0; q];
        self.a2.matvec_t(v, &mut t2);
        self.a3.matvec_t(v, &mut t3);
        let u: Vec<f64> = t2.iter().zip(&t3).map(|(a, b)| a - b).collect();
        self.a2.matvec(&t2, out);
        let mut w2 = vec![0.0; p];
        let mut w3 = vec![0.0; p];
        self.a2.matvec(&u, &mut w2);
        self.a3.matvec(&u, &mut w3);
        for r in 0..p {
            out[r] -= 0.5 * (w2[r] - w3[r]);
        }
    }

    fn norm_bound(&self) -> f64 {
        self.shift
    }
}

/// Estimates a shift dominating the negative part of the spectral operator:
/// the most negative eigenvalue is at least `-||A2 - A3||_op^2 / 2`, so a
/// power estimate of that operator norm (with head-room, capped by the
/// certified Frobenius bound) suffices. An underestimate in a pathological
/// case only makes the spectral step skip, never return a wrong direction.
fn estimate_shift(a2: &RestrictedCentered, a3: &RestrictedCentered, seed: u64) -> f64 {
    let frob2 = a2.frob2_diff(a3);
    if frob2 == 0.0 {
        return 0.0;
    }
    let (p, q) = (a2.nrows(), a2.ncols());
    let mut rng = rng_from(seed, &[0xD1FF, p as u64, q as u64]);
    let mut v: Vec<f64> = (0..p).map(|_| rng.random::<f64>() - 0.5).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    v.iter_mut().for_each(|x| *x /= norm);
    let mut lam = 0.0;
    let mut u2 = vec![0.0; q];
    let mut u3 = vec![0.0; q];
    let mut w2 = vec![0.0; p];
    let mut w3 = vec![0.0; p];
    for _ in 0..40 {
        a2.matvec_t(&v, &mut u2);
        a3.matvec_t(&v, &mut u3);
        let u: Vec<f64> = u2.iter().zip(&u3).map(|(a, b)| a - b).collect();
        a2.matvec(&u, &mut w2);
        a3.matvec(&u, &mut w3);
        let w: Vec<f64> = w2.iter().zip(&w3).map(|(a, b)| a - b).collect();
        lam = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if lam == 0.0 {
            break;
        }
        v = w;
        v.iter_mut().for_each(|x| *x /= lam);
    }
    (1.25 * lam).min(0.5 * frob2)
}

/// Direction maximizing `||v^T A2||^2 - ||v^T (A2 - A3)||^2 / 2` over the
/// unit ball. Returns the top eigenpair of the associated symmetric operator,
/// or `None` when its top eigenvalue is nonpositive (the maximizer over the
/// ball is then the zero vector and the caller skips the spectral update).
pub fn spectral_direction(
    a2: &RestrictedCentered,
    a3: &RestrictedCentered,
    opts: &EigOptions,
) -> Option<(f64, Vec<f64>)> {
    assert_eq!(a2.nrows(), a3.nrows());
    assert_eq!(a2.ncols(), a3.ncols());
    if a2.nrows() == 0 || a2.ncols() == 0 {
        return None;
    }
    let shift = estimate_shift(a2, a3, opts.seed);
    let op = SpectralOp { a2, a3, shift };
    let (lam, v) = top_eigenpair(&op, opts);
    (lam > 0.0).then_some((lam, v))
}

/// Zeroes the entries of the direction larger than `sqrt(lambda0)` in
/// absolute value (sparse-regime safeguard).
pub fn truncate_direction(v_hat: &[f64], lambda0: f64) -> Vec<f64> {
    let cut = lambda0.sqrt();
    v_hat
        .iter()
        .map(|&x| if x.abs() <= cut { x } else { 0.0 })
        .collect()
}

/// The image `z = v^T A4` of a direction under the centered restricted batch.
pub fn image_vector(v_minus: &[f64], a4: &RestrictedCentered) -> Vec<f64> {
    assert_eq!(v_minus.len(), a4.nrows());
    let mut z = vec![0.0; a4.ncols()];
    a4.matvec_t(v_minus, &mut z);
    z
}

/// Absolute image values, keeping only those at least
/// `gamma * sqrt(lambda0 min 1/lambda0)`; columns reported in the full
/// column indexing of the batch.
pub fn image_weights(
    v_minus: &[f64],
    a4: &RestrictedCentered,
    gamma: f64,
    lambda0: f64,
) -> UpdateVector {
    let z = image_vector(v_minus, a4);
    threshold_image(&z, a4.cols, gamma, lambda0)
}

fn threshold_image(z: &[f64], cols: &[usize], gamma: f64, lambda0: f64) -> UpdateVector {
    let tau = gamma * lambda0.min(1.0 / lambda0).sqrt();
    let mut out_cols = Vec::new();
    let mut w = Vec::new();
    for (l, &zl) in z.iter().enumerate() {
        if zl.abs() >= tau {
            out_cols.push(cols[l]);
            w.push(zl.abs());
        }
    }
    UpdateVector { cols: out_cols, w }
}

/// Per-pass configuration shared by every pass of a run.
#[derive(Clone, Debug)]
pub struct SlrConfig {
    pub heights: HeightGrid,
    /// Whether virtual vertices count toward band cardinalities in the
    /// question selection rule.
    pub count_virtual_in_bands: bool,
    pub eig: EigOptions,
}

/// One trace record per visited height.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct TraceEvent {
    pub t: usize,
    pub gamma: f64,
    pub i: usize,
    pub h: f64,
    pub q_len: usize,
    /// Largest absolute average-based update attempted (0 when skipped).
    pub avg_update_abs: f64,
    /// Largest absolute image-weighted update attempted (0 when skipped).
    pub image_update_abs: f64,
}

pub type TraceSink<'a> = Option<&'a mut dyn FnMut(&TraceEvent)>;

fn emit(trace: &mut TraceSink, ev: TraceEvent) {
    if let Some(sink) = trace {
        sink(&ev);
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PassStats {
    /// Weight entries overwritten by this pass.
    pub updates_applied: usize,
    /// Times the thresholded edge set changed and graph state was refreshed.
    pub crossings: usize,
}

/// Cross-pass cache. Entries are keyed by graph content (an epoch counter
/// that only advances when the thresholded edge set actually changes), the
/// reference neighborhood, and the selected question subset, so nothing is
/// reused across a genuine state change.
pub struct SlrCache {
    t: Option<usize>,
    gamma: f64,
    epoch: u64,
    dirty: bool,
    graph: Option<ThresholdedDigraph>,
    bands: HashMap<(u64, u64), WidthTable>,
    avg_scores: HashMap<u64, Vec<f64>>,
    spectral: HashMap<(u64, u64), Option<Vec<f64>>>,
}

impl SlrCache {
    pub fn new() -> Self {
        SlrCache {
            t: None,
            gamma: f64::NAN,
            epoch: 0,
            dirty: false,
            graph: None,
            bands: HashMap::new(),
            avg_scores: HashMap::new(),
            spectral: HashMap::new(),
        }
    }

    fn begin(&mut self, t: usize) {
        if self.t != Some(t) {
            self.t = Some(t);
            self.bands.clear();
            self.avg_scores.clear();
            self.spectral.clear();
        }
    }
}

impl Default for SlrCache {
    fn default() -> Self {
        SlrCache::new()
    }
}

fn sync_graph(cache: &mut SlrCache, wg: &WeightedGraph, gamma: f64) {
    let stale = cache.dirty || cache.graph.is_none() || cache.gamma != gamma;
    if !stale {
        return;
    }
    let candidate = threshold_graph(wg, gamma);
    let same = cache
        .graph
        .as_ref()
        .is_some_and(|g| g.internal_edges() == candidate.internal_edges());
    if !same {
        cache.epoch += 1;
        cache.bands.clear();
        cache.graph = Some(candidate);
    }
    cache.gamma = gamma;
    cache.dirty = false;
}

fn hash_indices(xs: &[usize]) -> u64 {
    let mut acc = splitmix64(0x9E37_79B9_7F4A_7C15 ^ xs.len() as u64);
    for &x in xs {
        acc = splitmix64(acc ^ x as u64);
    }
    acc
}

fn subset_row_sums(y: &Array2<f64>, cols: &[usize]) -> Vec<f64> {
    (0..y.nrows())
        .map(|r| cols.iter().map(|&k| y[(r, k)]).sum())
        .collect()
}

/// Applies updates around `i`, refreshing the cached graph and the
/// neighborhood when the thresholded edge set changed. Errors when the
/// refreshed graph turned cyclic (the caller abandons this threshold).
#[allow(clippy::too_many_arguments)]
fn apply_refreshing(
    wg: &mut WeightedGraph,
    cache: &mut SlrCache,
    gamma: f64,
    i: usize,
    updates: &[(usize, f64)],
    p: &mut Vec<usize>,
    p_hash: &mut u64,
    stats: &mut PassStats,
) -> Result<()> {
    let outcome = wg.apply_update(i, updates, gamma);
    stats.updates_applied += outcome.applied;
    if outcome.edges_changed {
        stats.crossings += 1;
        cache.dirty = true;
        sync_graph(cache, wg, gamma);
        let graph = cache.graph.as_ref().expect("graph was just rebuilt");
        if !graph.is_acyclic() {
            return Err(Error::CyclicGraph);
        }
        *p = graph.neighborhood(i)?;
        *p_hash = hash_indices(p);
    }
    Ok(())
}

/// One soft-local-ranking pass for reference expert `i` at threshold `gamma`,
/// using the five batches of step `t`. Requires the thresholded graph to be
/// acyclic on entry and errors with `CyclicGraph` the moment a refresh finds
/// a cycle (the caller then abandons this threshold for the current step).
#[allow(clippy::too_many_arguments)]
pub fn slr_pass(
    obs: &BatchedObservations,
    t: usize,
    wg: &mut WeightedGraph,
    gamma: f64,
    i: usize,
    cfg: &SlrConfig,
    cache: &mut SlrCache,
    mut trace: TraceSink,
) -> Result<PassStats> {
    let n = wg.n();
    assert!(i < n, "reference expert out of range");
    assert!(
        5 * t + 5 <= obs.batches.len(),
        "step {t} exceeds the available batches"
    );
    let lambda0 = obs.lambda0;
    cache.begin(t);
    sync_graph(cache, wg, gamma);
    if !cache.graph.as_ref().unwrap().is_acyclic() {
        return Err(Error::CyclicGraph);
    }
    let mut p = cache.graph.as_ref().unwrap().neighborhood(i)?;
    let mut p_hash = hash_indices(&p);
    let mut stats = PassStats::default();
    let mut seen: HashSet<(u64, u64)> = HashSet::new();
    let scale = update_scale(lambda0);
    let n_heights = cfg.heights.len();

    for h_idx in 0..n_heights {
        let h = cfg.heights.as_slice()[h_idx];
        let band_key = (cache.epoch, p_hash);
        if !cache.bands.contains_key(&band_key) {
            let structure = cache.graph.as_ref().unwrap().band_structure(&p)?;
            let y1 = &obs.window(t)[0].y;
            let table = WidthTable::new(
                y1,
                &structure,
                lambda0,
                obs.lambda1,
                cfg.heights.as_slice(),
            );
            cache.bands.insert(band_key, table);
        }
        let sel = cache.bands[&band_key].selection(h_idx, lambda0, cfg.count_virtual_in_bands);
        let q_hash = hash_indices(&sel.q_hat);
        let mut ev = TraceEvent {
            t,
            gamma,
            i,
            h,
            q_len: sel.q_hat.len(),
            avg_update_abs: 0.0,
            image_update_abs: 0.0,
        };
        // Identical (neighborhood, question) state was already processed at a
        // coarser height within this pass; redoing it would be a no-op.
        if !seen.insert((p_hash, q_hash)) {
            emit(&mut trace, ev);
            continue;
        }

        // Average-based update with the indicator of the selected questions,
        // gated by the balance condition (for an indicator: lambda0 |Q| >= 1).
        if !sel.q_hat.is_empty() && lambda0 * sel.q_hat.len() as f64 >= 1.0 && p.len() >= 2 {
            let scores = cache.avg_scores.entry(q_hash).or_insert_with(|| {
                let y1 = &obs.window(t)[0].y;
                subset_row_sums(y1, &sel.q_hat)
            });
            let inv_norm = 1.0 / (sel.q_hat.len() as f64).sqrt();
            let updates: Vec<(usize, f64)> = p
                .iter()
                .copied()
                .filter(|&j| j != i)
                .map(|j| (j, scale * (scores[i] - scores[j]) * inv_norm))
                .collect();
            ev.avg_update_abs = updates.iter().fold(0.0, |acc, u| u.1.abs().max(acc));
            let res = apply_refreshing(
                wg, cache, gamma, i, &updates, &mut p, &mut p_hash, &mut stats,
            );
            if let Err(e) = res {
                emit(&mut trace, ev);
                return Err(e);
            }
        }

        // Spectral update on the restriction to (neighborhood, questions).
        if p.len() >= 2 && !sel.q_hat.is_empty() {
            let spectral_key = (p_hash, q_hash);
            #[allow(clippy::map_entry)]
            if !cache.spectral.contains_key(&spectral_key) {
                let window = obs.window(t);
                let a2 = RestrictedCentered::new(&window[1].y, &p, &sel.q_hat);
                let a3 = RestrictedCentered::new(&window[2].y, &p, &sel.q_hat);
                let entry = spectral_direction(&a2, &a3, &cfg.eig).map(|(_, v_hat)| {
                    let v_minus = truncate_direction(&v_hat, lambda0);
                    let a4 = RestrictedCentered::new(&window[3].y, &p, &sel.q_hat);
                    image_vector(&v_minus, &a4)
                });
                cache.spectral.insert(spectral_key, entry);
            }
            let w_plus = cache.spectral[&spectral_key]
                .as_ref()
                .map(|z| threshold_image(z, &sel.q_hat, gamma, lambda0));
            if let Some(w_plus) = w_plus {
                if w_plus.passes_balance(lambda0) {
                    let y5 = &obs.window(t)[4].y;
                    let updates = updating_weights(y5, &p, i, &w_plus, lambda0);
                    ev.image_update_abs = updates.iter().fold(0.0, |acc, u| u.1.abs().max(acc));
                    let res = apply_refreshing(
                        wg, cache, gamma, i, &updates, &mut p, &mut p_hash, &mut stats,
                    );
                    if let Err(e) = res {
                        emit(&mut trace, ev);
                        return Err(e);
                    }
                }
            }
        }
        emit(&mut trace, ev);
    }
    Ok(stats)
}
