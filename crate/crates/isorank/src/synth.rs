//! Synthetic instance generators: random permuted-isotonic families, a
//! fixed three-block example with a known selection/spectral structure, a
//! staircase family with guaranteed row gaps, and the hard prior used to
//! probe worst-case behavior (grouped steps plus sparse elevated blocks).

use crate::error::{Error, Result};
use crate::perm::Permutation;
use crate::rng::rng_from;
use crate::sampling::SignalInstance;
use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng;

/// Random isotonic families for smoke and sweep tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// Each column is an independent sorted sample of uniforms.
    UniformSorted,
    /// Row-blocks of constant value, nondecreasing across blocks.
    Block { blocks: usize },
    /// Smooth per-column logistic profiles with random center and width.
    Smooth,
}

fn scramble(sorted: Array2<f64>, lambda: f64, rng: &mut impl Rng) -> Result<SignalInstance> {
    let n = sorted.nrows();
    let pi_star = Permutation::random(n, rng);
    let mut m = Array2::zeros(sorted.dim());
    for i in 0..n {
        m.row_mut(i).assign(&sorted.row(pi_star.position(i)));
    }
    SignalInstance::new(m, pi_star, lambda)
}

/// Relabels the experts of an instance by a uniformly random permutation,
/// leaving the hidden sorted matrix unchanged. Generators that emit rows in
/// nearly sorted index order (such as [`gen_lower_bound`]) would otherwise
/// hand index-based tie-breaking an unearned advantage in benchmarks.
pub fn relabel_random(inst: &SignalInstance, seed: u64) -> Result<SignalInstance> {
    let n = inst.m.nrows();
    let mut rng = rng_from(seed, &[0x5CA2, n as u64]);
    let relabel = Permutation::random(n, &mut rng);
    let inv = relabel.inverse();
    let mut m = Array2::zeros(inst.m.dim());
    for r in 0..n {
        m.row_mut(r).assign(&inst.m.row(inv[r]));
    }
    let pi_star = inst.pi_star.compose(&Permutation::from_positions(inv)?);
    SignalInstance::new(m, pi_star, inst.lambda)
}

/// Draws an isotonic matrix in `[0,1]` from the requested family and hides
/// it behind a uniformly random row order.
pub fn gen_isotonic(
    n: usize,
    d: usize,
    family: Family,
    lambda: f64,
    seed: u64,
) -> Result<SignalInstance> {
    if n == 0 || d == 0 {
        return Err(Error::Generator("empty dimensions".into()));
    }
    let mut rng = rng_from(seed, &[0x15070, n as u64, d as u64]);
    let mut sorted = Array2::zeros((n, d));
    match family {
        Family::UniformSorted => {
            for k in 0..d {
                let mut col: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                col.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for (s, v) in col.into_iter().enumerate() {
                    sorted[(s, k)] = v;
                }
            }
        }
        Family::Block { blocks } => {
            if blocks == 0 || blocks > n {
                return Err(Error::Generator(format!(
                    "block count {blocks} not in 1..={n}"
                )));
            }
            for k in 0..d {
                let mut levels: Vec<f64> = (0..blocks).map(|_| rng.random::<f64>()).collect();
                levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for s in 0..n {
                    sorted[(s, k)] = levels[s * blocks / n];
                }
            }
        }
        Family::Smooth => {
            for k in 0..d {
                let center = rng.random_range(0.25..0.75);
                let width = rng.random_range(0.05..0.3);
                for s in 0..n {
                    let x = ((s as f64 + 0.5) / n as f64 - center) / width;
                    sorted[(s, k)] = 1.0 / (1.0 + (-x).exp());
                }
            }
        }
    }
    scramble(sorted, lambda, &mut rng)
}

/// Staircase instances whose adjacent sorted rows differ by at least
/// `0.5/(n+2)` in every column — comfortably rankable without noise. Row
/// jitter and column offsets vary with the seed; the row order is uniform.
pub fn gen_separated(n: usize, d: usize, lambda: f64, seed: u64) -> Result<SignalInstance> {
    if n == 0 || d == 0 {
        return Err(Error::Generator("empty dimensions".into()));
    }
    let mut rng = rng_from(seed, &[0x5E5A, n as u64, d as u64]);
    let jitter: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.5)).collect();
    let offsets: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..0.5)).collect();
    let denom = n as f64 + 2.0;
    let sorted = Array2::from_shape_fn((n, d), |(s, k)| {
        (s as f64 + 1.0 + jitter[s] + offsets[k]) / denom
    });
    scramble(sorted, lambda, &mut rng)
}

/// Dimensions and index sets of the fixed three-block example.
pub const TOY_ROWS: usize = 204;
pub const TOY_COLS: usize = 10;
/// Columns carrying any signal (non-constant columns).
pub const TOY_SIGNAL_COLUMNS: [usize; 6] = [2, 3, 5, 6, 8, 9];
/// Columns on which the four center rows themselves deviate from the base
/// level.
pub const TOY_CENTER_PATTERN_COLUMNS: [usize; 4] = [3, 5, 8, 9];
/// Sorted positions of the four center rows (two low, two high).
pub const TOY_CENTER_ROWS: [usize; 4] = [100, 101, 102, 103];

/// The fixed 204 x 10 three-block example: 100 low rows at `alpha - h/2` on
/// the signal columns, four center rows deviating by `±h/2` only on the
/// center-pattern columns, and 100 high rows at `alpha + h/2` on the signal
/// columns; everything else sits at `alpha`. Stored in sorted order
/// (position 0 lowest) with the identity as the oracle order.
pub fn gen_toy_three_block(alpha: f64, h: f64, lambda: f64) -> Result<SignalInstance> {
    if !(h > 0.0 && h < 1.0) || !(alpha > h && alpha < 1.0 - h) {
        return Err(Error::Generator(format!(
            "need 0 < h < 1 and alpha in (h, 1-h); got alpha={alpha}, h={h}"
        )));
    }
    let mut m = Array2::from_elem((TOY_ROWS, TOY_COLS), alpha);
    let half = h / 2.0;
    for &k in &TOY_SIGNAL_COLUMNS {
        for s in 0..100 {
            m[(s, k)] = alpha - half;
        }
        for s in 104..TOY_ROWS {
            m[(s, k)] = alpha + half;
        }
    }
    for &k in &TOY_CENTER_PATTERN_COLUMNS {
        m[(100, k)] = alpha - half;
        m[(101, k)] = alpha - half;
        m[(102, k)] = alpha + half;
        m[(103, k)] = alpha + half;
    }
    SignalInstance::new(m, Permutation::identity(TOY_ROWS), lambda)
}

/// The grouped-steps-plus-elevated-blocks prior behind the hard instances.
#[derive(Clone, Debug)]
pub struct LowerBoundPrior {
    /// Rows per group (dyadic, divides `n`).
    pub p: usize,
    /// Elevated columns per group (dyadic, at most `d`).
    pub q: usize,
    /// Elevation parameter; the per-entry elevation is
    /// `upsilon / sqrt(p * lambda)`.
    pub upsilon: f64,
    /// Per-group elevated subsets of `[p]` (size `p/2`), drawn from a
    /// pairwise `p/4`-separated collection.
    pub groups: Vec<Vec<usize>>,
    /// Per-group elevated column subsets of `[d]` (size `q`).
    pub question_sets: Vec<Vec<usize>>,
    /// The step vector: constant on each group of `p` consecutive rows,
    /// `w_i = floor(i/p) * p / (4n)`.
    pub w: Vec<f64>,
}

/// Largest power of two at most `x`; `None` when `x < 1`.
pub fn floor_dyadic(x: f64) -> Option<usize> {
    if !(x.is_finite() && x >= 1.0) {
        return None;
    }
    let v = x.floor().min(u64::MAX as f64 / 2.0) as u64;
    Some((1u64 << (63 - v.leading_zeros())) as usize)
}

fn is_power_of_two(v: usize) -> bool {
    v >= 1 && v & (v - 1) == 0
}

/// Draws a collection of up to `want` subsets of `[p]` of size `p/2` whose
/// pairwise symmetric differences are at least `p/4`, by rejection
/// sampling. Gives up on growing the collection after a run of consecutive
/// rejections and returns what it has (always at least one set).
fn packing_collection(p: usize, want: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let half = p / 2;
    let min_sep = p.div_ceil(4);
    let mut collection: Vec<Vec<usize>> = Vec::new();
    let mut stale = 0usize;
    while collection.len() < want && stale < 500 {
        let mut cand: Vec<usize> = sample(rng, p, half).into_vec();
        cand.sort_unstable();
        let separated = collection.iter().all(|g| {
            let mut inter = 0usize;
            let mut a = 0;
            let mut b = 0;
            while a < g.len() && b < cand.len() {
                match g[a].cmp(&cand[b]) {
                    std::cmp::Ordering::Less => a += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => {
                        inter += 1;
                        a += 1;
                        b += 1;
                    }
                }
            }
            2 * (half - inter) >= min_sep
        });
        if separated {
            collection.push(cand);
            stale = 0;
        } else {
            stale += 1;
        }
    }
    collection
}

/// Builds a hard instance: `M = w 1^T + (upsilon / sqrt(p lambda)) B`,
/// where `B` elevates a separated half-subset of each `p`-row group on `q`
/// uniformly chosen columns. Within a group, elevated rows dominate
/// non-elevated rows exactly on the chosen columns, and distinguishing
/// them is the hard part of ranking.
///
/// Requirements: `p`, `q` dyadic with `p` dividing `n` and `2 <= p <= n`,
/// `1 <= q <= d`; elevation bounded by the box constraint
/// `upsilon / sqrt(p lambda) <= p / (8n)`.
pub fn gen_lower_bound(
    n: usize,
    d: usize,
    lambda: f64,
    p: usize,
    q: usize,
    upsilon: f64,
    seed: u64,
) -> Result<(SignalInstance, LowerBoundPrior)> {
    if n == 0 || d == 0 {
        return Err(Error::Generator("empty dimensions".into()));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Generator(format!("bad sampling rate {lambda}")));
    }
    if !is_power_of_two(p) || p < 2 || p > n {
        return Err(Error::Generator(format!(
            "group size {p} must be a power of two in [2, {n}]"
        )));
    }
    if n % p != 0 {
        return Err(Error::Generator(format!(
            "group size {p} must divide n = {n}"
        )));
    }
    if !is_power_of_two(q) || q > d {
        return Err(Error::Generator(format!(
            "question-set size {q} must be a power of two in [1, {d}]"
        )));
    }
    if !(upsilon.is_finite() && upsilon >= 0.0) {
        return Err(Error::Generator(format!("bad elevation {upsilon}")));
    }
    let elevation = upsilon / (p as f64 * lambda).sqrt();
    let cap = p as f64 / (8.0 * n as f64);
    if elevation > cap * (1.0 + 1e-12) {
        return Err(Error::Generator(format!(
            "elevation upsilon/sqrt(p*lambda) = {elevation:.6} exceeds the box bound p/(8n) = {cap:.6}"
        )));
    }

    let strips = n / p;
    let mut rng = rng_from(seed, &[0x10B0, n as u64, d as u64, p as u64, q as u64]);
    let collection = packing_collection(p, 64.min(strips.max(8)), &mut rng);
    let mut groups = Vec::with_capacity(strips);
    let mut question_sets = Vec::with_capacity(strips);
    let w: Vec<f64> = (0..n)
        .map(|i| (i / p) as f64 * p as f64 / (4.0 * n as f64))
        .collect();
    let mut m = Array2::zeros((n, d));
    for i in 0..n {
        for k in 0..d {
            m[(i, k)] = w[i];
        }
    }
    let mut scores = w.clone();
    for strip in 0..strips {
        let g = collection[rng.random_range(0..collection.len())].clone();
        let mut qs: Vec<usize> = sample(&mut rng, d, q).into_vec();
        qs.sort_unstable();
        for &x in &g {
            let row = strip * p + x;
            scores[row] += elevation;
            for &k in &qs {
                m[(row, k)] += elevation;
            }
        }
        groups.push(g);
        question_sets.push(qs);
    }
    let pi_star = Permutation::from_scores(&scores);
    let inst = SignalInstance::new(m, pi_star, lambda)?;
    Ok((
        inst,
        LowerBoundPrior {
            p,
            q,
            upsilon,
            groups,
            question_sets,
            w,
        },
    ))
}

/// Sampling-effort regimes of the hard-instance presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HardRegime {
    /// Fewer than one observation per row on average (`lambda * n <= 1`):
    /// halves of the whole instance are compared on wide column sets.
    Sparse,
    /// The main regime `lambda in [1/n, 8 n^2]`.
    Main,
    /// Saturated sampling (`lambda >= 8 n^2`): adjacent pairs only.
    Saturated,
}

/// Preset group/question sizes and the largest admissible elevation for a
/// hard instance in the given regime.
#[derive(Clone, Copy, Debug)]
pub struct HardParams {
    pub p: usize,
    pub q: usize,
    pub upsilon: f64,
}

/// Chooses `(p, q, upsilon)` for [`gen_lower_bound`]: group size and
/// question count from the regime's rate formulas (rounded down to powers
/// of two and clamped to their ranges), elevation at the largest value
/// every constraint allows:
/// `upsilon = min(1, sqrt(p lambda), sqrt(pd)/q, sqrt(lambda) p^{3/2}/(8n))`.
pub fn hard_preset(regime: HardRegime, n: usize, d: usize, lambda: f64) -> Result<HardParams> {
    if !is_power_of_two(n) {
        return Err(Error::Generator(format!(
            "hard presets need n to be a power of two, got {n}"
        )));
    }
    if d == 0 || !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Generator("bad dimensions or rate".into()));
    }
    let nf = n as f64;
    let df = d as f64;
    let (p, q) = match regime {
        HardRegime::Sparse => {
            let p = (n / 2).max(2);
            let q = floor_dyadic((df / lambda).sqrt()).unwrap_or(1).clamp(1, d);
            (p, q)
        }
        HardRegime::Main => {
            let p = floor_dyadic(nf.powf(2.0 / 3.0) / lambda.powf(1.0 / 3.0))
                .unwrap_or(2)
                .clamp(2, n);
            let q = floor_dyadic(nf.powf(1.0 / 3.0) * df.sqrt() / lambda.powf(1.0 / 6.0))
                .unwrap_or(1)
                .clamp(1, floor_dyadic(df).unwrap_or(1));
            (p, q)
        }
        HardRegime::Saturated => (2, floor_dyadic(df.sqrt()).unwrap_or(1).clamp(1, d)),
    };
    let pf = p as f64;
    let qf = q as f64;
    let upsilon = 1.0f64
        .min((pf * lambda).sqrt())
        .min((pf * df).sqrt() / qf)
        .min(lambda.sqrt() * pf.powf(1.5) / (8.0 * nf));
    Ok(HardParams { p, q, upsilon })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_families_validate_and_are_deterministic() {
        for family in [
            Family::UniformSorted,
            Family::Block { blocks: 3 },
            Family::Smooth,
        ] {
            let a = gen_isotonic(12, 5, family, 1.0, 99).unwrap();
            let b = gen_isotonic(12, 5, family, 1.0, 99).unwrap();
            assert_eq!(a.m, b.m);
            assert_eq!(a.pi_star.as_slice(), b.pi_star.as_slice());
            a.validate().unwrap();
        }
    }

    #[test]
    fn one_block_is_constant_per_column() {
        let inst = gen_isotonic(8, 4, Family::Block { blocks: 1 }, 1.0, 7).unwrap();
        for k in 0..4 {
            let col = inst.m.column(k);
            assert!(col.iter().all(|&v| (v - col[0]).abs() < 1e-15));
        }
    }

    #[test]
    fn random_relabeling_preserves_the_sorted_matrix() {
        let (inst, _) = gen_lower_bound(16, 8, 1.0, 4, 4, 0.05, 3).unwrap();
        let shuffled = relabel_random(&inst, 7).unwrap();
        assert_eq!(inst.sorted(), shuffled.sorted());
        assert_ne!(shuffled.pi_star.as_slice(), inst.pi_star.as_slice());
        shuffled.validate().unwrap();
    }

    /// Two-sample Kolmogorov-Smirnov distance between generated column
    /// entries at a fixed sorted position and fresh sorted-uniform draws.
    #[test]
    fn sorted_uniform_marginals_match_order_statistics() {
        let n = 16;
        let reps = 400;
        let position = 4;
        let mut generated = Vec::with_capacity(reps);
        for r in 0..reps {
            let inst = gen_isotonic(n, 1, Family::UniformSorted, 1.0, 1_000 + r as u64).unwrap();
            generated.push(inst.sorted()[(position, 0)]);
        }
        let mut simulated = Vec::with_capacity(reps);
        let mut rng = rng_from(0xDEED, &[42]);
        for _ in 0..reps {
            let mut col: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            simulated.push(col[position]);
        }
        generated.sort_by(|a, b| a.partial_cmp(b).unwrap());
        simulated.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Two-sample KS distance.
        let mut ks: f64 = 0.0;
        let (mut a, mut b) = (0usize, 0usize);
        while a < reps && b < reps {
            if generated[a] <= simulated[b] {
                a += 1;
            } else {
                b += 1;
            }
            ks = ks.max((a as f64 / reps as f64 - b as f64 / reps as f64).abs());
        }
        // 1.36 * sqrt(2/m) is the 5% critical value; allow double for a
        // deterministic seed-pinned test.
        assert!(ks < 2.72 * (2.0 / reps as f64).sqrt(), "ks = {ks}");
    }

    #[test]
    fn separated_staircase_has_guaranteed_gaps() {
        let inst = gen_separated(20, 6, 1.0, 11).unwrap();
        let sorted = inst.sorted();
        let bound = 0.5 / 22.0;
        for k in 0..6 {
            for s in 1..20 {
                assert!(sorted[(s, k)] - sorted[(s - 1, k)] >= bound - 1e-12);
            }
        }
    }

    #[test]
    fn toy_three_block_matches_the_fixed_pattern() {
        let alpha = 0.5;
        let h = 0.25;
        let inst = gen_toy_three_block(alpha, h, 1.0).unwrap();
        assert_eq!(inst.m.dim(), (TOY_ROWS, TOY_COLS));
        let half = h / 2.0;
        for v in inst.m.iter() {
            let in_levels = [(alpha - half), alpha, (alpha + half)]
                .iter()
                .any(|l| (v - l).abs() < 1e-15);
            assert!(in_levels);
        }
        // Constant columns stay at the base level everywhere.
        for k in [0usize, 1, 4, 7] {
            assert!(inst.m.column(k).iter().all(|&v| (v - alpha).abs() < 1e-15));
        }
        // Signal columns: low block depressed, high block elevated.
        for &k in &TOY_SIGNAL_COLUMNS {
            for s in 0..100 {
                assert!((inst.m[(s, k)] - (alpha - half)).abs() < 1e-15);
            }
            for s in 104..TOY_ROWS {
                assert!((inst.m[(s, k)] - (alpha + half)).abs() < 1e-15);
            }
        }
        // Center rows deviate exactly on the pattern columns.
        for &k in &TOY_CENTER_PATTERN_COLUMNS {
            assert!((inst.m[(100, k)] - (alpha - half)).abs() < 1e-15);
            assert!((inst.m[(103, k)] - (alpha + half)).abs() < 1e-15);
        }
        for &k in &TOY_SIGNAL_COLUMNS {
            if TOY_CENTER_PATTERN_COLUMNS.contains(&k) {
                continue;
            }
            for &s in &TOY_CENTER_ROWS {
                assert!((inst.m[(s, k)] - alpha).abs() < 1e-15);
            }
        }
        inst.validate().unwrap();
    }

    #[test]
    fn toy_three_block_rejects_bad_levels() {
        assert!(gen_toy_three_block(0.1, 0.25, 1.0).is_err());
        assert!(gen_toy_three_block(0.9, 0.25, 1.0).is_err());
        assert!(gen_toy_three_block(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn floor_dyadic_values() {
        assert_eq!(floor_dyadic(1.0), Some(1));
        assert_eq!(floor_dyadic(2.0), Some(2));
        assert_eq!(floor_dyadic(17.9), Some(16));
        assert_eq!(floor_dyadic(0.7), None);
    }

    #[test]
    fn zero_elevation_gives_groupwise_constant_rows() {
        let (inst, prior) = gen_lower_bound(16, 8, 1.0, 4, 2, 0.0, 5).unwrap();
        for strip in 0..4 {
            let base = inst.m.row(strip * 4).to_owned();
            for r in 1..4 {
                assert_eq!(inst.m.row(strip * 4 + r), base);
            }
        }
        assert_eq!(prior.w.len(), 16);
        assert!((prior.w[0] - 0.0).abs() < 1e-15);
        assert!((prior.w[4] - 4.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn box_bound_violations_are_rejected_by_name() {
        let err = gen_lower_bound(16, 8, 1.0, 4, 2, 10.0, 5).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("box bound"), "got: {msg}");
        assert!(gen_lower_bound(16, 8, 1.0, 3, 2, 0.0, 5).is_err()); // non-dyadic p
        assert!(gen_lower_bound(20, 8, 1.0, 8, 2, 0.0, 5).is_err()); // p does not divide n
        assert!(gen_lower_bound(16, 8, 1.0, 4, 16, 0.0, 5).is_err()); // q > d
    }

    #[test]
    fn elevated_rows_dominate_on_their_columns() {
        let params = hard_preset(HardRegime::Main, 32, 32, 1.0).unwrap();
        let (inst, prior) =
            gen_lower_bound(32, 32, 1.0, params.p, params.q, params.upsilon, 9).unwrap();
        inst.validate().unwrap();
        let elevation = params.upsilon / (params.p as f64).sqrt();
        assert!(elevation > 0.0);
        for (strip, (g, qs)) in prior.groups.iter().zip(&prior.question_sets).enumerate() {
            for x in 0..params.p {
                let row = strip * params.p + x;
                let elevated = g.contains(&x);
                for k in 0..32 {
                    let expect = prior.w[row]
                        + if elevated && qs.contains(&k) {
                            elevation
                        } else {
                            0.0
                        };
                    assert!((inst.m[(row, k)] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn packing_sets_are_separated() {
        let mut rng = rng_from(77, &[1]);
        for p in [2usize, 4, 8, 16, 32] {
            let coll = packing_collection(p, 64, &mut rng);
            assert!(!coll.is_empty());
            for a in 0..coll.len() {
                assert_eq!(coll[a].len(), p / 2);
                for b in a + 1..coll.len() {
                    let inter = coll[a].iter().filter(|x| coll[b].contains(x)).count();
                    let sym_diff = 2 * (p / 2 - inter);
                    assert!(sym_diff >= p.div_ceil(4), "p={p}: {sym_diff}");
                }
            }
        }
    }

    #[test]
    fn main_regime_preset_matches_rate_formulas() {
        let params = hard_preset(HardRegime::Main, 32, 32, 1.0).unwrap();
        assert_eq!(params.p, 8); // floor_dya(32^{2/3}) = floor_dya(10.08)
        assert_eq!(params.q, 16); // floor_dya(32^{1/3} * sqrt(32)) = floor_dya(17.96)
        // Elevation capped by the box constraint: sqrt(1) * 8^{1.5} / (8*32).
        let expected = 8.0f64.powf(1.5) / 256.0;
        assert!((params.upsilon - expected).abs() < 1e-12);
        // And the generated instance respects the box with equality headroom.
        let (inst, _) =
            gen_lower_bound(32, 32, 1.0, params.p, params.q, params.upsilon, 3).unwrap();
        assert!(inst.m.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn sparse_and_saturated_presets_stay_in_range() {
        let s = hard_preset(HardRegime::Sparse, 64, 32, 1.0 / 128.0).unwrap();
        assert_eq!(s.p, 32);
        assert!(s.q >= 1 && s.q <= 32);
        let (inst, _) = gen_lower_bound(64, 32, 1.0 / 128.0, s.p, s.q, s.upsilon, 4).unwrap();
        inst.validate().unwrap();
        let t = hard_preset(HardRegime::Saturated, 16, 16, 4096.0).unwrap();
        assert_eq!(t.p, 2);
        assert_eq!(t.q, 4);
        let (inst2, _) = gen_lower_bound(16, 16, 4096.0, t.p, t.q, t.upsilon, 4).unwrap();
        inst2.validate().unwrap();
    }
}
