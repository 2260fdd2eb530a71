//! Experiment harness: ranking/reconstruction losses, the row-sum
//! baseline, parallel rate sweeps over instance grids, and a Monte Carlo
//! concentration check for sparse Gaussian Gram matrices.

use crate::eig::{operator_norm_sym, DenseSym, EigOptions};
use crate::error::Result;
use crate::isr::{practical_preset, run_isr};
use crate::perm::Permutation;
use crate::reconstruct::{empirical_matrix, project_isotonic, RateScale};
use crate::rng::{rng_from, splitmix64};
use crate::sampling::{poissonize, subsample_batches, NoiseModel, ObservationStream};
use crate::synth::{
    gen_isotonic, gen_lower_bound, gen_separated, hard_preset, relabel_random, Family, HardRegime,
};
use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::time::{Duration, Instant};

/// Squared Frobenius distance between the matrix reordered by the
/// estimated positions and by the oracle positions:
/// `sum_{s,k} (M[est_inv(s),k] - M[oracle_inv(s),k])^2`. Zero whenever the
/// two orders differ only among identical rows.
pub fn permutation_loss(m: &Array2<f64>, pi_star: &Permutation, pi_hat: &Permutation) -> f64 {
    assert_eq!(pi_star.len(), m.nrows());
    assert_eq!(pi_hat.len(), m.nrows());
    let inv_star = pi_star.inverse();
    let inv_hat = pi_hat.inverse();
    let mut loss = 0.0;
    for s in 0..m.nrows() {
        if inv_star[s] == inv_hat[s] {
            continue;
        }
        for k in 0..m.ncols() {
            let diff = m[(inv_hat[s], k)] - m[(inv_star[s], k)];
            loss += diff * diff;
        }
    }
    loss
}

/// Ranks experts by their mean observed value (sum over the row's records
/// divided by the row's record count; unobserved rows score zero). Ties
/// break by index.
pub fn baseline_rowsum(stream: &ObservationStream) -> Permutation {
    let mut sums = vec![0.0f64; stream.n];
    let mut counts = vec![0u64; stream.n];
    for rec in &stream.records {
        sums[rec.i as usize] += rec.y;
        counts[rec.i as usize] += 1;
    }
    let scores: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    Permutation::from_scores(&scores)
}

/// Instance families a sweep can draw from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepFamily {
    /// Hard grouped-elevation instances in the main sampling regime,
    /// observed with Gaussian noise.
    LowerBound,
    /// Sorted-uniform random isotonic instances.
    UniformSorted,
    /// Staircase instances with guaranteed row gaps.
    Separated,
}

/// One grid point of a sweep.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SweepPoint {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub family: SweepFamily,
    pub points: Vec<SweepPoint>,
    pub replicates: usize,
    pub seed: u64,
    /// Wall-clock budget per estimator run; exceeded runs record their
    /// partial ranking and are flagged in the warnings.
    pub per_run_deadline: Option<Duration>,
    pub noise: NoiseModel,
}

/// One CSV row of a sweep: one estimator on one replicate of one point.
#[derive(Clone, Debug, Serialize)]
pub struct ReplicateRow {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub estimator: String,
    pub replicate: usize,
    pub loss_perm: f64,
    pub loss_reco: f64,
    pub seconds: f64,
    pub seed: u64,
}

/// Sweep output: per-replicate rows plus free-form warnings (skipped
/// points, deadline hits, trivial sampling regimes).
#[derive(Clone, Debug, Default, Serialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReplicateRow>,
    pub warnings: Vec<String>,
    pub wall_seconds: f64,
}

impl ExperimentReport {
    /// Median of a named estimator's permutation losses at one point.
    pub fn median_loss(&self, estimator: &str, point: &SweepPoint) -> Option<f64> {
        let mut losses: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| {
                r.estimator == estimator
                    && r.n == point.n
                    && r.d == point.d
                    && (r.lambda - point.lambda).abs() < 1e-12
            })
            .map(|r| r.loss_perm)
            .collect();
        if losses.is_empty() {
            return None;
        }
        losses.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(median_of_sorted(&losses))
    }
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let r = sorted.len();
    if r % 2 == 1 {
        sorted[r / 2]
    } else {
        0.5 * (sorted[r / 2 - 1] + sorted[r / 2])
    }
}

/// The fixed CSV header of sweep outputs; the renderer lives in [`crate::io`].
/// All numeric columns except `seconds` are deterministic for a fixed config
/// and seed; `seconds` is measured wall time.
pub const CSV_HEADER: &str = "n,d,lambda,estimator,replicate,loss_perm,loss_reco,seconds,seed";

struct RunOutput {
    rows: Vec<ReplicateRow>,
    warnings: Vec<String>,
}

fn run_one_replicate(
    config: &SweepConfig,
    point_index: usize,
    replicate: usize,
) -> Result<RunOutput> {
    let point = config.points[point_index];
    let mut seed = config.seed;
    for salt in [0x53EE9u64, point_index as u64, replicate as u64] {
        seed = splitmix64(seed ^ salt);
    }
    let mut warnings = Vec::new();
    let (instance, noise) = match config.family {
        SweepFamily::LowerBound => {
            let params = hard_preset(HardRegime::Main, point.n, point.d, point.lambda)?;
            let (inst, _) = gen_lower_bound(
                point.n,
                point.d,
                point.lambda,
                params.p,
                params.q,
                params.upsilon,
                seed,
            )?;
            // The generator emits rows in nearly sorted order; hide that
            // behind a random relabeling so index tie-breaking earns nothing.
            let inst = relabel_random(&inst, splitmix64(seed ^ 0x5CA2))?;
            // The hard prior is analyzed under Gaussian observations.
            (inst, NoiseModel::Gaussian)
        }
        SweepFamily::UniformSorted => (
            gen_isotonic(
                point.n,
                point.d,
                Family::UniformSorted,
                point.lambda,
                seed,
            )?,
            config.noise,
        ),
        SweepFamily::Separated => (
            gen_separated(point.n, point.d, point.lambda, seed)?,
            config.noise,
        ),
    };
    let stream = poissonize(&instance, noise, splitmix64(seed ^ 0x0B5E))?;
    let mut isr_cfg = practical_preset(point.n, point.d, None)?;
    isr_cfg.deadline = config.per_run_deadline;
    let batches = subsample_batches(&stream, isr_cfg.t_steps, splitmix64(seed ^ 0xBA7C))?;

    let mut rows = Vec::with_capacity(2);
    let empirical = empirical_matrix(&stream, RateScale::Displayed, 1);
    for estimator in ["isr", "rowsum"] {
        let started = Instant::now();
        let pi_hat = match estimator {
            "isr" => {
                let outcome = run_isr(&batches, &isr_cfg, None)?;
                if outcome.deadline_hit {
                    warnings.push(format!(
                        "n={} d={} lambda={} replicate={replicate}: ranking hit its deadline; partial weights used",
                        point.n, point.d, point.lambda
                    ));
                }
                outcome.pi_hat
            }
            _ => baseline_rowsum(&stream),
        };
        let loss_perm = permutation_loss(&instance.m, &instance.pi_star, &pi_hat);
        // Reconstruction loss reuses the same ranking on the full stream's
        // empirical matrix (one ranking run per estimator and replicate).
        let inv = pi_hat.inverse();
        let mut reordered = Array2::zeros(empirical.dim());
        for (s, &expert) in inv.iter().enumerate() {
            reordered.row_mut(s).assign(&empirical.row(expert));
        }
        let fit = project_isotonic(&reordered);
        let mut loss_reco = 0.0;
        for i in 0..point.n {
            for k in 0..point.d {
                let diff = fit.m_hat[(pi_hat.position(i), k)] - instance.m[(i, k)];
                loss_reco += diff * diff;
            }
        }
        rows.push(ReplicateRow {
            n: point.n,
            d: point.d,
            lambda: point.lambda,
            estimator: estimator.to_string(),
            replicate,
            loss_perm,
            loss_reco,
            seconds: started.elapsed().as_secs_f64(),
            seed,
        });
    }
    Ok(RunOutput { rows, warnings })
}

/// Runs every estimator on every (point, replicate) pair in parallel.
/// Failures skip the pair and land in the warnings; the sweep continues.
pub fn rate_sweep(config: &SweepConfig) -> ExperimentReport {
    let started = Instant::now();
    let mut report = ExperimentReport::default();
    for (idx, point) in config.points.iter().enumerate() {
        if point.lambda < 1.0 / point.d as f64 {
            report.warnings.push(format!(
                "n={} d={} lambda={}: below one expected observation per expert and question block; ranking is information-theoretically trivial here",
                point.n, point.d, point.lambda
            ));
        }
        let _ = idx;
    }
    let jobs: Vec<(usize, usize)> = (0..config.points.len())
        .flat_map(|p| (0..config.replicates).map(move |r| (p, r)))
        .collect();
    let outputs: Vec<(usize, usize, Result<RunOutput>)> = jobs
        .par_iter()
        .map(|&(p, r)| (p, r, run_one_replicate(config, p, r)))
        .collect();
    let mut sorted = outputs;
    sorted.sort_by_key(|&(p, r, _)| (p, r));
    for (p, r, outcome) in sorted {
        match outcome {
            Ok(mut out) => {
                report.rows.append(&mut out.rows);
                report.warnings.append(&mut out.warnings);
            }
            Err(e) => {
                let point = config.points[p];
                report.warnings.push(format!(
                    "n={} d={} lambda={} replicate={r}: skipped ({e})",
                    point.n, point.d, point.lambda
                ));
            }
        }
    }
    report.wall_seconds = started.elapsed().as_secs_f64();
    report
}

/// Summary of the sparse-Gram concentration experiment.
#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationSummary {
    pub p: usize,
    pub q: usize,
    pub sigma2: f64,
    pub replicates: usize,
    pub median: f64,
    pub quantile95: f64,
}

/// Monte Carlo deviation of a sparse Gaussian Gram matrix from its mean:
/// draws `X` with independent entries `B * E` (`B ~ Bernoulli(sigma2)`,
/// `E ~ N(0,1)`), and measures `||X X^T - sigma2 * q * I||_op` (the mean of
/// `X X^T` is exactly `sigma2 * q * I` by independence). Returns the median
/// and 0.95 quantile over replicates.
pub fn concentration_check(
    p: usize,
    q: usize,
    sigma2: f64,
    replicates: usize,
    seed: u64,
) -> ConcentrationSummary {
    assert!(p > 0 && q > 0 && replicates > 0);
    assert!(sigma2 > 0.0 && sigma2 <= 1.0, "sigma2 must be in (0,1]");
    let mut values: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_from(seed, &[0xC09C, rep as u64, p as u64, q as u64]);
            let mut x = vec![0.0f64; p * q];
            for cell in x.iter_mut() {
                if rng.random::<f64>() < sigma2 {
                    let e: f64 = rng.sample(rand_distr::StandardNormal);
                    *cell = e;
                }
            }
            // Deviation S = X X^T - sigma2 q I, dense p x p.
            let mut s = vec![0.0f64; p * p];
            for a in 0..p {
                for b in a..p {
                    let dot: f64 = (0..q).map(|k| x[a * q + k] * x[b * q + k]).sum();
                    let v = if a == b { dot - sigma2 * q as f64 } else { dot };
                    s[a * p + b] = v;
                    s[b * p + a] = v;
                }
            }
            let op = DenseSym { dim: p, a: s };
            operator_norm_sym(&op, &EigOptions::default())
        })
        .collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = median_of_sorted(&values);
    let idx95 = ((0.95 * replicates as f64).ceil() as usize).clamp(1, replicates) - 1;
    ConcentrationSummary {
        p,
        q,
        sigma2,
        replicates,
        median,
        quantile95: values[idx95],
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points for a slope");
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use ndarray::array;

    #[test]
    fn loss_is_zero_for_matching_orders_and_constant_matrices() {
        let m = array![[0.1, 0.4], [0.5, 0.6], [0.9, 0.9]];
        let id = Permutation::identity(3);
        assert_eq!(permutation_loss(&m, &id, &id), 0.0);
        let constant = Array2::from_elem((4, 2), 0.3);
        let mut rng = rng_from(5, &[1]);
        let random = Permutation::random(4, &mut rng);
        assert_eq!(
            permutation_loss(&constant, &Permutation::identity(4), &random),
            0.0
        );
    }

    #[test]
    fn loss_counts_both_displaced_entries() {
        let m = array![[0.0], [1.0]];
        let id = Permutation::identity(2);
        let swap = Permutation::from_positions(vec![1, 0]).unwrap();
        assert_eq!(permutation_loss(&m, &id, &swap), 2.0);
    }

    /// Relabeling the experts consistently leaves the loss unchanged.
    #[test]
    fn loss_is_invariant_under_consistent_relabeling() {
        let mut rng = rng_from(6, &[2]);
        for _ in 0..20 {
            let n = 6;
            let m = Array2::from_shape_fn((n, 3), |_| rng.random::<f64>());
            let pi_star = Permutation::random(n, &mut rng);
            let pi_hat = Permutation::random(n, &mut rng);
            let relabel = Permutation::random(n, &mut rng);
            // Relabeled instance: expert r is old expert relabel_inv(r).
            let inv = relabel.inverse();
            let mut m2 = Array2::zeros((n, 3));
            for r in 0..n {
                m2.row_mut(r).assign(&m.row(inv[r]));
            }
            let star2 = pi_star.compose(&Permutation::from_positions(inv.clone()).unwrap());
            let hat2 = pi_hat.compose(&Permutation::from_positions(inv.clone()).unwrap());
            let a = permutation_loss(&m, &pi_star, &pi_hat);
            let b = permutation_loss(&m2, &star2, &hat2);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn rowsum_orders_noiseless_distinct_rows() {
        use crate::sampling::ObsRecord;
        // Two observations per row with values equal to the row mean.
        let stream = ObservationStream {
            n: 3,
            d: 2,
            lambda: 1.0,
            records: vec![
                ObsRecord { i: 2, k: 0, y: 0.1 },
                ObsRecord { i: 0, k: 0, y: 0.9 },
                ObsRecord { i: 1, k: 1, y: 0.5 },
            ],
        };
        let pi = baseline_rowsum(&stream);
        // Ascending means: expert 2 (0.1), expert 1 (0.5), expert 0 (0.9).
        assert_eq!(pi.as_slice(), &[2, 1, 0]);
    }

    #[test]
    fn sweep_emits_deterministic_rows_and_zero_loss_on_easy_points() {
        let config = SweepConfig {
            family: SweepFamily::Separated,
            points: vec![SweepPoint {
                n: 8,
                d: 4,
                lambda: 10_000.0,
            }],
            replicates: 2,
            seed: 99,
            per_run_deadline: None,
            noise: NoiseModel::Gaussian,
        };
        let a = rate_sweep(&config);
        let b = rate_sweep(&config);
        assert_eq!(a.rows.len(), 4); // 2 estimators x 2 replicates
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.estimator, rb.estimator);
            assert_eq!(ra.replicate, rb.replicate);
            assert_eq!(ra.loss_perm, rb.loss_perm);
            assert_eq!(ra.loss_reco, rb.loss_reco);
            assert_eq!(ra.seed, rb.seed);
        }
        // Heavy sampling on well-separated instances: the baseline is exact.
        for row in a.rows.iter().filter(|r| r.estimator == "rowsum") {
            assert_eq!(row.loss_perm, 0.0);
        }
    }

    #[test]
    fn sweep_flags_trivial_sampling() {
        let config = SweepConfig {
            family: SweepFamily::UniformSorted,
            points: vec![SweepPoint {
                n: 4,
                d: 4,
                lambda: 0.01,
            }],
            replicates: 1,
            seed: 1,
            per_run_deadline: None,
            noise: NoiseModel::Gaussian,
        };
        let report = rate_sweep(&config);
        assert!(report
            .warnings
            .iter()
            .any(|w| w.contains("trivial")));
    }

    #[test]
    fn gram_deviation_mean_is_removed_exactly() {
        // sigma2 = 1, p = 1: the statistic is |sum_k (E_k^2 - 1)|, which by
        // the central limit theorem has median ~ 0.6745 * sqrt(2q).
        let q = 4096;
        let summary = concentration_check(1, q, 1.0, 400, 11);
        let reference = 0.6745 * (2.0 * q as f64).sqrt();
        assert!(
            (summary.median / reference - 1.0).abs() < 0.15,
            "median {} vs reference {reference}",
            summary.median
        );
    }

    #[test]
    fn quadrupling_q_doubles_the_median_in_the_sparse_regime() {
        let a = concentration_check(8, 1024, 0.05, 60, 21);
        let b = concentration_check(8, 4096, 0.05, 60, 21);
        let ratio = b.median / a.median;
        assert!((1.6..=2.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn loglog_slope_recovers_exact_power_laws() {
        let xs: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(0.5)).collect();
        let slope = fit_loglog_slope(&xs, &ys);
        assert!((slope - 0.5).abs() < 1e-12);
    }
}
