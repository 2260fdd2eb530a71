//! Matrix reconstruction after ranking: isotonic least squares on the
//! reordered empirical matrix, and bi-isotonic least squares when both row
//! and column orders are estimated.

use crate::error::{Error, Result};
use crate::isr::{practical_preset, run_isr, IsrConfig};
use crate::perm::Permutation;
use crate::rng::splitmix64;
use crate::sampling::{subsample_batches, ObservationStream};
use ndarray::Array2;

/// An isotonic (or bi-isotonic) least-squares fit.
#[derive(Clone, Debug)]
pub struct IsotonicFit {
    /// Fitted matrix in sorted order: columns nondecreasing, entries in
    /// `[0,1]` (bi-isotonic fits are nondecreasing along rows too).
    pub m_hat: Array2<f64>,
    /// Squared Frobenius residual against the input.
    pub objective: f64,
    /// False only when an iterative projection hit its iteration cap before
    /// reaching its tolerance; the fit is then the best iterate.
    pub converged: bool,
}

/// Weighted isotonic regression: the nondecreasing vector minimizing
/// `sum_j w_j (out_j - y_j)^2`, by pooling adjacent violators. Linear time
/// via a block-merging stack.
pub fn pava(y: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if y.is_empty() {
        return Err(Error::InvalidConfig("empty regression input".into()));
    }
    if y.len() != weights.len() {
        return Err(Error::InvalidConfig(format!(
            "{} values but {} weights",
            y.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
        return Err(Error::InvalidConfig("weights must be positive".into()));
    }
    // Stack of merged blocks: (weight sum, weighted value sum, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(y.len());
    for (&v, &w) in y.iter().zip(weights) {
        let mut block = (w, w * v, 1usize);
        while let Some(&(pw, ps, pl)) = blocks.last() {
            if ps / pw <= block.1 / block.0 {
                break;
            }
            block = (pw + block.0, ps + block.1, pl + block.2);
            blocks.pop();
        }
        blocks.push(block);
    }
    let mut out = Vec::with_capacity(y.len());
    for &(w, s, l) in &blocks {
        let mean = s / w;
        out.extend(std::iter::repeat_n(mean, l));
    }
    Ok(out)
}

fn frob2(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Projects each column onto the nondecreasing vectors, in place.
fn project_columns_monotone(m: &mut Array2<f64>) {
    let ones = vec![1.0; m.nrows()];
    for mut col in m.columns_mut() {
        let fitted = pava(col.to_vec().as_slice(), &ones).expect("non-empty column");
        for (cell, v) in col.iter_mut().zip(fitted) {
            *cell = v;
        }
    }
}

/// Projects each row onto the nondecreasing vectors, in place.
fn project_rows_monotone(m: &mut Array2<f64>) {
    let ones = vec![1.0; m.ncols()];
    for mut row in m.rows_mut() {
        let fitted = pava(row.to_vec().as_slice(), &ones).expect("non-empty row");
        for (cell, v) in row.iter_mut().zip(fitted) {
            *cell = v;
        }
    }
}

/// Exact projection onto the column-nondecreasing matrices with entries in
/// `[0,1]`: column-wise isotonic regression followed by clipping. Clipping
/// commutes with the monotone projection (both are given by min-max
/// formulas over index intervals, and clipping the block means preserves
/// the pooled structure), so the composition is the exact projection onto
/// the intersection.
pub fn project_isotonic(y: &Array2<f64>) -> IsotonicFit {
    let mut m = y.clone();
    project_columns_monotone(&mut m);
    m.mapv_inplace(|v| v.clamp(0.0, 1.0));
    let objective = frob2(&m, y);
    IsotonicFit {
        m_hat: m,
        objective,
        converged: true,
    }
}

/// Iteration cap for the alternating bi-isotonic projection.
pub const DYKSTRA_MAX_OUTER: usize = 10_000;
/// Default successive-iterate tolerance (Frobenius) for the bi-isotonic
/// projection.
pub const DYKSTRA_DEFAULT_TOL: f64 = 1e-9;

/// Projection onto the matrices that are nondecreasing along both rows and
/// columns with entries in `[0,1]`, by alternating projections with
/// correction terms between the row-monotone cone and the
/// column-monotone-in-box set. Both sets are closed and convex, so the
/// scheme converges to the exact projection onto their intersection; it
/// stops once successive iterates differ by less than `tol` in Frobenius
/// norm. Hitting the iteration cap returns the best iterate with
/// `converged` unset.
pub fn project_biisotonic(y: &Array2<f64>, tol: f64) -> Result<IsotonicFit> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance {tol} invalid")));
    }
    let mut x = y.clone();
    let mut p = Array2::<f64>::zeros(y.dim());
    let mut q = Array2::<f64>::zeros(y.dim());
    let mut converged = false;
    for _ in 0..DYKSTRA_MAX_OUTER {
        let mut a = &x + &p;
        project_rows_monotone(&mut a);
        p = &x + &p - &a;
        let mut b = &a + &q;
        project_columns_monotone(&mut b);
        b.mapv_inplace(|v| v.clamp(0.0, 1.0));
        q = &a + &q - &b;
        let change = frob2(&b, &x).sqrt();
        x = b;
        if change < tol {
            converged = true;
            break;
        }
    }
    let objective = frob2(&x, y);
    Ok(IsotonicFit {
        m_hat: x,
        objective,
        converged,
    })
}

/// How raw observation sums become empirical matrix entries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateScale {
    /// Divide each cell's value sum by the rate attached to the stream
    /// (after splitting this is the split-adjusted rate, so entries are
    /// unbiased for the signal). Default.
    #[default]
    Displayed,
    /// Divide by the parent stream's rate (attached rate times the split
    /// count): the literal normalization of the source procedure, biased
    /// low by the split count.
    SplitAdjusted,
    /// Average the observed values per cell (zero when unobserved).
    CountNormalized,
}

/// Aggregates a stream into an empirical matrix under the given scaling.
/// `split_parts` is how many ways the parent stream was split (1 when the
/// stream was not split); only the split-adjusted scale uses it.
pub fn empirical_matrix(
    stream: &ObservationStream,
    scale: RateScale,
    split_parts: usize,
) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((stream.n, stream.d));
    let mut counts = Array2::<f64>::zeros((stream.n, stream.d));
    for rec in &stream.records {
        sums[(rec.i as usize, rec.k as usize)] += rec.y;
        counts[(rec.i as usize, rec.k as usize)] += 1.0;
    }
    match scale {
        RateScale::Displayed => sums / stream.lambda,
        RateScale::SplitAdjusted => sums / (stream.lambda * split_parts.max(1) as f64),
        RateScale::CountNormalized => {
            ndarray::Zip::from(&sums).and(&counts).map_collect(|&s, &c| {
                if c > 0.0 {
                    s / c
                } else {
                    0.0
                }
            })
        }
    }
}

/// Configuration shared by the reconstruction estimators.
#[derive(Clone, Debug)]
pub struct ReconstructConfig {
    /// Ranking configuration for the rows.
    pub isr: IsrConfig,
    /// Ranking configuration for the columns (bi-isotonic route only); when
    /// absent, a practical preset matched to the transposed dimensions is
    /// used.
    pub isr_cols: Option<IsrConfig>,
    pub rate_scale: RateScale,
    /// Seed for the sample split and the batch subsampling.
    pub split_seed: u64,
    /// Successive-iterate tolerance of the bi-isotonic projection.
    pub dykstra_tol: f64,
}

impl ReconstructConfig {
    pub fn new(isr: IsrConfig, split_seed: u64) -> Self {
        ReconstructConfig {
            isr,
            isr_cols: None,
            rate_scale: RateScale::Displayed,
            split_seed,
            dykstra_tol: DYKSTRA_DEFAULT_TOL,
        }
    }
}

/// Isotonic reconstruction output.
#[derive(Clone, Debug)]
pub struct IsoReconstruction {
    /// The fit in sorted order (columns nondecreasing).
    pub fit: IsotonicFit,
    pub pi_hat: Permutation,
    /// The fit composed back onto the original row labels: row `i` is the
    /// fitted row at the estimated position of expert `i`.
    pub m_hat: Array2<f64>,
}

/// Bi-isotonic reconstruction output.
#[derive(Clone, Debug)]
pub struct BisoReconstruction {
    /// The fit in doubly sorted order.
    pub fit: IsotonicFit,
    pub pi_hat: Permutation,
    pub eta_hat: Permutation,
    /// The fit composed back onto the original row and column labels.
    pub m_hat: Array2<f64>,
}

fn reorder_rows(y: &Array2<f64>, pi: &Permutation) -> Array2<f64> {
    let inv = pi.inverse();
    let mut out = Array2::zeros(y.dim());
    for (p, &expert) in inv.iter().enumerate() {
        out.row_mut(p).assign(&y.row(expert));
    }
    out
}

fn compose_rows(fit: &Array2<f64>, pi: &Permutation) -> Array2<f64> {
    let mut out = Array2::zeros(fit.dim());
    for i in 0..fit.nrows() {
        out.row_mut(i).assign(&fit.row(pi.position(i)));
    }
    out
}

/// Two-stage estimator of a row-permuted isotonic matrix: estimate the row
/// order on one half of the sample, then project the other half's
/// empirical matrix — rows reordered by the estimated order — onto the
/// isotonic matrices with entries in `[0,1]`.
///
/// Sampling rates in `[1/d, 8n^2]` are the supported regime; values outside
/// it are accepted but the command-line front end warns about them.
pub fn reconstruct_iso(
    stream: &ObservationStream,
    config: &ReconstructConfig,
) -> Result<IsoReconstruction> {
    let splits = stream.split(2, config.split_seed);
    let batches = subsample_batches(
        &splits[0],
        config.isr.t_steps,
        splitmix64(config.split_seed ^ 0xA11CE),
    )?;
    let outcome = run_isr(&batches, &config.isr, None)?;
    let y2 = empirical_matrix(&splits[1], config.rate_scale, 2);
    let sorted = reorder_rows(&y2, &outcome.pi_hat);
    let fit = project_isotonic(&sorted);
    let m_hat = compose_rows(&fit.m_hat, &outcome.pi_hat);
    Ok(IsoReconstruction {
        fit,
        pi_hat: outcome.pi_hat,
        m_hat,
    })
}

/// Three-stage estimator of a doubly permuted bi-isotonic matrix: estimate
/// the row order on the first third of the sample, the column order on the
/// transposed second third, then project the last third's empirical matrix
/// — doubly reordered — onto the bi-isotonic matrices with entries in
/// `[0,1]`.
pub fn reconstruct_biso(
    stream: &ObservationStream,
    config: &ReconstructConfig,
) -> Result<BisoReconstruction> {
    let splits = stream.split(3, config.split_seed);
    let row_batches = subsample_batches(
        &splits[0],
        config.isr.t_steps,
        splitmix64(config.split_seed ^ 0xB150),
    )?;
    let row_outcome = run_isr(&row_batches, &config.isr, None)?;

    let cols_cfg = match &config.isr_cols {
        Some(cfg) => cfg.clone(),
        None => {
            let mut preset = practical_preset(stream.d, stream.n, None)?;
            preset.t_steps = config.isr.t_steps;
            preset
        }
    };
    let transposed = splits[1].transposed();
    let col_batches = subsample_batches(
        &transposed,
        cols_cfg.t_steps,
        splitmix64(config.split_seed ^ 0xC015),
    )?;
    let col_outcome = run_isr(&col_batches, &cols_cfg, None)?;

    let y3 = empirical_matrix(&splits[2], config.rate_scale, 3);
    let row_sorted = reorder_rows(&y3, &row_outcome.pi_hat);
    let doubly_sorted = reorder_rows(&row_sorted.t().to_owned(), &col_outcome.pi_hat)
        .t()
        .to_owned();
    let fit = project_biisotonic(&doubly_sorted, config.dykstra_tol)?;
    let un_cols = compose_rows(&fit.m_hat.t().to_owned(), &col_outcome.pi_hat)
        .t()
        .to_owned();
    let m_hat = compose_rows(&un_cols, &row_outcome.pi_hat);
    Ok(BisoReconstruction {
        fit,
        pi_hat: row_outcome.pi_hat,
        eta_hat: col_outcome.pi_hat,
        m_hat,
    })
}
