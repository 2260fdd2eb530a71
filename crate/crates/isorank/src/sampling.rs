//! Observation model: Poissonized partial observations of a row-permuted
//! isotonic matrix, and their aggregation into independent per-batch
//! averaged matrices.
//!
//! The ground truth is a matrix `M` in `[0,1]^{n x d}` whose columns become
//! nondecreasing once the rows are sorted by the oracle permutation. An
//! observation stream holds `N ~ Poisson(lambda * n * d)` records, each at a
//! uniformly random cell with value `M[cell] + noise`. A uniform batch label
//! in `{0, .., 5T-1}` splits the stream into `5T` mutually independent
//! batches; within a batch each cell keeps the average of its observations
//! (zero when unobserved).

use crate::error::{Error, Result};
use crate::perm::Permutation;
use crate::rng::rng_from;
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

/// Noise attached to each observation. Both are centered with sub-Gaussian
/// norm at most 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    /// `y = M[cell] + N(0,1)`.
    Gaussian,
    /// `y ~ Bernoulli(M[cell])`, so values lie in `{0,1}`.
    Bernoulli,
}

/// Ground-truth instance: matrix, oracle permutation and sampling effort.
#[derive(Clone, Debug)]
pub struct SignalInstance {
    /// Entries indexed by expert (row) and question (column).
    pub m: Array2<f64>,
    /// `pi_star.position(i)` is the position of expert `i` in the sorted
    /// order; position 0 is the lowest row.
    pub pi_star: Permutation,
    /// Expected number of observations per entry.
    pub lambda: f64,
}

impl SignalInstance {
    /// Builds and validates an instance.
    pub fn new(m: Array2<f64>, pi_star: Permutation, lambda: f64) -> Result<Self> {
        let inst = SignalInstance { m, pi_star, lambda };
        inst.validate()?;
        Ok(inst)
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn d(&self) -> usize {
        self.m.ncols()
    }

    /// The sorted matrix: row `p` is the row of the expert at position `p`.
    pub fn sorted(&self) -> Array2<f64> {
        let inv = self.pi_star.inverse();
        let mut out = Array2::zeros((self.n(), self.d()));
        for (p, &expert) in inv.iter().enumerate() {
            out.row_mut(p).assign(&self.m.row(expert));
        }
        out
    }

    /// Checks entries in `[0,1]`, matching sizes, positive finite `lambda`,
    /// and nondecreasing columns under the sorted order.
    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.m.dim();
        if n == 0 || d == 0 {
            return Err(Error::InvalidInstance("empty matrix".into()));
        }
        if self.pi_star.len() != n {
            return Err(Error::InvalidInstance(format!(
                "permutation length {} does not match n={n}",
                self.pi_star.len()
            )));
        }
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(Error::InvalidInstance(format!(
                "lambda must be positive and finite, got {}",
                self.lambda
            )));
        }
        // Allow a hair of floating slack on the box and monotonicity checks:
        // generators build entries from rounded arithmetic.
        let eps = 1e-12;
        if self.m.iter().any(|&x| !(-eps..=1.0 + eps).contains(&x)) {
            return Err(Error::InvalidInstance("entries outside [0,1]".into()));
        }
        let inv = self.pi_star.inverse();
        for k in 0..d {
            for p in 1..n {
                let lo = self.m[(inv[p - 1], k)];
                let hi = self.m[(inv[p], k)];
                if hi < lo - eps {
                    return Err(Error::InvalidInstance(format!(
                        "column {k} not nondecreasing at sorted position {p}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One observation: a cell and its noisy value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObsRecord {
    pub i: u32,
    pub k: u32,
    pub y: f64,
}

/// A Poissonized stream of observations together with the effort that
/// produced it (needed downstream to define `lambda0`).
#[derive(Clone, Debug)]
pub struct ObservationStream {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub records: Vec<ObsRecord>,
}

impl ObservationStream {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Per-cell observation counts over the whole stream.
    pub fn cell_counts(&self) -> Array2<u64> {
        let mut counts = Array2::zeros((self.n, self.d));
        for rec in &self.records {
            counts[(rec.i as usize, rec.k as usize)] += 1;
        }
        counts
    }

    /// Splits into `parts` independent streams by a uniform label per record.
    /// Each child is again Poissonized with effort `lambda / parts`.
    pub fn split(&self, parts: usize, seed: u64) -> Vec<ObservationStream> {
        assert!(parts >= 1, "parts must be at least 1");
        let mut rng = rng_from(seed, &[0x5B117, parts as u64]);
        let mut out: Vec<ObservationStream> = (0..parts)
            .map(|_| ObservationStream {
                n: self.n,
                d: self.d,
                lambda: self.lambda / parts as f64,
                records: Vec::new(),
            })
            .collect();
        for rec in &self.records {
            let s = rng.random_range(0..parts);
            out[s].records.push(*rec);
        }
        out
    }

    /// Swaps the roles of rows and columns (used to rank questions).
    pub fn transposed(&self) -> ObservationStream {
        ObservationStream {
            n: self.d,
            d: self.n,
            lambda: self.lambda,
            records: self
                .records
                .iter()
                .map(|rec| ObsRecord {
                    i: rec.k,
                    k: rec.i,
                    y: rec.y,
                })
                .collect(),
        }
    }
}

/// Draws `N ~ Poisson(lambda * n * d)` observations at uniform cells with the
/// requested noise. Deterministic for a fixed seed.
pub fn poissonize(inst: &SignalInstance, noise: NoiseModel, seed: u64) -> Result<ObservationStream> {
    inst.validate()?;
    let (n, d) = inst.m.dim();
    let mean = inst.lambda * (n * d) as f64;
    let mut rng = rng_from(seed, &[0x0B5, n as u64, d as u64]);
    let count = Poisson::new(mean)
        .map_err(|e| Error::Generator(format!("invalid Poisson rate {mean}: {e}")))?
        .sample(&mut rng) as u64;
    let mut records = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let i = rng.random_range(0..n);
        let k = rng.random_range(0..d);
        let m = inst.m[(i, k)];
        let y = match noise {
            NoiseModel::Gaussian => {
                let eps: f64 = rand_distr::StandardNormal.sample(&mut rng);
                m + eps
            }
            NoiseModel::Bernoulli => {
                if rng.random::<f64>() < m {
                    1.0
                } else {
                    0.0
                }
            }
        };
        records.push(ObsRecord {
            i: i as u32,
            k: k as u32,
            y,
        });
    }
    Ok(ObservationStream {
        n,
        d,
        lambda: inst.lambda,
        records,
    })
}

/// `(lambda0, lambda1)` for a run with `t_steps` steps:
/// `lambda0 = lambda / (5 t_steps)` and `lambda1 = 1 - exp(-lambda0)`, the
/// probability that a given cell is observed at least once within one batch.
pub fn lambda_effective(lambda: f64, t_steps: usize) -> (f64, f64) {
    assert!(lambda > 0.0 && t_steps >= 1);
    let lambda0 = lambda / (5 * t_steps) as f64;
    let lambda1 = -(-lambda0).exp_m1();
    (lambda0, lambda1)
}

/// One aggregated batch: per-cell averages, observation mask, and counts.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `y[(i,k)]` is the mean of the batch's observations at `(i,k)`, or 0
    /// when the cell is unobserved. Its unconditional mean is `lambda1 * M`.
    pub y: Array2<f64>,
    /// `b[(i,k)] = true` iff `r[(i,k)] >= 1`.
    pub b: Array2<bool>,
    pub r: Array2<u32>,
}

impl Batch {
    fn zero(n: usize, d: usize) -> Batch {
        Batch {
            y: Array2::zeros((n, d)),
            b: Array2::from_elem((n, d), false),
            r: Array2::zeros((n, d)),
        }
    }
}

/// The `5T` independent batches consumed by the ranking procedure.
#[derive(Clone, Debug)]
pub struct BatchedObservations {
    pub n: usize,
    pub d: usize,
    pub t_steps: usize,
    pub lambda0: f64,
    pub lambda1: f64,
    pub batches: Vec<Batch>,
}

impl BatchedObservations {
    /// The five batches used at step `t`.
    pub fn window(&self, t: usize) -> &[Batch] {
        &self.batches[5 * t..5 * t + 5]
    }

    /// Idealized noiseless batches: every batch matrix equals its exact
    /// expectation `lambda1 * M`, with every cell marked observed once.
    /// Useful for consistency tests where sampling noise is out of scope.
    pub fn full_noiseless(inst: &SignalInstance, t_steps: usize, lambda0: f64) -> Self {
        assert!(t_steps >= 1 && lambda0 > 0.0);
        let (n, d) = inst.m.dim();
        let lambda1 = -(-lambda0).exp_m1();
        let expected = inst.m.mapv(|x| lambda1 * x);
        let batches = (0..5 * t_steps)
            .map(|_| Batch {
                y: expected.clone(),
                b: Array2::from_elem((n, d), true),
                r: Array2::ones((n, d)),
            })
            .collect();
        BatchedObservations {
            n,
            d,
            t_steps,
            lambda0,
            lambda1,
            batches,
        }
    }
}

fn aggregate_with_labels(
    stream: &ObservationStream,
    t_steps: usize,
    labels: &[usize],
) -> BatchedObservations {
    let (n, d) = (stream.n, stream.d);
    let (lambda0, lambda1) = lambda_effective(stream.lambda, t_steps);
    let mut batches: Vec<Batch> = (0..5 * t_steps).map(|_| Batch::zero(n, d)).collect();
    for (rec, &s) in stream.records.iter().zip(labels) {
        let cell = (rec.i as usize, rec.k as usize);
        let batch = &mut batches[s];
        batch.y[cell] += rec.y;
        batch.r[cell] += 1;
        batch.b[cell] = true;
    }
    for batch in &mut batches {
        for (y, &r) in batch.y.iter_mut().zip(batch.r.iter()) {
            if r > 0 {
                *y /= r as f64;
            }
        }
    }
    BatchedObservations {
        n,
        d,
        t_steps,
        lambda0,
        lambda1,
        batches,
    }
}

/// Assigns each record a uniform batch label in `{0, .., 5T-1}` and
/// aggregates per-cell averages, masks, and counts.
pub fn subsample_batches(
    stream: &ObservationStream,
    t_steps: usize,
    seed: u64,
) -> Result<BatchedObservations> {
    if t_steps < 1 {
        return Err(Error::InvalidConfig("t_steps must be at least 1".into()));
    }
    let mut rng = rng_from(seed, &[0xBA7C4, t_steps as u64]);
    let labels: Vec<usize> = (0..stream.records.len())
        .map(|_| rng.random_range(0..5 * t_steps))
        .collect();
    Ok(aggregate_with_labels(stream, t_steps, &labels))
}
