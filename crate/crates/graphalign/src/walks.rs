//! Empirical check that co-occurrence counts from length-1 random walks
//! over a similarity matrix converge to its row-normalized transitions.
//!
//! Sampling context by walking a similarity graph and factorizing the
//! resulting co-occurrence matrix is, in expectation, the same thing as
//! factorizing the similarity matrix itself: with `m` length-1 walks per
//! node, `D/m` converges to the transition matrix `T = row_normalize(S)` at
//! the usual `1/sqrt(m)` Monte-Carlo rate. This module measures that
//! deviation directly.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::harness::derive_seed;

/// Walk sampling configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkConfig {
    /// Walks per node, `m >= 1`.
    pub walks_per_node: usize,
    pub seed: u64,
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walks_per_node == 0 {
            return Err(Error::InvalidArgument(
                "need at least one walk per node".into(),
            ));
        }
        Ok(())
    }
}

/// Divides each row by its sum; rows of the result sum to 1.
pub fn row_normalize(s: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if s.nrows() != s.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "similarity matrix must be square, got {} x {}",
            s.nrows(),
            s.ncols()
        )));
    }
    if s.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "similarity entries must be finite and nonnegative".into(),
        ));
    }
    let mut t = s.to_owned();
    for (i, mut row) in t.rows_mut().into_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Numerical(format!("row {i} sums to zero")));
        }
        row.mapv_inplace(|x| x / sum);
    }
    Ok(t)
}

/// Draws `m` i.i.d. single-step walks from every node, where the step
/// distribution is row `u` of the normalized similarity matrix. Entry
/// `(u, v)` of the result counts how often `v` was sampled from `u`; every
/// row sums to `m` exactly.
///
/// Sampling inverts a per-row cumulative table, and each row runs on its
/// own sub-seed, so the counts are reproducible for a fixed seed no matter
/// how rows are scheduled.
pub fn sample_cooccurrence(s: ArrayView2<'_, f64>, config: &WalkConfig) -> Result<Array2<u64>> {
    config.validate()?;
    let transitions = row_normalize(s)?;
    let n = transitions.nrows();
    let m = config.walks_per_node;

    let mut counts = Array2::<u64>::zeros((n, n));
    let mut cumulative = vec![0.0; n];
    for u in 0..n {
        let row = transitions.row(u);
        let mut acc = 0.0;
        for (slot, &p) in cumulative.iter_mut().zip(row.iter()) {
            acc += p;
            *slot = acc;
        }
        // Guard against rounding: the final bucket absorbs everything.
        cumulative[n - 1] = f64::INFINITY;

        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, u as u64));
        let mut out = counts.row_mut(u);
        for _ in 0..m {
            let x: f64 = rng.random();
            let v = cumulative.partition_point(|&c| c <= x);
            out[v] += 1;
        }
    }
    Ok(counts)
}

/// Maximum absolute deviation `max_{u,v} |D_uv / m - T_uv|` between the
/// empirical transition frequencies and the row-normalized similarities.
pub fn convergence_check(
    counts: ArrayView2<'_, u64>,
    s: ArrayView2<'_, f64>,
    walks_per_node: usize,
) -> Result<f64> {
    if counts.dim() != s.dim() {
        return Err(Error::DimensionMismatch(format!(
            "count matrix is {:?}, similarity matrix {:?}",
            counts.dim(),
            s.dim()
        )));
    }
    if walks_per_node == 0 {
        return Err(Error::InvalidArgument("walks_per_node must be >= 1".into()));
    }
    let transitions = row_normalize(s)?;
    let m = walks_per_node as f64;
    let mut max_dev = 0.0f64;
    for (c, t) in counts.iter().zip(transitions.iter()) {
        max_dev = max_dev.max((*c as f64 / m - t).abs());
    }
    Ok(max_dev)
}
