//! Structural node identity: discounted, log-binned degree histograms of
//! k-hop neighborhoods.
//!
//! For a node `u`, the identity row is
//!
//! ```text
//! d_u = sum_{k=1..K} delta^(k-1) * hist(R_u^k)
//! ```
//!
//! where `R_u^k` is the set of nodes at shortest-path distance exactly `k`
//! from `u` and `hist` counts members by the logarithmic degree bucket
//! `floor(log2(deg))`. Log binning keeps the vectors short on skewed degree
//! distributions and makes entries robust to small degree perturbations.
//! Rows built with the same bucket count are directly comparable across
//! disjoint graphs, which is what lets one similarity function span two
//! networks.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

/// Parameters of the identity extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityParams {
    /// Maximum hop distance `K >= 1`.
    pub max_hops: usize,
    /// Discount factor for distant neighborhoods, in `(0, 1]`.
    pub discount: f64,
}

impl Default for IdentityParams {
    fn default() -> Self {
        IdentityParams {
            max_hops: 2,
            discount: 0.01,
        }
    }
}

impl IdentityParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_hops < 1 {
            return Err(Error::InvalidArgument("max hops must be >= 1".into()));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "discount must lie in (0, 1], got {}",
                self.discount
            )));
        }
        Ok(())
    }
}

/// Log-scale bucket of a degree: `floor(log2(deg))`, with degree 0 mapped to
/// bucket 0 (isolated nodes only; callers are warned at histogram time).
#[inline]
pub fn degree_bucket(degree: usize) -> usize {
    if degree == 0 {
        0
    } else {
        degree.ilog2() as usize
    }
}

/// Number of buckets needed for a maximum degree `d`: `floor(log2(d)) + 1`,
/// so the bucket of `d` itself exists even when `d` is a power of two.
pub fn bucket_count(max_degree: usize) -> usize {
    degree_bucket(max_degree) + 1
}

/// Per-node structural identity rows; `n x b`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityMatrix {
    data: Vec<f64>,
    bucket_count: usize,
}

impl IdentityMatrix {
    pub fn node_count(&self) -> usize {
        self.data.len() / self.bucket_count
    }

    pub fn bucket_count(&self) -> usize {
        self.bucket_count
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.data[u * self.bucket_count..(u + 1) * self.bucket_count]
    }

    /// Stacks two identity matrices with the same bucket count; rows of
    /// `second` follow rows of `first` (combined-id order).
    pub fn stack(first: &IdentityMatrix, second: &IdentityMatrix) -> Result<IdentityMatrix> {
        if first.bucket_count != second.bucket_count {
            return Err(Error::DimensionMismatch(format!(
                "identity bucket counts differ: {} vs {}",
                first.bucket_count, second.bucket_count
            )));
        }
        let mut data = first.data.clone();
        data.extend_from_slice(&second.data);
        Ok(IdentityMatrix {
            data,
            bucket_count: first.bucket_count,
        })
    }
}

/// Exact k-hop neighborhoods for every node: `result[u][k-1]` is the sorted
/// set of nodes at shortest-path distance `k` from `u`. Built by expanding
/// the previous frontier and subtracting everything already visited, which
/// beats per-node BFS re-traversal in practice.
pub fn khop_neighborhoods(g: &Graph, max_hops: usize) -> Vec<Vec<Vec<NodeId>>> {
    assert!(max_hops >= 1, "max_hops must be >= 1");
    let n = g.node_count();
    let mut scratch = HopScratch::new(n);
    (0..n)
        .map(|u| {
            let mut layers = Vec::with_capacity(max_hops);
            scratch.for_each_layer(g, u, max_hops, |_, frontier| {
                let mut layer = frontier.to_vec();
                layer.sort_unstable();
                layers.push(layer);
            });
            while layers.len() < max_hops {
                layers.push(Vec::new());
            }
            layers
        })
        .collect()
}

/// Histogram of `floor(log2(deg))` over a node set, as counts in `b`
/// buckets. Entries sum to the set size; degree-0 members land in bucket 0.
pub fn degree_histogram(g: &Graph, nodes: &[NodeId], buckets: usize) -> Vec<f64> {
    assert!(buckets >= 1, "bucket count must be >= 1");
    let mut hist = vec![0.0; buckets];
    for &v in nodes {
        let d = g.degree(v);
        if d == 0 {
            log::warn!("degree-0 node {v} counted in bucket 0");
        }
        let b = degree_bucket(d).min(buckets - 1);
        debug_assert!(
            degree_bucket(d) < buckets,
            "bucket count too small for degree {d}"
        );
        hist[b] += 1.0;
    }
    hist
}

/// Computes the identity matrix of one graph. `buckets` must cover the
/// maximum degree of every graph whose rows will be compared; the pipeline
/// derives it from the union of both input graphs.
pub fn node_identity(g: &Graph, params: &IdentityParams, buckets: usize) -> Result<IdentityMatrix> {
    params.validate()?;
    if buckets < bucket_count(g.max_degree()) {
        return Err(Error::InvalidArgument(format!(
            "{buckets} buckets cannot hold degrees up to {}",
            g.max_degree()
        )));
    }
    let n = g.node_count();
    let mut data = vec![0.0; n * buckets];
    data.par_chunks_mut(buckets.max(1))
        .enumerate()
        .for_each_init(
            || HopScratch::new(n),
            |scratch, (u, row)| {
                scratch.for_each_layer(g, u, params.max_hops, |k, frontier| {
                    let weight = params.discount.powi(k as i32 - 1);
                    for &v in frontier {
                        row[degree_bucket(g.degree(v))] += weight;
                    }
                });
            },
        );
    Ok(IdentityMatrix {
        data,
        bucket_count: buckets,
    })
}

/// Reusable per-thread state for layered neighborhood expansion.
struct HopScratch {
    stamp: Vec<u32>,
    epoch: u32,
    frontier: Vec<NodeId>,
    next: Vec<NodeId>,
}

impl HopScratch {
    fn new(n: usize) -> Self {
        HopScratch {
            stamp: vec![0; n],
            epoch: 0,
            frontier: Vec::new(),
            next: Vec::new(),
        }
    }

    /// Calls `visit(k, R_u^k)` for `k = 1..=max_hops`, stopping early once a
    /// frontier is empty. Layers are disjoint and exclude `u`.
    fn for_each_layer(
        &mut self,
        g: &Graph,
        u: NodeId,
        max_hops: usize,
        mut visit: impl FnMut(usize, &[NodeId]),
    ) {
        if self.epoch == u32::MAX {
            self.stamp.fill(0);
            self.epoch = 0;
        }
        self.epoch += 1;
        let epoch = self.epoch;
        self.stamp[u] = epoch;

        self.frontier.clear();
        self.frontier.extend_from_slice(g.neighbors(u));
        for &v in &self.frontier {
            self.stamp[v] = epoch;
        }

        for k in 1..=max_hops {
            if self.frontier.is_empty() {
                break;
            }
            visit(k, &self.frontier);
            if k == max_hops {
                break;
            }
            self.next.clear();
            for &v in &self.frontier {
                for &w in g.neighbors(v) {
                    if self.stamp[w] != epoch {
                        self.stamp[w] = epoch;
                        self.next.push(w);
                    }
                }
            }
            std::mem::swap(&mut self.frontier, &mut self.next);
        }
    }
}
