//! Exact nearest-neighbor matching of embeddings.
//!
//! Each node of graph 1 is matched to the `alpha` closest embedding rows of
//! graph 2 under squared Euclidean distance, reported as similarities
//! `exp(-dist^2)`. Low-dimensional queries go through a k-d tree; above
//! [`DEFAULT_KDTREE_MAX_DIM`] dimensions the index transparently switches to
//! a scan parallelized over queries, since axis-aligned pruning loses its
//! bite in high dimensions on adversarial data. Both paths return exactly
//! the same candidates: the `alpha` lexicographically smallest
//! `(distance, id)` pairs, so ties always resolve to the smaller node id.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Above this embedding dimension the index uses the linear scan instead of
/// the k-d tree.
pub const DEFAULT_KDTREE_MAX_DIM: usize = 64;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        /// Index of the right child; the left child immediately follows the
        /// node itself.
        right: usize,
    },
}

/// Exact nearest-neighbor index over the rows of an embedding matrix.
#[derive(Debug, Clone)]
pub struct NnIndex {
    /// Point coordinates; permuted into tree order for the k-d tree, id
    /// order for the scan.
    coords: Vec<f64>,
    /// Original row id of each stored point.
    ids: Vec<usize>,
    dim: usize,
    /// Empty when the index operates as a linear scan.
    nodes: Vec<Node>,
}

/// Max-heap entry: the worst candidate (largest distance, then largest id)
/// sits on top.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    id: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .partial_cmp(&other.dist)
            .expect("distances are finite")
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl NnIndex {
    /// Builds an index with the default dimension threshold.
    pub fn build(points: ArrayView2<'_, f64>) -> Result<NnIndex> {
        Self::build_with(points, DEFAULT_KDTREE_MAX_DIM)
    }

    /// Builds an index that uses a k-d tree only when the dimension is at
    /// most `max_kd_dim`.
    pub fn build_with(points: ArrayView2<'_, f64>, max_kd_dim: usize) -> Result<NnIndex> {
        let n = points.nrows();
        let dim = points.ncols();
        if n == 0 {
            return Err(Error::InvalidArgument(
                "cannot build an index over zero points".into(),
            ));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "cannot build an index over zero-dimensional points".into(),
            ));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(
                "index input contains a non-finite coordinate".into(),
            ));
        }

        let mut ids: Vec<usize> = (0..n).collect();
        let mut nodes = Vec::new();
        if dim <= max_kd_dim {
            build_recursive(&points, &mut ids, 0, &mut nodes);
        }
        let mut coords = Vec::with_capacity(n * dim);
        for &id in &ids {
            coords.extend(points.row(id).iter());
        }
        Ok(NnIndex {
            coords,
            ids,
            dim,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn point(&self, slot: usize) -> &[f64] {
        &self.coords[slot * self.dim..(slot + 1) * self.dim]
    }

    /// The `alpha` stored points closest to `query`, as `(id, squared
    /// distance)` sorted by ascending distance with ties broken by smaller
    /// id.
    pub fn top_alpha(&self, query: &[f64], alpha: usize) -> Result<Vec<(usize, f64)>> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "query has dimension {}, index {}",
                query.len(),
                self.dim
            )));
        }
        if alpha == 0 || alpha > self.len() {
            return Err(Error::InvalidArgument(format!(
                "alpha must satisfy 1 <= alpha <= {}, got {alpha}",
                self.len()
            )));
        }
        if query.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(
                "query contains a non-finite coordinate".into(),
            ));
        }

        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(alpha + 1);
        if self.nodes.is_empty() {
            for slot in 0..self.len() {
                self.consider(&mut heap, alpha, slot, query);
            }
        } else {
            let mut side_dist = vec![0.0; self.dim];
            self.search(0, query, alpha, 0.0, &mut side_dist, &mut heap);
        }

        let mut out: Vec<(usize, f64)> = heap.into_iter().map(|c| (c.id, c.dist)).collect();
        out.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        Ok(out)
    }

    #[inline]
    fn consider(&self, heap: &mut BinaryHeap<Candidate>, alpha: usize, slot: usize, query: &[f64]) {
        let bound = if heap.len() == alpha {
            heap.peek().unwrap().dist
        } else {
            f64::INFINITY
        };
        let Some(dist) = sqdist_bounded(query, self.point(slot), bound) else {
            return;
        };
        let cand = Candidate {
            dist,
            id: self.ids[slot],
        };
        if heap.len() < alpha {
            heap.push(cand);
        } else if cand < *heap.peek().unwrap() {
            heap.pop();
            heap.push(cand);
        }
    }

    fn search(
        &self,
        node: usize,
        query: &[f64],
        alpha: usize,
        lower_bound: f64,
        side_dist: &mut [f64],
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    self.consider(heap, alpha, slot, query);
                }
            }
            Node::Split { dim, value, right } => {
                let diff = query[dim] - value;
                let (near, far) = if diff < 0.0 {
                    (node + 1, right)
                } else {
                    (right, node + 1)
                };
                self.search(near, query, alpha, lower_bound, side_dist, heap);

                // Lower bound for the far half-space: the contribution of
                // this dimension tightens from whatever an ancestor split
                // imposed to the distance to this splitting plane.
                let old = side_dist[dim];
                let tightened = diff * diff;
                let far_bound = lower_bound - old + tightened;
                let prune = heap.len() == alpha && far_bound > heap.peek().unwrap().dist;
                if !prune {
                    side_dist[dim] = tightened;
                    self.search(far, query, alpha, far_bound, side_dist, heap);
                    side_dist[dim] = old;
                }
            }
        }
    }
}

/// Squared Euclidean distance, abandoning early (returning `None`) once the
/// partial sum exceeds `bound`. Partial sums of nonnegative terms never
/// decrease, so an abandoned point can never qualify.
#[inline]
fn sqdist_bounded(a: &[f64], b: &[f64], bound: f64) -> Option<f64> {
    let mut acc = 0.0;
    let mut i = 0;
    while i < a.len() {
        let chunk_end = (i + 8).min(a.len());
        while i < chunk_end {
            let d = a[i] - b[i];
            acc += d * d;
            i += 1;
        }
        if acc > bound {
            return None;
        }
    }
    Some(acc)
}

fn build_recursive(
    points: &ArrayView2<'_, f64>,
    ids: &mut [usize],
    offset: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let len = ids.len();
    let dim_count = points.ncols();

    // Bounding box of the range; split on the dimension with largest spread.
    let mut best_dim = 0;
    let mut best_spread = -1.0;
    for d in 0..dim_count {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &id in ids.iter() {
            let x = points[[id, d]];
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let spread = hi - lo;
        if spread > best_spread {
            best_spread = spread;
            best_dim = d;
        }
    }

    let this = nodes.len();
    if len <= LEAF_SIZE || best_spread == 0.0 {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + len,
        });
        return this;
    }

    let mid = len / 2;
    let d = best_dim;
    ids.select_nth_unstable_by(mid, |&a, &b| {
        points[[a, d]]
            .partial_cmp(&points[[b, d]])
            .unwrap()
            .then(a.cmp(&b))
    });
    let split_value = points[[ids[mid], d]];

    nodes.push(Node::Split {
        dim: d,
        value: split_value,
        right: 0, // patched below
    });
    let (left_ids, right_ids) = ids.split_at_mut(mid);
    build_recursive(points, left_ids, offset, nodes);
    let right = build_recursive(points, right_ids, offset + mid, nodes);
    if let Node::Split { right: slot, .. } = &mut nodes[this] {
        *slot = right;
    }
    this
}

/// Soft and hard alignments of graph 1 nodes onto graph 2 nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    alpha: usize,
    /// Per graph-1 node: `(g2 node, similarity)` with similarities
    /// non-increasing, exactly `alpha` entries.
    lists: Vec<Vec<(usize, f64)>>,
}

impl AlignmentResult {
    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn node_count(&self) -> usize {
        self.lists.len()
    }

    /// Ranked candidates of node `u`, best first.
    pub fn candidates(&self, u: usize) -> &[(usize, f64)] {
        &self.lists[u]
    }

    /// Best counterpart of node `u` (smallest id on ties).
    pub fn hard(&self, u: usize) -> usize {
        self.lists[u][0].0
    }

    /// The hard alignment map; many-to-one is allowed.
    pub fn hard_map(&self) -> Vec<usize> {
        (0..self.lists.len()).map(|u| self.hard(u)).collect()
    }

    /// Greedy one-to-one matching: all candidate pairs sorted globally by
    /// similarity, accepted when both endpoints are still free. Nodes whose
    /// candidates are all taken stay unmatched.
    pub fn one_to_one(&self) -> Vec<Option<usize>> {
        let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
        let mut max_g2 = 0;
        for (u, list) in self.lists.iter().enumerate() {
            for &(v, sim) in list {
                pairs.push((u, v, sim));
                max_g2 = max_g2.max(v);
            }
        }
        pairs.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap()
                .then(a.0.cmp(&b.0))
                .then(a.1.cmp(&b.1))
        });
        let mut out = vec![None; self.lists.len()];
        let mut taken = vec![false; max_g2 + 1];
        for (u, v, _) in pairs {
            if out[u].is_none() && !taken[v] {
                out[u] = Some(v);
                taken[v] = true;
            }
        }
        out
    }
}

/// Aligns every row of `y1` against the rows of `y2`: the `alpha` nearest
/// rows with similarity `exp(-dist^2)`, plus the derived hard map.
pub fn align(
    y1: ArrayView2<'_, f64>,
    y2: ArrayView2<'_, f64>,
    alpha: usize,
) -> Result<AlignmentResult> {
    align_with(y1, y2, alpha, DEFAULT_KDTREE_MAX_DIM)
}

/// [`align`] with an explicit k-d tree dimension threshold.
pub fn align_with(
    y1: ArrayView2<'_, f64>,
    y2: ArrayView2<'_, f64>,
    alpha: usize,
    max_kd_dim: usize,
) -> Result<AlignmentResult> {
    if y1.ncols() != y2.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "embedding dimensions differ: {} vs {}",
            y1.ncols(),
            y2.ncols()
        )));
    }
    if alpha == 0 || alpha > y2.nrows() {
        return Err(Error::InvalidArgument(format!(
            "alpha must satisfy 1 <= alpha <= {}, got {alpha}",
            y2.nrows()
        )));
    }
    let index = NnIndex::build_with(y2, max_kd_dim)?;
    let rows: Vec<Vec<f64>> = y1.rows().into_iter().map(|r| r.to_vec()).collect();
    let lists: Vec<Vec<(usize, f64)>> = rows
        .par_iter()
        .map(|row| {
            let hits = index.top_alpha(row, alpha)?;
            Ok(hits
                .into_iter()
                .map(|(id, sq_dist)| (id, (-sq_dist).exp()))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(AlignmentResult { alpha, lists })
}
