//! Cross-network node embeddings via implicit low-rank factorization of a
//! similarity matrix.
//!
//! The full similarity matrix over the combined node set,
//!
//! ```text
//! sim(u, v) = exp(-gamma_s * ||d_u - d_v||^2 - gamma_a * dist(f_u, f_v))
//! ```
//!
//! is quadratic to build, so it is never materialized. Instead every node is
//! compared only to `p` randomly chosen landmark nodes, giving the `n x p`
//! slice `C` and its `p x p` landmark block `W`. The Nystrom approximation
//! `S ~= C W' C^T` (with `W'` the pseudoinverse) then yields embeddings
//! directly: if `W' = U S V^T` is a singular value decomposition, then
//! `C W' C^T = (C U S^(1/2)) (C V S^(1/2))^T`, so `Y = C U S^(1/2)` factors
//! the approximation without ever forming it. Rows are normalized to unit
//! length so Euclidean distance between embeddings is a meaningful match
//! score.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::AttributeTable;
use crate::identity::IdentityMatrix;

/// Distance between two attribute rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttrDistance {
    /// Number of disagreeing positions; the natural choice for categorical
    /// attributes.
    #[default]
    Categorical,
    /// Squared Euclidean distance.
    Euclidean,
    /// One minus cosine similarity.
    Cosine,
}

/// Computes the attribute distance of two rows of equal length.
pub fn attribute_distance(fu: &[f64], fv: &[f64], kind: AttrDistance) -> Result<f64> {
    if fu.len() != fv.len() {
        return Err(Error::DimensionMismatch(format!(
            "attribute rows have lengths {} and {}",
            fu.len(),
            fv.len()
        )));
    }
    Ok(attribute_distance_unchecked(fu, fv, kind))
}

#[inline]
fn attribute_distance_unchecked(fu: &[f64], fv: &[f64], kind: AttrDistance) -> f64 {
    match kind {
        AttrDistance::Categorical => fu.iter().zip(fv).filter(|(a, b)| a != b).count() as f64,
        AttrDistance::Euclidean => fu.iter().zip(fv).map(|(a, b)| (a - b) * (a - b)).sum(),
        AttrDistance::Cosine => {
            let mut dot = 0.0;
            let mut nu = 0.0;
            let mut nv = 0.0;
            for (a, b) in fu.iter().zip(fv) {
                dot += a * b;
                nu += a * a;
                nv += b * b;
            }
            if nu == 0.0 || nv == 0.0 {
                // Zero vectors carry no direction; identical zeros are at
                // distance 0, anything else at the maximum disagreement 1.
                if nu == nv {
                    0.0
                } else {
                    1.0
                }
            } else {
                1.0 - dot / (nu.sqrt() * nv.sqrt())
            }
        }
    }
}

/// Weights of the structural and attribute terms of the similarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityParams {
    pub gamma_struct: f64,
    pub gamma_attr: f64,
    pub attr_distance: AttrDistance,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        SimilarityParams {
            gamma_struct: 1.0,
            gamma_attr: 1.0,
            attr_distance: AttrDistance::Categorical,
        }
    }
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<()> {
        if self.gamma_struct < 0.0 || self.gamma_attr < 0.0 {
            return Err(Error::InvalidArgument(
                "similarity weights must be nonnegative".into(),
            ));
        }
        if self.gamma_struct + self.gamma_attr <= 0.0 {
            return Err(Error::InvalidArgument(
                "at least one similarity weight must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Similarity of two nodes from their identity rows and (optionally)
/// attribute rows; always in `(0, 1]` and symmetric. The attribute term is
/// ignored when no attributes are passed.
pub fn similarity(
    du: &[f64],
    dv: &[f64],
    attrs: Option<(&[f64], &[f64])>,
    params: &SimilarityParams,
) -> Result<f64> {
    if du.len() != dv.len() {
        return Err(Error::DimensionMismatch(format!(
            "identity rows have lengths {} and {}",
            du.len(),
            dv.len()
        )));
    }
    if let Some((fu, fv)) = attrs {
        if fu.len() != fv.len() {
            return Err(Error::DimensionMismatch(format!(
                "attribute rows have lengths {} and {}",
                fu.len(),
                fv.len()
            )));
        }
    }
    Ok(similarity_unchecked(du, dv, attrs, params))
}

#[inline]
fn similarity_unchecked(
    du: &[f64],
    dv: &[f64],
    attrs: Option<(&[f64], &[f64])>,
    params: &SimilarityParams,
) -> f64 {
    let mut sq = 0.0;
    for (a, b) in du.iter().zip(dv) {
        let diff = a - b;
        sq += diff * diff;
    }
    let mut exponent = params.gamma_struct * sq;
    if let Some((fu, fv)) = attrs {
        exponent += params.gamma_attr * attribute_distance_unchecked(fu, fv, params.attr_distance);
    }
    (-exponent).exp()
}

/// The sampled landmark nodes, as sorted unique combined ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LandmarkSet {
    indices: Vec<usize>,
}

impl LandmarkSet {
    pub fn count(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// Default landmark count `floor(t * log2 n)`, clamped to `[1, n]`.
pub fn default_landmark_count(n: usize, multiplier: f64) -> usize {
    if n <= 1 {
        return n.max(1).min(n.max(1));
    }
    let p = (multiplier * (n as f64).log2()).floor() as usize;
    p.clamp(1, n)
}

/// Samples `p` distinct landmark ids uniformly without replacement from the
/// combined id space `0..n`.
pub fn choose_landmarks(n: usize, p: usize, rng: &mut impl Rng) -> Result<LandmarkSet> {
    if p == 0 || p > n {
        return Err(Error::InvalidArgument(format!(
            "landmark count must satisfy 1 <= p <= n, got p = {p}, n = {n}"
        )));
    }
    let mut indices = rand::seq::index::sample(rng, n, p).into_vec();
    indices.sort_unstable();
    Ok(LandmarkSet { indices })
}

/// Stratified variant: splits the landmark budget across the two graphs in
/// proportion to their sizes, then samples uniformly within each.
pub fn choose_landmarks_stratified(
    n1: usize,
    n2: usize,
    p: usize,
    rng: &mut impl Rng,
) -> Result<LandmarkSet> {
    let n = n1 + n2;
    if p == 0 || p > n {
        return Err(Error::InvalidArgument(format!(
            "landmark count must satisfy 1 <= p <= n, got p = {p}, n = {n}"
        )));
    }
    let p1 = ((p as f64 * n1 as f64 / n as f64).round() as usize)
        .min(n1)
        .max(p.saturating_sub(n2));
    let p2 = p - p1;
    let mut indices = rand::seq::index::sample(rng, n1, p1).into_vec();
    indices.extend(
        rand::seq::index::sample(rng, n2, p2)
            .into_iter()
            .map(|i| n1 + i),
    );
    indices.sort_unstable();
    Ok(LandmarkSet { indices })
}

/// The node-to-landmark similarity slice `C` (`n x p`) and its landmark
/// block `W` (`p x p`, the rows of `C` at landmark ids).
#[derive(Debug, Clone)]
pub struct SimilaritySlice {
    c: Array2<f64>,
    w: Array2<f64>,
    landmarks: LandmarkSet,
}

impl SimilaritySlice {
    pub fn node_count(&self) -> usize {
        self.c.nrows()
    }

    pub fn landmark_count(&self) -> usize {
        self.c.ncols()
    }

    pub fn c(&self) -> ArrayView2<'_, f64> {
        self.c.view()
    }

    pub fn w(&self) -> ArrayView2<'_, f64> {
        self.w.view()
    }

    pub fn landmarks(&self) -> &LandmarkSet {
        &self.landmarks
    }
}

/// Builds the similarity slice: `C[i][l] = sim(i, landmark_l)` for all `n`
/// combined nodes. Attribute rows, when present, must cover the combined id
/// space (stack the two tables first).
pub fn build_similarity_slice(
    identity: &IdentityMatrix,
    attrs: Option<&AttributeTable>,
    landmarks: &LandmarkSet,
    params: &SimilarityParams,
) -> Result<SimilaritySlice> {
    params.validate()?;
    let n = identity.node_count();
    let p = landmarks.count();
    if let Some(table) = attrs {
        if table.node_count() != n {
            return Err(Error::DimensionMismatch(format!(
                "attribute table covers {} nodes, identity matrix {}",
                table.node_count(),
                n
            )));
        }
    }
    if landmarks.indices().iter().any(|&l| l >= n) {
        return Err(Error::InvalidArgument(
            "landmark id out of range for the combined node set".into(),
        ));
    }
    // The attribute term is only active when both a table and a positive
    // weight are present.
    let use_attrs = attrs.is_some() && params.gamma_attr > 0.0;

    let mut c = Array2::zeros((n, p));
    {
        let slice = c.as_slice_mut().expect("row-major layout");
        slice.par_chunks_mut(p).enumerate().for_each(|(i, row)| {
            let di = identity.row(i);
            for (slot, &l) in row.iter_mut().zip(landmarks.indices()) {
                let attr_pair = if use_attrs {
                    let table = attrs.unwrap();
                    Some((table.row(i), table.row(l)))
                } else {
                    None
                };
                *slot = similarity_unchecked(di, identity.row(l), attr_pair, params);
            }
        });
    }

    let mut w = Array2::zeros((p, p));
    for (j, &l) in landmarks.indices().iter().enumerate() {
        w.row_mut(j).assign(&c.row(l));
    }
    Ok(SimilaritySlice {
        c,
        w,
        landmarks: landmarks.clone(),
    })
}

/// Default relative cutoff on singular values when pseudoinverting `W`.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-10;

/// Cap guarding the dense test oracles against quadratic blowup.
pub const DEFAULT_DENSE_CAP: usize = 500;

/// Node embeddings as rows of an `n x p` matrix, with the split point
/// between the two input graphs retained.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    y: Array2<f64>,
    first_count: usize,
}

impl EmbeddingMatrix {
    pub fn new(y: Array2<f64>, first_count: usize) -> Result<Self> {
        if first_count > y.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "split point {first_count} exceeds {} rows",
                y.nrows()
            )));
        }
        Ok(EmbeddingMatrix { y, first_count })
    }

    /// Embedding dimension `p`.
    pub fn dim(&self) -> usize {
        self.y.ncols()
    }

    pub fn node_count(&self) -> usize {
        self.y.nrows()
    }

    pub fn first_count(&self) -> usize {
        self.first_count
    }

    pub fn full(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }

    /// Rows of the first input graph.
    pub fn first(&self) -> ArrayView2<'_, f64> {
        self.y.slice(ndarray::s![..self.first_count, ..])
    }

    /// Rows of the second input graph.
    pub fn second(&self) -> ArrayView2<'_, f64> {
        self.y.slice(ndarray::s![self.first_count.., ..])
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.y.row(i).to_slice().expect("row-major layout")
    }
}

/// Pseudoinverse factors of the landmark block, already sign-fixed and
/// sorted by decreasing singular value.
struct PinvSvd {
    u: DMatrix<f64>,
    sigma: DVector<f64>,
    v: DMatrix<f64>,
}

/// SVD of the pseudoinverse `W'`: computes `W' = V_w S' U_w^T` from the SVD
/// of `W`, materializes it, and decomposes it again so the factors are
/// exactly those of the matrix the theorem references.
fn pinv_svd(w: ArrayView2<'_, f64>, rank_tolerance: f64) -> Result<PinvSvd> {
    let p = w.nrows();
    let w_mat = DMatrix::from_fn(p, p, |i, j| w[[i, j]]);

    let pinv = pseudoinverse(&w_mat, rank_tolerance)?;
    let svd = pinv.svd(true, true);
    let mut u = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return V^T".into()))?;
    let mut v = v_t.transpose();
    let mut sigma = svd.singular_values;

    // Sort by decreasing singular value (stable on ties) so the factor
    // layout does not depend on the decomposition's internal ordering.
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap());
    let u_sorted = DMatrix::from_fn(p, sigma.len(), |i, j| u[(i, order[j])]);
    let v_sorted = DMatrix::from_fn(p, sigma.len(), |i, j| v[(i, order[j])]);
    let sigma_sorted = DVector::from_fn(sigma.len(), |j, _| sigma[order[j]]);
    u = u_sorted;
    v = v_sorted;
    sigma = sigma_sorted;

    // Sign convention: the largest-magnitude entry of each left singular
    // vector is made nonnegative, fixing the reflection ambiguity so
    // embeddings reproduce across runs.
    for j in 0..sigma.len() {
        let mut best = 0;
        let mut best_abs = -1.0;
        for i in 0..p {
            let a = u[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if u[(best, j)] < 0.0 {
            for i in 0..p {
                u[(i, j)] = -u[(i, j)];
                v[(i, j)] = -v[(i, j)];
            }
        }
    }
    Ok(PinvSvd { u, sigma, v })
}

/// Moore-Penrose pseudoinverse via SVD, zeroing singular values below
/// `rank_tolerance * sigma_max`.
fn pseudoinverse(m: &DMatrix<f64>, rank_tolerance: f64) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = rank_tolerance * sigma_max;
    let u = svd
        .u
        .as_ref()
        .ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::Numerical("SVD did not return V^T".into()))?;
    let inv_sigma = DVector::from_fn(svd.singular_values.len(), |i, _| {
        let s = svd.singular_values[i];
        if s > cutoff && s > 0.0 {
            1.0 / s
        } else {
            0.0
        }
    });
    // W' = V S' U^T
    let mut scaled_vt = v_t.clone();
    for (i, mut row) in scaled_vt.row_iter_mut().enumerate() {
        row.scale_mut(inv_sigma[i]);
    }
    Ok(scaled_vt.transpose() * u.transpose())
}

fn to_ndarray(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Raw (unnormalized) factor pair of the Nystrom approximation:
/// `Y_raw = C U S^(1/2)` and `Z_raw = C V S^(1/2)`, which satisfy
/// `Y_raw Z_raw^T = C W' C^T`.
pub fn embedding_factors(
    slice: &SimilaritySlice,
    rank_tolerance: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let f = pinv_svd(slice.w(), rank_tolerance)?;
    let sqrt_sigma = f.sigma.map(f64::sqrt);
    let mut u_scaled = f.u.clone();
    let mut v_scaled = f.v.clone();
    for j in 0..sqrt_sigma.len() {
        u_scaled.column_mut(j).scale_mut(sqrt_sigma[j]);
        v_scaled.column_mut(j).scale_mut(sqrt_sigma[j]);
    }
    let y_raw = slice.c.dot(&to_ndarray(&u_scaled));
    let z_raw = slice.c.dot(&to_ndarray(&v_scaled));
    Ok((y_raw, z_raw))
}

/// Computes normalized node embeddings from a similarity slice. The first
/// `split_at` rows belong to graph 1.
pub fn embed(
    slice: &SimilaritySlice,
    split_at: usize,
    rank_tolerance: f64,
) -> Result<EmbeddingMatrix> {
    let f = pinv_svd(slice.w(), rank_tolerance)?;
    let sqrt_sigma = f.sigma.map(f64::sqrt);
    let mut u_scaled = f.u.clone();
    for j in 0..sqrt_sigma.len() {
        u_scaled.column_mut(j).scale_mut(sqrt_sigma[j]);
    }
    let mut y = slice.c.dot(&to_ndarray(&u_scaled));

    let p = y.ncols();
    let rows = y.as_slice_mut().expect("row-major layout");
    // Hubs far from every landmark produce legitimately tiny rows (their
    // similarities are exponentially small), and those still normalize
    // cleanly. Only a row that cannot be normalized at all (everything
    // underflowed to zero) is a failure.
    let failure = rows
        .par_chunks_mut(p)
        .enumerate()
        .map(|(i, row)| {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-300 {
                return Some(i);
            }
            for x in row.iter_mut() {
                *x /= norm;
            }
            None
        })
        .reduce(|| None, |a, b| a.or(b));
    if let Some(i) = failure {
        return Err(Error::Numerical(format!(
            "zero row {i} in raw embedding; all similarities underflowed"
        )));
    }
    EmbeddingMatrix::new(y, split_at)
}

/// Dense `n x n` similarity matrix, computed pairwise. Test oracle only:
/// refuses to run above `cap` nodes.
pub fn dense_similarity(
    identity: &IdentityMatrix,
    attrs: Option<&AttributeTable>,
    params: &SimilarityParams,
    cap: usize,
) -> Result<Array2<f64>> {
    params.validate()?;
    let n = identity.node_count();
    if n > cap {
        return Err(Error::DenseCap { n, cap });
    }
    let use_attrs = attrs.is_some() && params.gamma_attr > 0.0;
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        s[[i, i]] = 1.0;
        for j in (i + 1)..n {
            let attr_pair = if use_attrs {
                let table = attrs.unwrap();
                Some((table.row(i), table.row(j)))
            } else {
                None
            };
            let value = similarity_unchecked(identity.row(i), identity.row(j), attr_pair, params);
            s[[i, j]] = value;
            s[[j, i]] = value;
        }
    }
    Ok(s)
}

/// Materializes the Nystrom approximation `C W' C^T`. Test oracle only:
/// refuses to run above `cap` nodes.
///
/// The inverse singular values are split as `1/sqrt(s)` onto the two sides
/// of the product instead of forming `W'` outright; with landmarks as
/// ill-conditioned as `W = S` at `p = n`, a materialized pseudoinverse
/// amplifies rounding by `eps / rank_tolerance`, while the split form stays
/// at a few ulps. This route runs on the SVD of `W` itself and shares no
/// factors with [`embedding_factors`], which decomposes the materialized
/// `W'`.
pub fn nystrom_reconstruct(
    slice: &SimilaritySlice,
    rank_tolerance: f64,
    cap: usize,
) -> Result<Array2<f64>> {
    let n = slice.node_count();
    if n > cap {
        return Err(Error::DenseCap { n, cap });
    }
    let p = slice.landmark_count();
    let w_mat = DMatrix::from_fn(p, p, |i, j| slice.w[[i, j]]);
    let svd = w_mat.svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return V^T".into()))?;
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().cloned().fold(0.0, f64::max);
    let cutoff = rank_tolerance * sigma_max;

    // W' = V S^-1 U^T, so C W' C^T = (C V S^-1/2) (C U S^-1/2)^T.
    let mut v_scaled = v_t.transpose();
    let mut u_scaled = u;
    for j in 0..sigma.len() {
        let scale = if sigma[j] > cutoff && sigma[j] > 0.0 {
            1.0 / sigma[j].sqrt()
        } else {
            0.0
        };
        v_scaled.column_mut(j).scale_mut(scale);
        u_scaled.column_mut(j).scale_mut(scale);
    }
    let left = slice.c.dot(&to_ndarray(&v_scaled));
    let right = slice.c.dot(&to_ndarray(&u_scaled));
    Ok(left.dot(&right.t()))
}
