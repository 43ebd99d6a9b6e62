//! End-to-end embedding of a graph pair: identity extraction, landmark
//! similarities, and the implicit factorization, with per-stage timing.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embed::{
    build_similarity_slice, choose_landmarks, choose_landmarks_stratified, default_landmark_count,
    embed, EmbeddingMatrix, SimilarityParams, DEFAULT_RANK_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::graph::{AttributeTable, CombinedIndex, Graph};
use crate::identity::{bucket_count, node_identity, IdentityMatrix, IdentityParams};

/// How many landmarks to use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LandmarkSpec {
    /// `floor(t * log2 n)` landmarks over the combined node count.
    Multiplier(f64),
    /// An explicit landmark count.
    Count(usize),
}

impl LandmarkSpec {
    pub fn resolve(&self, n: usize) -> Result<usize> {
        let p = match *self {
            LandmarkSpec::Multiplier(t) => {
                if t <= 0.0 {
                    return Err(Error::InvalidArgument(
                        "landmark multiplier must be positive".into(),
                    ));
                }
                default_landmark_count(n, t)
            }
            LandmarkSpec::Count(p) => p,
        };
        if p == 0 || p > n {
            return Err(Error::InvalidArgument(format!(
                "landmark count must satisfy 1 <= p <= {n}, got {p}"
            )));
        }
        Ok(p)
    }
}

/// All knobs of the embedding pipeline. Defaults follow the recommended
/// settings: `K = 2`, `delta = 0.01`, `gamma_s = gamma_a = 1`,
/// `p = floor(10 log2 n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    pub identity: IdentityParams,
    pub similarity: SimilarityParams,
    pub landmarks: LandmarkSpec,
    pub rank_tolerance: f64,
    /// Sample landmarks per graph in proportion to size instead of
    /// uniformly over the combined node set.
    pub stratified_landmarks: bool,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            identity: IdentityParams::default(),
            similarity: SimilarityParams::default(),
            landmarks: LandmarkSpec::Multiplier(10.0),
            rank_tolerance: DEFAULT_RANK_TOLERANCE,
            stratified_landmarks: false,
        }
    }
}

/// Wall-clock time of each pipeline stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub identity: Duration,
    pub similarity: Duration,
    pub embed: Duration,
    pub align: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.identity + self.similarity + self.embed + self.align
    }
}

/// Output of [`embed_pair`].
#[derive(Debug, Clone)]
pub struct PairEmbedding {
    pub embeddings: EmbeddingMatrix,
    pub bucket_count: usize,
    pub landmark_count: usize,
    /// Identity/similarity/embed stages; the align slot stays zero until a
    /// caller matches the embeddings.
    pub timings: StageTimings,
}

/// Embeds two graphs jointly. Identity vectors are binned against the
/// maximum degree over the union of both graphs so rows are comparable,
/// landmarks are drawn from the combined node set with `landmark_seed`, and
/// the resulting embedding matrix splits into per-graph views.
pub fn embed_pair(
    g1: &Graph,
    attrs1: Option<&AttributeTable>,
    g2: &Graph,
    attrs2: Option<&AttributeTable>,
    params: &PipelineParams,
    landmark_seed: u64,
) -> Result<PairEmbedding> {
    params.identity.validate()?;
    params.similarity.validate()?;
    if g1.node_count() == 0 || g2.node_count() == 0 {
        return Err(Error::InvalidArgument("cannot embed an empty graph".into()));
    }
    let attrs = match (attrs1, attrs2) {
        (None, None) => None,
        (Some(a1), Some(a2)) => {
            if a1.node_count() != g1.node_count() || a2.node_count() != g2.node_count() {
                return Err(Error::DimensionMismatch(
                    "attribute tables do not cover their graphs".into(),
                ));
            }
            Some(AttributeTable::stack(a1, a2)?)
        }
        _ => {
            return Err(Error::InvalidArgument(
                "attributes must be supplied for both graphs or neither".into(),
            ))
        }
    };

    let index = CombinedIndex::combine(g1, g2);
    let n = index.total();
    let buckets = bucket_count(g1.max_degree().max(g2.max_degree()));

    let start = Instant::now();
    let id1 = node_identity(g1, &params.identity, buckets)?;
    let id2 = node_identity(g2, &params.identity, buckets)?;
    let identity = IdentityMatrix::stack(&id1, &id2)?;
    let identity_time = start.elapsed();

    let p = params.landmarks.resolve(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(landmark_seed);
    let landmarks = if params.stratified_landmarks {
        choose_landmarks_stratified(g1.node_count(), g2.node_count(), p, &mut rng)?
    } else {
        choose_landmarks(n, p, &mut rng)?
    };

    let start = Instant::now();
    let slice = build_similarity_slice(&identity, attrs.as_ref(), &landmarks, &params.similarity)?;
    let similarity_time = start.elapsed();

    let start = Instant::now();
    let embeddings = embed(&slice, g1.node_count(), params.rank_tolerance)?;
    let embed_time = start.elapsed();

    Ok(PairEmbedding {
        embeddings,
        bucket_count: buckets,
        landmark_count: p,
        timings: StageTimings {
            identity: identity_time,
            similarity: similarity_time,
            embed: embed_time,
            align: Duration::ZERO,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_graph_embeds_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = crate::harness::generate_er(120, 6.0, &mut rng).unwrap();
        let pair = embed_pair(&g, None, &g, None, &PipelineParams::default(), 3).unwrap();
        let y1 = pair.embeddings.first();
        let y2 = pair.embeddings.second();
        assert_eq!(y1, y2);
        assert_eq!(pair.embeddings.dim(), pair.landmark_count);
    }

    #[test]
    fn landmark_spec_resolution() {
        assert_eq!(LandmarkSpec::Multiplier(10.0).resolve(1024).unwrap(), 100);
        assert_eq!(LandmarkSpec::Count(7).resolve(100).unwrap(), 7);
        assert!(LandmarkSpec::Count(0).resolve(10).is_err());
        assert!(LandmarkSpec::Count(11).resolve(10).is_err());
        assert!(LandmarkSpec::Multiplier(-1.0).resolve(10).is_err());
    }

    #[test]
    fn results_do_not_depend_on_the_thread_count() {
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(2);
                let g1 = crate::harness::generate_er(200, 6.0, &mut rng).unwrap();
                let (g2, _, _) = crate::harness::permute(&g1, None, &mut rng).unwrap();
                let pair =
                    embed_pair(&g1, None, &g2, None, &PipelineParams::default(), 9).unwrap();
                let result = crate::align::align(
                    pair.embeddings.first(),
                    pair.embeddings.second(),
                    3,
                )
                .unwrap();
                (pair.embeddings, result)
            })
        };
        let (emb_a, res_a) = run(1);
        let (emb_b, res_b) = run(4);
        assert_eq!(emb_a, emb_b);
        assert_eq!(res_a, res_b);
    }

    #[test]
    fn empty_graphs_are_rejected() {
        let empty = crate::graph::Graph::from_edges(0, []).unwrap();
        let g = crate::graph::Graph::from_edges(2, [(0, 1)]).unwrap();
        assert!(embed_pair(&empty, None, &g, None, &PipelineParams::default(), 0).is_err());
    }

    #[test]
    fn attribute_tables_must_come_in_pairs() {
        let g = crate::graph::Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let kinds = vec![crate::graph::AttributeKind::Categorical { cardinality: 2 }];
        let table = crate::graph::AttributeTable::new(kinds, vec![1.0, 0.0, 1.0], 3).unwrap();
        let err = embed_pair(&g, Some(&table), &g, None, &PipelineParams::default(), 0);
        assert!(err.is_err());
    }
}
