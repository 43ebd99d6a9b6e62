//! Cross-network node alignment from structural embeddings.
//!
//! Given two undirected graphs with no known correspondences, this crate
//! aligns their nodes in three steps:
//!
//! 1. **Identity extraction** ([`identity`]): each node is described by a
//!    discounted, log-binned histogram of the degrees of its k-hop
//!    neighbors, a descriptor that is invariant to node relabeling and
//!    comparable across disjoint graphs.
//! 2. **Embedding** ([`embed`]): identities induce a similarity kernel over
//!    the combined node set; rather than building the quadratic similarity
//!    matrix, every node is compared to `p` landmark nodes and the
//!    embeddings fall out of a singular value decomposition of the small
//!    landmark block (the Nystrom trick).
//! 3. **Matching** ([`align`]): each node of the first graph greedily takes
//!    the nearest embeddings from the second graph, found exactly with a
//!    k-d tree (or a parallel scan in high dimensions).
//!
//! The [`harness`] module adds the evaluation protocol used throughout the
//! guide: permute a graph, remove edges and flip attributes with known
//! probabilities, then measure how much of the planted correspondence the
//! pipeline recovers. [`walks`] contains a Monte-Carlo oracle relating the
//! similarity matrix to co-occurrence sampling, and [`cli`] exposes
//! everything as one binary.
//!
//! See the `book/` directory for a guided tour with runnable examples; its
//! code blocks are compiled as doctests of this crate.

pub mod align;
pub mod cli;
pub mod embed;
pub mod error;
pub mod graph;
pub mod harness;
pub mod identity;
pub mod io;
pub mod pipeline;
pub mod walks;

pub use align::{align as align_embeddings, AlignmentResult, NnIndex};
pub use embed::{EmbeddingMatrix, SimilarityParams};
pub use error::{Error, Result};
pub use graph::{AttributeTable, CombinedIndex, Graph};
pub use harness::{ExperimentConfig, ExperimentReport, GroundTruth};
pub use identity::{IdentityMatrix, IdentityParams};
pub use pipeline::{embed_pair, PipelineParams};

/// Compiles every code block of the guide as a doctest, keeping the book in
/// sync with the crate.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            #[allow(dead_code)]
            struct $name;
        };
    }

    chapter!(Readme, "../../../README.md");
    chapter!(Introduction, "../../../book/src/introduction.md");
    chapter!(Graphs, "../../../book/src/graphs.md");
    chapter!(
        StructuralIdentity,
        "../../../book/src/structural-identity.md"
    );
    chapter!(Embeddings, "../../../book/src/embeddings.md");
    chapter!(Alignment, "../../../book/src/alignment.md");
    chapter!(Benchmarking, "../../../book/src/benchmarking.md");
    chapter!(WalkOracle, "../../../book/src/walk-oracle.md");
}
