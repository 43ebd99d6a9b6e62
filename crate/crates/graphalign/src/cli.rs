//! The `graphalign` binary: `embed`, `align`, `bench`, and `oracle`
//! subcommands.
//!
//! Defaults follow the recommended hyperparameters (`K = 2`,
//! `delta = 0.01`, `gamma_s = gamma_a = 1`, `p = floor(10 log2 n)`,
//! `alpha = 1`). Every output file starts with a comment line recording the
//! resolved configuration, and all randomness flows from `--seed`, so
//! identical invocations produce identical result files at any `--threads`
//! setting. Wall-clock timings go to a separate `timings.csv` precisely so
//! the result files stay byte-reproducible.
//!
//! Exit codes: 0 on success, 1 on runtime or numerical failure, 2 on usage
//! or I/O errors.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::align::align_with;
use crate::embed::{AttrDistance, SimilarityParams};
use crate::error::{Error, Result};
use crate::graph::{
    parse_attributes, parse_edge_list, parse_edge_list_labeled, AttributeKind, AttributeTable,
    Graph,
};
use crate::harness::{
    accuracy, accuracy_partial, derive_seed, generate_er, run_experiment_on, top_alpha_accuracy,
    AttrSource, ExperimentConfig, ExperimentReport, GraphSource,
};
use crate::identity::{bucket_count, node_identity, IdentityMatrix};
use crate::io;
use crate::pipeline::{embed_pair, LandmarkSpec, PipelineParams};
use crate::walks::{convergence_check, sample_cooccurrence, WalkConfig};

#[derive(Parser)]
#[command(
    name = "graphalign",
    version,
    about = "Align the nodes of two graphs via structural embeddings"
)]
struct Cli {
    /// Worker threads (0 = all available cores). Results are identical at
    /// any setting.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed two graphs into a shared space and write the embedding files.
    Embed(EmbedArgs),
    /// Match embeddings (computed here or loaded from files) across graphs.
    Align(AlignArgs),
    /// Run the noise-injection benchmark over a grid of settings.
    Bench(BenchArgs),
    /// Check that random-walk co-occurrence counts converge to the
    /// row-normalized similarity matrix.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AttrDistArg {
    Categorical,
    Euclidean,
    Cosine,
}

impl From<AttrDistArg> for AttrDistance {
    fn from(a: AttrDistArg) -> Self {
        match a {
            AttrDistArg::Categorical => AttrDistance::Categorical,
            AttrDistArg::Euclidean => AttrDistance::Euclidean,
            AttrDistArg::Cosine => AttrDistance::Cosine,
        }
    }
}

fn attr_dist_name(a: AttrDistArg) -> &'static str {
    match a {
        AttrDistArg::Categorical => "categorical",
        AttrDistArg::Euclidean => "euclidean",
        AttrDistArg::Cosine => "cosine",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Bin,
}

/// Hyperparameters shared by `embed` and `align`.
#[derive(Args, Debug, Clone)]
struct PipelineArgs {
    /// Maximum hop distance K.
    #[arg(long, default_value_t = 2)]
    k: usize,

    /// Discount factor for distant hops, in (0, 1].
    #[arg(long, default_value_t = 0.01)]
    delta: f64,

    /// Weight of the structural term.
    #[arg(long, default_value_t = 1.0)]
    gamma_s: f64,

    /// Weight of the attribute term.
    #[arg(long, default_value_t = 1.0)]
    gamma_a: f64,

    /// Landmark multiplier t in p = floor(t log2 n).
    #[arg(long, default_value_t = 10.0)]
    landmark_mult: f64,

    /// Explicit landmark count (overrides the multiplier rule).
    #[arg(long)]
    p: Option<usize>,

    /// Master seed; all randomness derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Relative singular-value cutoff for the pseudoinverse.
    #[arg(long, default_value_t = 1e-10)]
    rank_tol: f64,

    /// Attribute distance function.
    #[arg(long, value_enum, default_value_t = AttrDistArg::Categorical)]
    attr_dist: AttrDistArg,

    /// Sample landmarks per graph instead of over the combined node set.
    #[arg(long)]
    stratified_landmarks: bool,

    /// Largest embedding dimension served by the k-d tree; above it the
    /// index uses a parallel exact scan.
    #[arg(long, default_value_t = crate::align::DEFAULT_KDTREE_MAX_DIM)]
    kd_max_dim: usize,
}

impl PipelineArgs {
    fn to_params(&self) -> Result<PipelineParams> {
        if self.p == Some(0) {
            return Err(Error::InvalidArgument("--p must be at least 1".into()));
        }
        let params = PipelineParams {
            identity: crate::identity::IdentityParams {
                max_hops: self.k,
                discount: self.delta,
            },
            similarity: SimilarityParams {
                gamma_struct: self.gamma_s,
                gamma_attr: self.gamma_a,
                attr_distance: self.attr_dist.into(),
            },
            landmarks: match self.p {
                Some(p) => LandmarkSpec::Count(p),
                None => LandmarkSpec::Multiplier(self.landmark_mult),
            },
            rank_tolerance: self.rank_tol,
            stratified_landmarks: self.stratified_landmarks,
        };
        params.identity.validate()?;
        params.similarity.validate()?;
        Ok(params)
    }

    fn header_fragment(&self) -> String {
        let p = match self.p {
            Some(p) => p.to_string(),
            None => "auto".into(),
        };
        format!(
            "k={} delta={} gamma-s={} gamma-a={} landmark-mult={} p={} seed={} rank-tol={:e} attr-dist={} stratified={} kd-max-dim={}",
            self.k,
            self.delta,
            self.gamma_s,
            self.gamma_a,
            self.landmark_mult,
            p,
            self.seed,
            self.rank_tol,
            attr_dist_name(self.attr_dist),
            self.stratified_landmarks,
            self.kd_max_dim
        )
    }
}

#[derive(Args, Debug)]
struct EmbedArgs {
    /// Edge list of the first graph.
    #[arg(long, required = true)]
    graph1: PathBuf,

    /// Edge list of the second graph.
    #[arg(long, required = true)]
    graph2: PathBuf,

    /// Attribute CSV for the first graph.
    #[arg(long)]
    attrs1: Option<PathBuf>,

    /// Attribute CSV for the second graph.
    #[arg(long)]
    attrs2: Option<PathBuf>,

    /// Attribute column kinds, e.g. `cat:2,cat:29,real`.
    #[arg(long)]
    attr_kinds: Option<String>,

    /// Treat edge-list node ids as one-indexed.
    #[arg(long)]
    one_indexed: bool,

    /// Edge lists use arbitrary string labels (mapped in first-seen order;
    /// the mapping is written next to the embeddings).
    #[arg(long)]
    labels: bool,

    /// Also dump the combined identity matrix as CSV (debugging aid).
    #[arg(long)]
    write_identity: bool,

    /// Output directory.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,

    /// Embedding output format.
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,

    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct AlignArgs {
    /// Precomputed embedding file for graph 1 (CSV or binary).
    #[arg(long, conflicts_with = "graph1")]
    emb1: Option<PathBuf>,

    /// Precomputed embedding file for graph 2 (CSV or binary).
    #[arg(long, conflicts_with = "graph2")]
    emb2: Option<PathBuf>,

    /// Edge list of the first graph (embeddings are computed on the fly).
    #[arg(long)]
    graph1: Option<PathBuf>,

    /// Edge list of the second graph.
    #[arg(long)]
    graph2: Option<PathBuf>,

    /// Attribute CSV for the first graph.
    #[arg(long)]
    attrs1: Option<PathBuf>,

    /// Attribute CSV for the second graph.
    #[arg(long)]
    attrs2: Option<PathBuf>,

    /// Attribute column kinds, e.g. `cat:2,cat:29,real`.
    #[arg(long)]
    attr_kinds: Option<String>,

    /// Treat edge-list node ids as one-indexed.
    #[arg(long)]
    one_indexed: bool,

    /// Ground-truth file (`g1_node,g2_node`); prints accuracy when given.
    #[arg(long)]
    truth: Option<PathBuf>,

    /// Candidates per node in the soft alignment.
    #[arg(long, default_value_t = 1)]
    alpha: usize,

    /// Resolve conflicts greedily so no two nodes share a counterpart.
    #[arg(long)]
    one_to_one: bool,

    /// Output directory.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,

    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Flat key=value config file; explicit flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Base graph edge list (mutually exclusive with --er-n).
    #[arg(long)]
    graph1: Option<PathBuf>,

    /// Attribute CSV for the base graph.
    #[arg(long)]
    attrs1: Option<PathBuf>,

    /// Attribute column kinds for --attrs1.
    #[arg(long)]
    attr_kinds: Option<String>,

    /// Erdos-Renyi sizes to sweep, e.g. `10000,20000`.
    #[arg(long, value_delimiter = ',')]
    er_n: Option<Vec<usize>>,

    /// Average degree of generated graphs.
    #[arg(long)]
    er_deg: Option<f64>,

    /// Edge-removal probabilities, e.g. `0,0.01,0.05`.
    #[arg(long, value_delimiter = ',')]
    ps_grid: Option<Vec<f64>>,

    /// Attribute-noise probabilities.
    #[arg(long, value_delimiter = ',')]
    pa_grid: Option<Vec<f64>>,

    /// Trials per grid cell.
    #[arg(long)]
    trials: Option<usize>,

    /// Generate this many synthetic binary attributes per node.
    #[arg(long)]
    synthetic_attrs: Option<usize>,

    /// Candidates per node in the soft alignment.
    #[arg(long)]
    alpha: Option<usize>,

    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,

    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    gamma_s: Option<f64>,
    #[arg(long)]
    gamma_a: Option<f64>,
    #[arg(long)]
    landmark_mult: Option<f64>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rank_tol: Option<f64>,
    #[arg(long, value_enum)]
    attr_dist: Option<AttrDistArg>,
    #[arg(long)]
    kd_max_dim: Option<usize>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Node count of the similarity matrix.
    #[arg(long, default_value_t = 20)]
    n: usize,

    /// Average degree of the generated graph.
    #[arg(long, default_value_t = 4.0)]
    er_deg: f64,

    /// Walk counts per node to test.
    #[arg(long, value_delimiter = ',', default_values_t = vec![100usize, 1000, 10000])]
    m_grid: Vec<usize>,

    /// Independent repetitions.
    #[arg(long, default_value_t = 10)]
    oracle_seeds: usize,

    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    // A failure here just means a pool already exists (e.g. repeated calls
    // in tests); results do not depend on the pool size.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global();

    let outcome = match cli.command {
        Command::Embed(args) => cmd_embed(args),
        Command::Align(args) => cmd_align(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Oracle(args) => cmd_oracle(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn load_graph(
    path: &Path,
    one_indexed: bool,
    labels: bool,
) -> Result<(Graph, Option<Vec<String>>)> {
    let reader = open(path)?;
    if labels {
        let (g, map) = parse_edge_list_labeled(reader)?;
        Ok((g, Some(map)))
    } else {
        Ok((parse_edge_list(reader, one_indexed)?, None))
    }
}

fn parse_kinds(spec: &Option<String>) -> Result<Option<Vec<AttributeKind>>> {
    match spec {
        None => Ok(None),
        Some(s) => Ok(Some(AttributeKind::parse_list(s)?)),
    }
}

fn load_attr_pair(
    attrs1: &Option<PathBuf>,
    attrs2: &Option<PathBuf>,
    kinds: &Option<String>,
    g1: &Graph,
    g2: &Graph,
) -> Result<(Option<AttributeTable>, Option<AttributeTable>)> {
    match (attrs1, attrs2) {
        (None, None) => Ok((None, None)),
        (Some(p1), Some(p2)) => {
            let kinds = parse_kinds(kinds)?.ok_or_else(|| {
                Error::InvalidArgument(
                    "--attr-kinds is required when attribute files are given".into(),
                )
            })?;
            let t1 = parse_attributes(open(p1)?, g1, &kinds)?;
            let t2 = parse_attributes(open(p2)?, g2, &kinds)?;
            Ok((Some(t1), Some(t2)))
        }
        _ => Err(Error::InvalidArgument(
            "attribute files must be given for both graphs or neither".into(),
        )),
    }
}

fn write_labels(path: &Path, labels: &[String], header: &str) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# {header}").map_err(|e| Error::io(path, e))?;
    writeln!(w, "id,label").map_err(|e| Error::io(path, e))?;
    for (i, label) in labels.iter().enumerate() {
        writeln!(w, "{i},{label}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn cmd_embed(args: EmbedArgs) -> Result<()> {
    let params = args.pipeline.to_params()?;
    let (g1, labels1) = load_graph(&args.graph1, args.one_indexed, args.labels)?;
    let (g2, labels2) = load_graph(&args.graph2, args.one_indexed, args.labels)?;
    let (attrs1, attrs2) = load_attr_pair(&args.attrs1, &args.attrs2, &args.attr_kinds, &g1, &g2)?;

    let landmark_seed = derive_seed(args.pipeline.seed, 4);
    let pair = embed_pair(
        &g1,
        attrs1.as_ref(),
        &g2,
        attrs2.as_ref(),
        &params,
        landmark_seed,
    )?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let header = format!(
        "cmd=embed graph1={} graph2={} {} buckets={} landmarks={}",
        args.graph1.display(),
        args.graph2.display(),
        args.pipeline.header_fragment(),
        pair.bucket_count,
        pair.landmark_count
    );

    match args.format {
        FormatArg::Csv => {
            let p1 = args.out_dir.join("embeddings1.csv");
            io::write_embedding_csv(&mut create(&p1)?, pair.embeddings.first(), 1, &header)
                .map_err(|e| Error::io(&p1, e))?;
            let p2 = args.out_dir.join("embeddings2.csv");
            io::write_embedding_csv(&mut create(&p2)?, pair.embeddings.second(), 2, &header)
                .map_err(|e| Error::io(&p2, e))?;
        }
        FormatArg::Bin => {
            let p1 = args.out_dir.join("embeddings1.bin");
            io::write_embedding_binary(&mut create(&p1)?, pair.embeddings.first())
                .map_err(|e| Error::io(&p1, e))?;
            let p2 = args.out_dir.join("embeddings2.bin");
            io::write_embedding_binary(&mut create(&p2)?, pair.embeddings.second())
                .map_err(|e| Error::io(&p2, e))?;
        }
    }
    if let Some(labels) = labels1 {
        write_labels(&args.out_dir.join("labels1.csv"), &labels, &header)?;
    }
    if let Some(labels) = labels2 {
        write_labels(&args.out_dir.join("labels2.csv"), &labels, &header)?;
    }
    if args.write_identity {
        let b = bucket_count(g1.max_degree().max(g2.max_degree()));
        let id1 = node_identity(&g1, &params.identity, b)?;
        let id2 = node_identity(&g2, &params.identity, b)?;
        let combined = IdentityMatrix::stack(&id1, &id2)?;
        let path = args.out_dir.join("identity.csv");
        io::write_identity_csv(&mut create(&path)?, &combined, &header)
            .map_err(|e| Error::io(&path, e))?;
    }

    println!(
        "p={} buckets={} identity={:.3}s similarity={:.3}s embed={:.3}s",
        pair.landmark_count,
        pair.bucket_count,
        pair.timings.identity.as_secs_f64(),
        pair.timings.similarity.as_secs_f64(),
        pair.timings.embed.as_secs_f64()
    );
    Ok(())
}

/// Reads an embedding file, sniffing the binary magic.
fn read_embedding_any(path: &Path) -> Result<Array2<f64>> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 4];
    let n = file.read(&mut magic).map_err(|e| Error::io(path, e))?;
    let is_binary = n == 4 && &magic == io::EMBEDDING_MAGIC;
    drop(file);
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if is_binary {
        io::read_embedding_binary(BufReader::new(file))
    } else {
        io::read_embedding_csv(BufReader::new(file))
    }
}

fn cmd_align(args: AlignArgs) -> Result<()> {
    let (y1, y2) = match (&args.emb1, &args.emb2) {
        (Some(p1), Some(p2)) => (read_embedding_any(p1)?, read_embedding_any(p2)?),
        (None, None) => {
            let (g1_path, g2_path) = match (&args.graph1, &args.graph2) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::InvalidArgument(
                        "give either --emb1/--emb2 or --graph1/--graph2".into(),
                    ))
                }
            };
            let params = args.pipeline.to_params()?;
            let (g1, _) = load_graph(g1_path, args.one_indexed, false)?;
            let (g2, _) = load_graph(g2_path, args.one_indexed, false)?;
            let (attrs1, attrs2) =
                load_attr_pair(&args.attrs1, &args.attrs2, &args.attr_kinds, &g1, &g2)?;
            let pair = embed_pair(
                &g1,
                attrs1.as_ref(),
                &g2,
                attrs2.as_ref(),
                &params,
                derive_seed(args.pipeline.seed, 4),
            )?;
            (
                pair.embeddings.first().to_owned(),
                pair.embeddings.second().to_owned(),
            )
        }
        _ => {
            return Err(Error::InvalidArgument(
                "give both --emb1 and --emb2, or neither".into(),
            ))
        }
    };

    let result = align_with(y1.view(), y2.view(), args.alpha, args.pipeline.kd_max_dim)?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let header = format!(
        "cmd=align alpha={} one-to-one={} {}",
        args.alpha,
        args.one_to_one,
        args.pipeline.header_fragment()
    );
    let soft_path = args.out_dir.join("alignment_soft.csv");
    io::write_soft_alignment_csv(&mut create(&soft_path)?, &result, &header)
        .map_err(|e| Error::io(&soft_path, e))?;

    let hard_path = args.out_dir.join("alignment_hard.csv");
    let one_to_one = args.one_to_one.then(|| result.one_to_one());
    match &one_to_one {
        Some(map) => {
            io::write_hard_map_csv(
                &mut create(&hard_path)?,
                map.iter().copied().enumerate(),
                &header,
            )
            .map_err(|e| Error::io(&hard_path, e))?;
        }
        None => {
            io::write_hard_map_csv(
                &mut create(&hard_path)?,
                result.hard_map().into_iter().map(Some).enumerate(),
                &header,
            )
            .map_err(|e| Error::io(&hard_path, e))?;
        }
    }

    if let Some(truth_path) = &args.truth {
        let truth = io::read_ground_truth(open(truth_path)?)?;
        if truth.node_count() != result.node_count() {
            return Err(Error::DimensionMismatch(format!(
                "ground truth covers {} nodes, alignment {}",
                truth.node_count(),
                result.node_count()
            )));
        }
        let acc = match &one_to_one {
            Some(map) => accuracy_partial(map, &truth),
            None => accuracy(&result.hard_map(), &truth),
        };
        let top = top_alpha_accuracy(&result, &truth, args.alpha)?;
        println!("accuracy {acc}");
        println!("top-{} accuracy {top}", args.alpha);
    }
    Ok(())
}

/// Resolved bench settings after merging defaults, the config file, and
/// explicit flags.
#[derive(Debug, Clone)]
struct BenchSettings {
    graph1: Option<PathBuf>,
    attrs1: Option<PathBuf>,
    attr_kinds: Option<String>,
    er_n: Vec<usize>,
    er_deg: f64,
    ps_grid: Vec<f64>,
    pa_grid: Vec<f64>,
    trials: usize,
    synthetic_attrs: usize,
    alpha: usize,
    out_dir: PathBuf,
    k: usize,
    delta: f64,
    gamma_s: f64,
    gamma_a: f64,
    landmark_mult: f64,
    p: Option<usize>,
    seed: u64,
    rank_tol: f64,
    attr_dist: AttrDistArg,
    kd_max_dim: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            graph1: None,
            attrs1: None,
            attr_kinds: None,
            er_n: vec![1000],
            er_deg: 10.0,
            ps_grid: vec![0.0],
            pa_grid: vec![0.0],
            trials: 5,
            synthetic_attrs: 0,
            alpha: 1,
            out_dir: PathBuf::from("."),
            k: 2,
            delta: 0.01,
            gamma_s: 1.0,
            gamma_a: 1.0,
            landmark_mult: 10.0,
            p: None,
            seed: 0,
            rank_tol: 1e-10,
            attr_dist: AttrDistArg::Categorical,
            kd_max_dim: crate::align::DEFAULT_KDTREE_MAX_DIM,
        }
    }
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|_| Error::InvalidArgument(format!("config key {key}: bad value {v:?}")))
        })
        .collect()
}

/// Parses the flat `key = value` config format; `#` starts a comment.
fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(idx + 1, e.to_string()))?;
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(idx + 1, "expected `key = value`"));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

impl BenchSettings {
    fn apply_config(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        let bad = |key: &str, value: &str| {
            Error::InvalidArgument(format!("config key {key}: bad value {value:?}"))
        };
        for (key, value) in map {
            match key.as_str() {
                "graph1" => self.graph1 = Some(PathBuf::from(value)),
                "attrs1" => self.attrs1 = Some(PathBuf::from(value)),
                "attr-kinds" => self.attr_kinds = Some(value.clone()),
                "er-n" => self.er_n = parse_list(value, key)?,
                "er-deg" => self.er_deg = value.parse().map_err(|_| bad(key, value))?,
                "ps-grid" => self.ps_grid = parse_list(value, key)?,
                "pa-grid" => self.pa_grid = parse_list(value, key)?,
                "trials" => self.trials = value.parse().map_err(|_| bad(key, value))?,
                "synthetic-attrs" => {
                    self.synthetic_attrs = value.parse().map_err(|_| bad(key, value))?
                }
                "alpha" => self.alpha = value.parse().map_err(|_| bad(key, value))?,
                "out-dir" => self.out_dir = PathBuf::from(value),
                "k" => self.k = value.parse().map_err(|_| bad(key, value))?,
                "delta" => self.delta = value.parse().map_err(|_| bad(key, value))?,
                "gamma-s" => self.gamma_s = value.parse().map_err(|_| bad(key, value))?,
                "gamma-a" => self.gamma_a = value.parse().map_err(|_| bad(key, value))?,
                "landmark-mult" => {
                    self.landmark_mult = value.parse().map_err(|_| bad(key, value))?
                }
                "p" => self.p = Some(value.parse().map_err(|_| bad(key, value))?),
                "seed" => self.seed = value.parse().map_err(|_| bad(key, value))?,
                "rank-tol" => self.rank_tol = value.parse().map_err(|_| bad(key, value))?,
                "kd-max-dim" => self.kd_max_dim = value.parse().map_err(|_| bad(key, value))?,
                "attr-dist" => {
                    self.attr_dist = match value.as_str() {
                        "categorical" => AttrDistArg::Categorical,
                        "euclidean" => AttrDistArg::Euclidean,
                        "cosine" => AttrDistArg::Cosine,
                        _ => return Err(bad(key, value)),
                    }
                }
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown config key {key:?}"
                    )))
                }
            }
        }
        Ok(())
    }

    fn apply_flags(&mut self, args: &BenchArgs) {
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = &args.$field {
                    self.$field = v.clone();
                }
            };
        }
        if args.graph1.is_some() {
            self.graph1 = args.graph1.clone();
        }
        if args.attrs1.is_some() {
            self.attrs1 = args.attrs1.clone();
        }
        if args.attr_kinds.is_some() {
            self.attr_kinds = args.attr_kinds.clone();
        }
        take!(er_n);
        take!(er_deg);
        take!(ps_grid);
        take!(pa_grid);
        take!(trials);
        take!(synthetic_attrs);
        take!(alpha);
        take!(out_dir);
        take!(k);
        take!(delta);
        take!(gamma_s);
        take!(gamma_a);
        take!(landmark_mult);
        if args.p.is_some() {
            self.p = args.p;
        }
        take!(seed);
        take!(rank_tol);
        take!(attr_dist);
        take!(kd_max_dim);
    }

    fn pipeline(&self) -> Result<PipelineParams> {
        let params = PipelineParams {
            identity: crate::identity::IdentityParams {
                max_hops: self.k,
                discount: self.delta,
            },
            similarity: SimilarityParams {
                gamma_struct: self.gamma_s,
                gamma_attr: self.gamma_a,
                attr_distance: self.attr_dist.into(),
            },
            landmarks: match self.p {
                Some(p) => LandmarkSpec::Count(p),
                None => LandmarkSpec::Multiplier(self.landmark_mult),
            },
            rank_tolerance: self.rank_tol,
            stratified_landmarks: false,
        };
        params.identity.validate()?;
        params.similarity.validate()?;
        Ok(params)
    }

    fn header(&self) -> String {
        let graph = match &self.graph1 {
            Some(path) => format!("graph1={}", path.display()),
            None => format!(
                "er-n={} er-deg={}",
                self.er_n
                    .iter()
                    .map(|n| n.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
                self.er_deg
            ),
        };
        let p = match self.p {
            Some(p) => p.to_string(),
            None => "auto".into(),
        };
        format!(
            "cmd=bench {graph} ps-grid={} pa-grid={} trials={} synthetic-attrs={} alpha={} k={} delta={} gamma-s={} gamma-a={} landmark-mult={} p={} seed={} rank-tol={:e} attr-dist={} kd-max-dim={}",
            join_floats(&self.ps_grid),
            join_floats(&self.pa_grid),
            self.trials,
            self.synthetic_attrs,
            self.alpha,
            self.k,
            self.delta,
            self.gamma_s,
            self.gamma_a,
            self.landmark_mult,
            p,
            self.seed,
            self.rank_tol,
            attr_dist_name(self.attr_dist),
            self.kd_max_dim
        )
    }
}

fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// One benchmark grid cell and its report.
struct BenchCell {
    n: usize,
    avg_degree: f64,
    ps: f64,
    pa: f64,
    report: ExperimentReport,
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let mut settings = BenchSettings::default();
    if let Some(path) = &args.config {
        let map = parse_config_file(path)?;
        settings.apply_config(&map)?;
    }
    settings.apply_flags(&args);

    if settings.graph1.is_some() && args.er_n.is_some() {
        return Err(Error::InvalidArgument(
            "--graph1 and --er-n are mutually exclusive".into(),
        ));
    }
    let pipeline = settings.pipeline()?;

    let sources: Vec<GraphSource> = match &settings.graph1 {
        Some(path) => vec![GraphSource::File(path.clone())],
        None => settings
            .er_n
            .iter()
            .map(|&n| GraphSource::Er {
                n,
                avg_degree: settings.er_deg,
            })
            .collect(),
    };
    let attr_source = match (&settings.attrs1, settings.synthetic_attrs) {
        (Some(path), _) => {
            let kinds = parse_kinds(&settings.attr_kinds)?.ok_or_else(|| {
                Error::InvalidArgument("attr-kinds is required with attrs1".into())
            })?;
            AttrSource::File {
                path: path.clone(),
                kinds,
            }
        }
        (None, 0) => AttrSource::None,
        (None, count) => AttrSource::SyntheticBinary { count },
    };

    let mut cells: Vec<BenchCell> = Vec::new();
    for source in &sources {
        let mut config = ExperimentConfig::new(source.clone());
        config.attrs = attr_source.clone();
        config.trials = settings.trials;
        config.seed = settings.seed;
        config.pipeline = pipeline.clone();
        config.alpha = settings.alpha;
        config.max_kd_dim = settings.kd_max_dim;

        let (base, base_attrs) = crate::harness::load_base(&config)?;
        for &ps in &settings.ps_grid {
            for &pa in &settings.pa_grid {
                config.structural_noise = ps;
                config.attribute_noise = pa;
                let report = run_experiment_on(&base, base_attrs.as_ref(), &config)?;
                println!(
                    "bench n={} ps={ps} pa={pa}: accuracy {:.4} +/- {:.4} (top-5 {:.4}, top-10 {:.4}, median total {:.2}s)",
                    base.node_count(),
                    report.mean_accuracy,
                    report.stdev_accuracy,
                    report.top_alpha_summary.get(1).map(|t| t.1).unwrap_or(f64::NAN),
                    report.top_alpha_summary.get(2).map(|t| t.1).unwrap_or(f64::NAN),
                    report.median_total_seconds()
                );
                cells.push(BenchCell {
                    n: base.node_count(),
                    avg_degree: 2.0 * base.edge_count() as f64 / base.node_count() as f64,
                    ps,
                    pa,
                    report,
                });
            }
        }
    }

    std::fs::create_dir_all(&settings.out_dir).map_err(|e| Error::io(&settings.out_dir, e))?;
    let header = settings.header();
    write_bench_report(&settings.out_dir.join("report.csv"), &cells, &header)?;
    write_bench_summary(&settings.out_dir.join("summary.csv"), &cells, &header)?;
    write_bench_timings(&settings.out_dir.join("timings.csv"), &cells, &header)?;

    // Scalability readout: time ratios between consecutive sizes at the
    // same noise setting.
    if sources.len() > 1 {
        for &ps in &settings.ps_grid {
            for &pa in &settings.pa_grid {
                let series: Vec<&BenchCell> =
                    cells.iter().filter(|c| c.ps == ps && c.pa == pa).collect();
                for pair in series.windows(2) {
                    let t0 = pair[0].report.median_total_seconds();
                    let t1 = pair[1].report.median_total_seconds();
                    let ratio = t1 / t0;
                    let verdict = if ratio >= 4.0 {
                        "WARNING: super-quadratic"
                    } else {
                        "sub-quadratic"
                    };
                    println!(
                        "scaling ps={ps} pa={pa}: n={} -> n={}: median time {:.2}s -> {:.2}s, ratio {:.2} ({verdict})",
                        pair[0].n, pair[1].n, t0, t1, ratio
                    );
                }
            }
        }
    }
    Ok(())
}

fn write_bench_report(path: &Path, cells: &[BenchCell], header: &str) -> Result<()> {
    let mut w = create(path)?;
    let mut go = || -> std::io::Result<()> {
        writeln!(w, "# {header}")?;
        writeln!(
            w,
            "n,avg_degree,ps,pa,trial,trial_seed,landmarks,buckets,accuracy,top1,top5,top10"
        )?;
        for cell in cells {
            for t in &cell.report.trials {
                let top = |i: usize| t.top_alpha.get(i).map(|x| x.1).unwrap_or(f64::NAN);
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    cell.n,
                    cell.avg_degree,
                    cell.ps,
                    cell.pa,
                    t.trial,
                    t.trial_seed,
                    t.landmark_count,
                    t.bucket_count,
                    t.accuracy,
                    top(0),
                    top(1),
                    top(2)
                )?;
            }
        }
        w.flush()
    };
    go().map_err(|e| Error::io(path, e))
}

fn write_bench_summary(path: &Path, cells: &[BenchCell], header: &str) -> Result<()> {
    let mut w = create(path)?;
    let mut go = || -> std::io::Result<()> {
        writeln!(w, "# {header}")?;
        writeln!(
            w,
            "n,avg_degree,ps,pa,trials,accuracy_mean,accuracy_stdev,top1_mean,top1_stdev,top5_mean,top5_stdev,top10_mean,top10_stdev"
        )?;
        for cell in cells {
            let s = |i: usize| {
                cell.report
                    .top_alpha_summary
                    .get(i)
                    .map(|x| (x.1, x.2))
                    .unwrap_or((f64::NAN, f64::NAN))
            };
            let (t1m, t1s) = s(0);
            let (t5m, t5s) = s(1);
            let (t10m, t10s) = s(2);
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                cell.n,
                cell.avg_degree,
                cell.ps,
                cell.pa,
                cell.report.trials.len(),
                cell.report.mean_accuracy,
                cell.report.stdev_accuracy,
                t1m,
                t1s,
                t5m,
                t5s,
                t10m,
                t10s
            )?;
        }
        w.flush()
    };
    go().map_err(|e| Error::io(path, e))
}

fn write_bench_timings(path: &Path, cells: &[BenchCell], header: &str) -> Result<()> {
    let mut w = create(path)?;
    let mut go = || -> std::io::Result<()> {
        writeln!(w, "# {header}")?;
        writeln!(
            w,
            "n,avg_degree,ps,pa,trial,identity_s,similarity_s,embed_s,align_s,total_s"
        )?;
        for cell in cells {
            for t in &cell.report.trials {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{}",
                    cell.n,
                    cell.avg_degree,
                    cell.ps,
                    cell.pa,
                    t.trial,
                    t.timings.identity.as_secs_f64(),
                    t.timings.similarity.as_secs_f64(),
                    t.timings.embed.as_secs_f64(),
                    t.timings.align.as_secs_f64(),
                    t.timings.total().as_secs_f64()
                )?;
            }
        }
        w.flush()
    };
    go().map_err(|e| Error::io(path, e))
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    if args.n == 0 {
        return Err(Error::InvalidArgument("--n must be at least 1".into()));
    }
    if args.m_grid.is_empty() || args.m_grid.contains(&0) {
        return Err(Error::InvalidArgument(
            "--m-grid needs positive walk counts".into(),
        ));
    }
    if args.oracle_seeds == 0 {
        return Err(Error::InvalidArgument("--oracle-seeds must be >= 1".into()));
    }

    // Similarity matrix of a random graph (1x1 when n = 1, which is the
    // degenerate all-mass-on-self case).
    let s = if args.n == 1 {
        Array2::from_elem((1, 1), 1.0)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(args.seed, 0x42));
        let g = generate_er(args.n, args.er_deg, &mut rng)?;
        let ident = node_identity(
            &g,
            &crate::identity::IdentityParams::default(),
            bucket_count(g.max_degree()),
        )?;
        crate::embed::dense_similarity(
            &ident,
            None,
            &SimilarityParams {
                gamma_struct: 1.0,
                gamma_attr: 0.0,
                attr_distance: AttrDistance::Categorical,
            },
            args.n,
        )?
    };

    println!(
        "# cmd=oracle n={} er-deg={} m-grid={} seeds={} seed={}",
        args.n,
        args.er_deg,
        args.m_grid
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join(","),
        args.oracle_seeds,
        args.seed
    );
    print!("seed");
    for m in &args.m_grid {
        print!(",m{m}");
    }
    println!();

    let mut sums = vec![0.0; args.m_grid.len()];
    for i in 0..args.oracle_seeds {
        let walk_seed = derive_seed(args.seed, i as u64);
        print!("{i}");
        for (j, &m) in args.m_grid.iter().enumerate() {
            let config = WalkConfig {
                walks_per_node: m,
                seed: walk_seed,
            };
            let counts = sample_cooccurrence(s.view(), &config)?;
            let dev = convergence_check(counts.view(), s.view(), m)?;
            sums[j] += dev;
            print!(",{dev}");
        }
        println!();
    }
    print!("mean");
    for sum in &sums {
        print!(",{}", sum / args.oracle_seeds as f64);
    }
    println!();
    Ok(())
}
