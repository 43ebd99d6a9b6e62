//! End-to-end tests of the `graphalign` binary.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use graphalign::graph::Graph;
use graphalign::harness::{generate_er, permute_with, random_permutation};
use graphalign::identity::{bucket_count, node_identity, IdentityParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_graphalign"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_edge_list(path: &Path, g: &Graph) {
    let mut buf = Vec::new();
    g.write_edge_list(&mut buf).unwrap();
    fs::write(path, buf).unwrap();
}

/// Parses an embedding CSV into rows indexed by node id.
fn parse_embedding(path: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    let mut rows: HashMap<usize, Vec<f64>> = HashMap::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("node,") || line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let node: usize = fields.next().unwrap().parse().unwrap();
        let _graph = fields.next().unwrap();
        rows.insert(node, fields.map(|f| f.parse().unwrap()).collect());
    }
    (0..rows.len()).map(|i| rows.remove(&i).unwrap()).collect()
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("graphalign-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn embed_same_graph_twice_gives_equal_embeddings() {
    let dir = temp_dir("embed-eq");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = generate_er(150, 6.0, &mut rng).unwrap();
    let edges = dir.join("g.edges");
    write_edge_list(&edges, &g);

    let out_dir = dir.join("out");
    let out = run(&[
        "embed",
        "--graph1",
        edges.to_str().unwrap(),
        "--graph2",
        edges.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("p="), "stdout: {}", stdout(&out));

    let y1 = parse_embedding(&out_dir.join("embeddings1.csv"));
    let y2 = parse_embedding(&out_dir.join("embeddings2.csv"));
    assert_eq!(y1.len(), 150);
    let mut max_dist = 0.0f64;
    for (a, b) in y1.iter().zip(&y2) {
        let d: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        max_dist = max_dist.max(d);
    }
    assert!(max_dist <= 1e-6, "max row distance {max_dist}");
}

#[test]
fn missing_file_exits_2_and_names_the_path() {
    let out = run(&[
        "embed",
        "--graph1",
        "definitely-not-here.edges",
        "--graph2",
        "also-missing.edges",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("definitely-not-here.edges"));
}

#[test]
fn p_zero_is_a_usage_error() {
    let dir = temp_dir("p0");
    let edges = dir.join("g.edges");
    fs::write(&edges, "0 1\n1 2\n").unwrap();
    let out = run(&[
        "embed",
        "--graph1",
        edges.to_str().unwrap(),
        "--graph2",
        edges.to_str().unwrap(),
        "--p",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn align_with_truth_reports_perfect_topalpha_at_twin_bound() {
    let dir = temp_dir("align-truth");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g1 = generate_er(120, 6.0, &mut rng).unwrap();
    let truth = random_permutation(120, &mut rng);
    let (g2, _) = permute_with(&g1, None, &truth).unwrap();

    // Largest class of identical identity rows bounds how many candidates
    // a node needs before its true counterpart must appear.
    let params = IdentityParams::default();
    let b = bucket_count(g1.max_degree());
    let ident = node_identity(&g1, &params, b).unwrap();
    let mut classes: HashMap<Vec<u64>, usize> = HashMap::new();
    for u in 0..120 {
        let key: Vec<u64> = ident.row(u).iter().map(|x| x.to_bits()).collect();
        *classes.entry(key).or_insert(0) += 1;
    }
    let max_class = *classes.values().max().unwrap();

    let g1_path = dir.join("g1.edges");
    let g2_path = dir.join("g2.edges");
    write_edge_list(&g1_path, &g1);
    write_edge_list(&g2_path, &g2);
    let truth_path = dir.join("truth.csv");
    let mut text = String::from("g1_node,g2_node\n");
    for u in 0..120 {
        text.push_str(&format!("{u},{}\n", truth.target(u)));
    }
    fs::write(&truth_path, text).unwrap();

    let out_dir = dir.join("out");
    let out = run(&[
        "align",
        "--graph1",
        g1_path.to_str().unwrap(),
        "--graph2",
        g2_path.to_str().unwrap(),
        "--truth",
        truth_path.to_str().unwrap(),
        "--alpha",
        &max_class.to_string(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let top_line = text
        .lines()
        .find(|l| l.starts_with(&format!("top-{max_class} accuracy")))
        .expect("top-alpha line printed");
    assert!(
        top_line.ends_with(" 1"),
        "expected perfect top-alpha accuracy, got {top_line:?}"
    );
    assert!(out_dir.join("alignment_soft.csv").exists());
    assert!(out_dir.join("alignment_hard.csv").exists());
}

#[test]
fn align_without_truth_omits_metrics() {
    let dir = temp_dir("align-notruth");
    let edges = dir.join("g.edges");
    fs::write(&edges, "0 1\n1 2\n2 3\n3 0\n0 2\n").unwrap();
    let out = run(&[
        "align",
        "--graph1",
        edges.to_str().unwrap(),
        "--graph2",
        edges.to_str().unwrap(),
        "--out-dir",
        dir.join("out").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(!stdout(&out).contains("accuracy"));
}

#[test]
fn alpha_exceeding_target_size_is_a_usage_error() {
    let dir = temp_dir("align-alpha");
    let edges = dir.join("g.edges");
    fs::write(&edges, "0 1\n1 2\n2 3\n3 0\n0 2\n").unwrap();
    let out = run(&[
        "align",
        "--graph1",
        edges.to_str().unwrap(),
        "--graph2",
        edges.to_str().unwrap(),
        "--alpha",
        "40",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn binary_embeddings_feed_back_into_align() {
    let dir = temp_dir("binfmt");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = generate_er(80, 5.0, &mut rng).unwrap();
    let edges = dir.join("g.edges");
    write_edge_list(&edges, &g);

    let out_dir = dir.join("out");
    let out = run(&[
        "embed",
        "--graph1",
        edges.to_str().unwrap(),
        "--graph2",
        edges.to_str().unwrap(),
        "--format",
        "bin",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let truth_path = dir.join("truth.csv");
    let mut text = String::new();
    for u in 0..80 {
        text.push_str(&format!("{u},{u}\n"));
    }
    fs::write(&truth_path, text).unwrap();

    let out = run(&[
        "align",
        "--emb1",
        out_dir.join("embeddings1.bin").to_str().unwrap(),
        "--emb2",
        out_dir.join("embeddings2.bin").to_str().unwrap(),
        "--truth",
        truth_path.to_str().unwrap(),
        "--alpha",
        "5",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("top-5 accuracy"));
}

#[test]
fn mismatched_embedding_dimensions_exit_2() {
    let dir = temp_dir("dim-mismatch");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = generate_er(60, 5.0, &mut rng).unwrap();
    let edges = dir.join("g.edges");
    write_edge_list(&edges, &g);

    for (p, sub) in [("6", "a"), ("7", "b")] {
        let out = run(&[
            "embed",
            "--graph1",
            edges.to_str().unwrap(),
            "--graph2",
            edges.to_str().unwrap(),
            "--p",
            p,
            "--out-dir",
            dir.join(sub).to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    let out = run(&[
        "align",
        "--emb1",
        dir.join("a/embeddings1.csv").to_str().unwrap(),
        "--emb2",
        dir.join("b/embeddings2.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("dimension"));
}

#[test]
fn bench_reports_are_byte_identical_across_runs_and_threads() {
    let dir = temp_dir("bench-det");
    let common = [
        "bench",
        "--er-n",
        "250",
        "--er-deg",
        "8",
        "--ps-grid",
        "0,0.03",
        "--trials",
        "2",
        "--seed",
        "123",
    ];
    let d1 = dir.join("r1");
    let d2 = dir.join("r2");
    let out = bin()
        .args(common)
        .args(["--out-dir", d1.to_str().unwrap(), "--threads", "1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let out = bin()
        .args(common)
        .args(["--out-dir", d2.to_str().unwrap(), "--threads", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    for file in ["report.csv", "summary.csv"] {
        let a = fs::read(d1.join(file)).unwrap();
        let b = fs::read(d2.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs across runs");
    }
}

#[test]
fn bench_grid_row_counts_add_up() {
    let dir = temp_dir("bench-grid");
    let out = run(&[
        "bench",
        "--er-n",
        "200",
        "--ps-grid",
        "0,0.01,0.05",
        "--trials",
        "5",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let report = fs::read_to_string(dir.join("report.csv")).unwrap();
    let data_rows = report
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("n,"))
        .count();
    assert_eq!(data_rows, 15, "3 grid cells x 5 trials");
    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    let summary_rows = summary
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("n,"))
        .count();
    assert_eq!(summary_rows, 3);
}

#[test]
fn bench_config_file_merges_with_flag_overrides() {
    let dir = temp_dir("bench-config");
    let config_path = dir.join("exp.cfg");
    fs::write(
        &config_path,
        "# benchmark settings\ner-n = 200\ner-deg = 6\ntrials = 3\nps-grid = 0.02\nseed = 9\n",
    )
    .unwrap();
    let out = run(&[
        "bench",
        "--config",
        config_path.to_str().unwrap(),
        "--trials",
        "2",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let report = fs::read_to_string(dir.join("report.csv")).unwrap();
    let header = report.lines().next().unwrap();
    assert!(header.contains("trials=2"), "flag should override config");
    assert!(header.contains("er-n=200"), "config value should apply");
    assert!(header.contains("seed=9"));
    let data_rows = report
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("n,"))
        .count();
    assert_eq!(data_rows, 2);
}

#[test]
fn oracle_table_shape_and_degenerate_cases() {
    let out = run(&[
        "oracle",
        "--n",
        "1",
        "--m-grid",
        "50",
        "--oracle-seeds",
        "2",
    ]);
    assert!(out.status.success());
    for line in stdout(&out)
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("seed") && !l.is_empty())
    {
        let dev: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(dev, 0.0, "single-node walks are deterministic");
    }

    let out = run(&[
        "oracle",
        "--n",
        "12",
        "--er-deg",
        "3",
        "--m-grid",
        "1,100",
        "--oracle-seeds",
        "2",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mean_line = text.lines().last().unwrap();
    assert!(mean_line.starts_with("mean,"));
    let devs: Vec<f64> = mean_line
        .split(',')
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(devs[0] <= 1.0, "m=1 deviations are bounded by 1");
}

#[test]
fn bench_defaults_round_trip_into_the_header() {
    let dir = temp_dir("bench-defaults");
    let out = run(&[
        "bench",
        "--er-n",
        "150",
        "--trials",
        "1",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let report = fs::read_to_string(dir.join("report.csv")).unwrap();
    let header = report.lines().next().unwrap();
    for expected in [
        "k=2",
        "delta=0.01",
        "gamma-s=1",
        "gamma-a=1",
        "landmark-mult=10",
        "p=auto",
        "alpha=1",
        "seed=0",
    ] {
        assert!(
            header.contains(expected),
            "header missing {expected}: {header}"
        );
    }
}

#[test]
fn one_to_one_mode_writes_an_injective_map() {
    let dir = temp_dir("one-to-one");
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let g = generate_er(90, 5.0, &mut rng).unwrap();
    let edges = dir.join("g.edges");
    write_edge_list(&edges, &g);
    let truth_path = dir.join("truth.csv");
    let mut text = String::new();
    for u in 0..90 {
        text.push_str(&format!("{u},{u}\n"));
    }
    fs::write(&truth_path, text).unwrap();

    let out_dir = dir.join("out");
    let out = run(&[
        "align",
        "--graph1",
        edges.to_str().unwrap(),
        "--graph2",
        edges.to_str().unwrap(),
        "--alpha",
        "3",
        "--one-to-one",
        "--truth",
        truth_path.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let hard = fs::read_to_string(out_dir.join("alignment_hard.csv")).unwrap();
    let mut seen = std::collections::HashSet::new();
    for line in hard
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("g1_node"))
    {
        let v: usize = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(seen.insert(v), "target {v} assigned twice");
    }
    assert!(stdout(&out).contains("accuracy"));
}

#[test]
fn embed_outputs_are_byte_identical_across_invocations() {
    let dir = temp_dir("embed-det");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = generate_er(100, 5.0, &mut rng).unwrap();
    let edges = dir.join("g.edges");
    write_edge_list(&edges, &g);

    for sub in ["a", "b"] {
        let out = run(&[
            "embed",
            "--graph1",
            edges.to_str().unwrap(),
            "--graph2",
            edges.to_str().unwrap(),
            "--seed",
            "99",
            "--write-identity",
            "--out-dir",
            dir.join(sub).to_str().unwrap(),
        ]);
        assert!(out.status.success(), "stderr: {}", stderr(&out));
    }
    for file in ["embeddings1.csv", "embeddings2.csv", "identity.csv"] {
        let a = fs::read(dir.join("a").join(file)).unwrap();
        let b = fs::read(dir.join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs across identical invocations");
    }
    let identity = fs::read_to_string(dir.join("a/identity.csv")).unwrap();
    assert!(identity.lines().any(|l| l.starts_with("node,b0")));
}

#[test]
fn oracle_default_run_shrinks_across_decades_for_most_seeds() {
    let out = run(&["oracle"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let mut monotone = 0;
    let mut seeds = 0;
    for line in text.lines() {
        let mut fields = line.split(',');
        let first = fields.next().unwrap();
        if first.parse::<usize>().is_err() {
            continue; // header, comment, or the mean row
        }
        seeds += 1;
        let devs: Vec<f64> = fields.map(|v| v.parse().unwrap()).collect();
        if devs.windows(2).all(|w| w[1] < w[0]) {
            monotone += 1;
        }
    }
    assert_eq!(seeds, 10);
    assert!(
        monotone >= 9,
        "only {monotone}/10 seeds decrease monotonically across decades"
    );
}

#[test]
fn labeled_edge_lists_round_trip_through_embed() {
    let dir = temp_dir("labels");
    let edges = dir.join("g.edges");
    fs::write(
        &edges,
        "alice bob\nbob carol\ncarol dave\ndave alice\nalice carol\n",
    )
    .unwrap();
    let out_dir = dir.join("out");
    let out = run(&[
        "embed",
        "--graph1",
        edges.to_str().unwrap(),
        "--graph2",
        edges.to_str().unwrap(),
        "--labels",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let labels = fs::read_to_string(out_dir.join("labels1.csv")).unwrap();
    assert!(labels.contains("0,alice"));
    assert!(labels.contains("2,carol"));
}
