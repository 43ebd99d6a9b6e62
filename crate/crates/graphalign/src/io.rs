//! Readers and writers for the on-disk formats: embeddings (CSV and a
//! compact binary format), alignments, identity matrices, and ground-truth
//! maps.
//!
//! Text outputs start with `#` comment lines recording the configuration
//! that produced them. The binary embedding format is fixed: magic bytes
//! `XNMF`, then `n` and `p` as little-endian u64, then `n * p` row-major
//! little-endian f64 values.

use std::io::{BufRead, Read, Write};

use ndarray::{Array2, ArrayView2};

use crate::align::AlignmentResult;
use crate::error::{Error, Result};
use crate::harness::GroundTruth;
use crate::identity::IdentityMatrix;

/// Magic bytes of the binary embedding format.
pub const EMBEDDING_MAGIC: &[u8; 4] = b"XNMF";

fn write_header(w: &mut impl Write, header: &str) -> std::io::Result<()> {
    if !header.is_empty() {
        writeln!(w, "# {header}")?;
    }
    Ok(())
}

/// Writes embedding rows as CSV: `node,graph,y0,...,y_{p-1}`.
pub fn write_embedding_csv(
    w: &mut impl Write,
    rows: ArrayView2<'_, f64>,
    graph_tag: u8,
    header: &str,
) -> std::io::Result<()> {
    write_header(w, header)?;
    write!(w, "node,graph")?;
    for j in 0..rows.ncols() {
        write!(w, ",y{j}")?;
    }
    writeln!(w)?;
    for (i, row) in rows.rows().into_iter().enumerate() {
        write!(w, "{i},{graph_tag}")?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()
}

/// Reads the CSV embedding format back into a dense matrix. Rows may appear
/// in any order but must cover `0..n` exactly.
pub fn read_embedding_csv(reader: impl BufRead) -> Result<Array2<f64>> {
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut saw_header = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::parse(line_no, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if !line.starts_with("node,graph") {
                return Err(Error::parse(line_no, "expected header `node,graph,y0,...`"));
            }
            saw_header = true;
            continue;
        }
        let mut fields = line.split(',');
        let node: usize = fields
            .next()
            .unwrap()
            .parse()
            .map_err(|_| Error::parse(line_no, "invalid node id"))?;
        let _graph = fields
            .next()
            .ok_or_else(|| Error::parse(line_no, "missing graph column"))?;
        let values: Vec<f64> = fields
            .map(|f| {
                f.trim()
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("invalid value {f:?}")))
            })
            .collect::<Result<_>>()?;
        if values.is_empty() {
            return Err(Error::parse(line_no, "row has no embedding values"));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::parse(line_no, "inconsistent embedding dimension"))
            }
            _ => {}
        }
        rows.push((node, values));
    }
    let n = rows.len();
    let p = dim.ok_or_else(|| Error::InvalidArgument("embedding file has no rows".into()))?;
    let mut out = Array2::zeros((n, p));
    let mut filled = vec![false; n];
    for (node, values) in rows {
        if node >= n || filled[node] {
            return Err(Error::InvalidArgument(format!(
                "embedding rows must cover node ids 0..{n} exactly (bad id {node})"
            )));
        }
        filled[node] = true;
        for (j, v) in values.into_iter().enumerate() {
            out[[node, j]] = v;
        }
    }
    Ok(out)
}

/// Writes the binary embedding format.
pub fn write_embedding_binary(
    w: &mut impl Write,
    rows: ArrayView2<'_, f64>,
) -> std::io::Result<()> {
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_all(&(rows.nrows() as u64).to_le_bytes())?;
    w.write_all(&(rows.ncols() as u64).to_le_bytes())?;
    for row in rows.rows() {
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

/// Reads the binary embedding format.
pub fn read_embedding_binary(mut r: impl Read) -> Result<Array2<f64>> {
    let bad = |msg: &str| Error::InvalidArgument(format!("binary embedding: {msg}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| bad("truncated magic"))?;
    if &magic != EMBEDDING_MAGIC {
        return Err(bad("wrong magic bytes"));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)
        .map_err(|_| bad("truncated header"))?;
    let n = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)
        .map_err(|_| bad("truncated header"))?;
    let p = u64::from_le_bytes(word) as usize;
    let mut values = Vec::with_capacity(n * p);
    for _ in 0..n * p {
        r.read_exact(&mut word)
            .map_err(|_| bad("truncated payload"))?;
        values.push(f64::from_le_bytes(word));
    }
    Array2::from_shape_vec((n, p), values)
        .map_err(|e| Error::InvalidArgument(format!("binary embedding: {e}")))
}

/// Writes the soft alignment as `g1_node,rank,g2_node,similarity` rows.
pub fn write_soft_alignment_csv(
    w: &mut impl Write,
    result: &AlignmentResult,
    header: &str,
) -> std::io::Result<()> {
    write_header(w, header)?;
    writeln!(w, "g1_node,rank,g2_node,similarity")?;
    for u in 0..result.node_count() {
        for (rank, &(v, sim)) in result.candidates(u).iter().enumerate() {
            writeln!(w, "{u},{},{v},{sim}", rank + 1)?;
        }
    }
    w.flush()
}

/// Writes a hard alignment map as `g1_node,g2_node` rows; unmatched nodes
/// (possible in one-to-one mode) are skipped.
pub fn write_hard_map_csv(
    w: &mut impl Write,
    map: impl IntoIterator<Item = (usize, Option<usize>)>,
    header: &str,
) -> std::io::Result<()> {
    write_header(w, header)?;
    writeln!(w, "g1_node,g2_node")?;
    for (u, v) in map {
        if let Some(v) = v {
            writeln!(w, "{u},{v}")?;
        }
    }
    w.flush()
}

/// Reads a ground-truth (or hard-map) file of `g1_node,g2_node` rows into a
/// bijection over `0..n`.
pub fn read_ground_truth(reader: impl BufRead) -> Result<GroundTruth> {
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::parse(line_no, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("g1_node") {
            continue;
        }
        let mut fields = line.split(',');
        let u: usize = fields
            .next()
            .unwrap()
            .trim()
            .parse()
            .map_err(|_| Error::parse(line_no, "invalid g1 node id"))?;
        let v: usize = fields
            .next()
            .ok_or_else(|| Error::parse(line_no, "expected `g1_node,g2_node`"))?
            .trim()
            .parse()
            .map_err(|_| Error::parse(line_no, "invalid g2 node id"))?;
        pairs.push((u, v));
    }
    let n = pairs.len();
    let mut forward = vec![usize::MAX; n];
    for (u, v) in pairs {
        if u >= n || forward[u] != usize::MAX {
            return Err(Error::InvalidArgument(format!(
                "ground truth must map node ids 0..{n} exactly once (bad id {u})"
            )));
        }
        forward[u] = v;
    }
    GroundTruth::new(forward)
}

/// Writes an identity matrix as `node,b0,...,b_{b-1}` rows.
pub fn write_identity_csv(
    w: &mut impl Write,
    identity: &IdentityMatrix,
    header: &str,
) -> std::io::Result<()> {
    write_header(w, header)?;
    write!(w, "node")?;
    for j in 0..identity.bucket_count() {
        write!(w, ",b{j}")?;
    }
    writeln!(w)?;
    for u in 0..identity.node_count() {
        write!(w, "{u}")?;
        for v in identity.row(u) {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};
    use proptest::prelude::*;
    use std::io::Cursor;

    #[test]
    fn embedding_csv_round_trip() {
        let y = arr2(&[[0.25, -1.5], [3.0, 0.0625]]);
        let mut buf = Vec::new();
        write_embedding_csv(&mut buf, y.view(), 1, "k=2 delta=0.01").unwrap();
        let back = read_embedding_csv(Cursor::new(buf)).unwrap();
        assert_eq!(y, back);
    }

    #[test]
    fn binary_round_trip_and_magic() {
        let y = arr2(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let mut buf = Vec::new();
        write_embedding_binary(&mut buf, y.view()).unwrap();
        assert_eq!(&buf[..4], EMBEDDING_MAGIC);
        assert_eq!(buf.len(), 4 + 16 + 6 * 8);
        let back = read_embedding_binary(Cursor::new(&buf)).unwrap();
        assert_eq!(y, back);

        let err = read_embedding_binary(Cursor::new(b"NOPE".to_vec())).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn ground_truth_round_trip() {
        let text = "# comment\ng1_node,g2_node\n0,2\n1,0\n2,1\n";
        let truth = read_ground_truth(Cursor::new(text)).unwrap();
        assert_eq!(truth.forward(), &[2, 0, 1]);

        let dup = "0,1\n0,2\n";
        assert!(read_ground_truth(Cursor::new(dup)).is_err());
    }

    proptest! {
        #[test]
        fn binary_embedding_round_trips_exactly(
            rows in 1usize..8,
            cols in 1usize..8,
            seed in 0u64..100,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let y = Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>() * 100.0 - 50.0);
            let mut buf = Vec::new();
            write_embedding_binary(&mut buf, y.view()).unwrap();
            let back = read_embedding_binary(Cursor::new(&buf)).unwrap();
            prop_assert_eq!(y, back);
        }
    }
}
