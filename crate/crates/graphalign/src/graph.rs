//! Graph and attribute representation shared by every pipeline stage.
//!
//! Graphs are undirected, unweighted, and stored as CSR-style sorted
//! adjacency lists: every downstream step iterates neighbors and none of
//! them ever needs a dense adjacency matrix. Node ids are dense integers
//! `0..n`; inputs with string labels go through a first-seen-order label
//! map kept outside the numeric core.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Dense node identifier, local to one graph.
pub type NodeId = usize;

/// An undirected, unweighted graph without self-loops or multi-edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    /// CSR offsets, length `n + 1`.
    offsets: Vec<usize>,
    /// Flattened neighbor lists, sorted per node; every undirected edge
    /// appears twice.
    neighbors: Vec<NodeId>,
}

impl Graph {
    /// Builds a graph on `node_count` nodes from an edge iterator.
    /// Self-loops and duplicate edges are dropped; each surviving edge is
    /// symmetrized. Endpoints `>= node_count` are rejected.
    pub fn from_edges(
        node_count: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Graph> {
        let mut directed: Vec<(NodeId, NodeId)> = Vec::new();
        for (u, v) in edges {
            if u >= node_count || v >= node_count {
                return Err(Error::InvalidArgument(format!(
                    "edge ({u}, {v}) references a node id >= node count {node_count}"
                )));
            }
            if u == v {
                continue;
            }
            directed.push((u, v));
            directed.push((v, u));
        }
        directed.sort_unstable();
        directed.dedup();

        let mut offsets = vec![0usize; node_count + 1];
        for &(u, _) in &directed {
            offsets[u + 1] += 1;
        }
        for i in 0..node_count {
            offsets[i + 1] += offsets[i];
        }
        let neighbors = directed.into_iter().map(|(_, v)| v).collect();
        let graph = Graph { offsets, neighbors };

        let isolated = graph.isolated_node_count();
        if isolated > 0 {
            log::warn!(
                "graph has {isolated} isolated node(s); structural identity for them is degenerate"
            );
        }
        Ok(graph)
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    /// Sorted neighbor list of `u`.
    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.neighbors[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.node_count())
            .map(|u| self.degree(u))
            .max()
            .unwrap_or(0)
    }

    pub fn isolated_node_count(&self) -> usize {
        (0..self.node_count())
            .filter(|&u| self.degree(u) == 0)
            .count()
    }

    /// Iterates each undirected edge once, as `(u, v)` with `u < v`, in
    /// lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.node_count()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.node_count()).map(|u| self.degree(u)).collect()
    }

    /// Sizes of connected components, sorted ascending.
    pub fn component_sizes(&self) -> Vec<usize> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut sizes = Vec::new();
        let mut queue = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            queue.push(start);
            let mut size = 0;
            while let Some(u) = queue.pop() {
                size += 1;
                for &v in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push(v);
                    }
                }
            }
            sizes.push(size);
        }
        sizes.sort_unstable();
        sizes
    }

    /// Writes the canonical edge-list serialization: one `u v` line per
    /// undirected edge with `u < v`, sorted.
    pub fn write_edge_list(&self, w: &mut impl Write) -> std::io::Result<()> {
        for (u, v) in self.edges() {
            writeln!(w, "{u} {v}")?;
        }
        Ok(())
    }
}

/// Parses a whitespace-separated edge list. Lines starting with `#` and
/// blank lines are skipped; CRLF is tolerated. With `one_indexed`, ids are
/// shifted down by one. The node count is `max id + 1`.
pub fn parse_edge_list(reader: impl BufRead, one_indexed: bool) -> Result<Graph> {
    let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
    let mut max_id = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::parse(line_no, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let u = parse_node_token(it.next(), line_no, one_indexed)?;
        let v = parse_node_token(it.next(), line_no, one_indexed)?;
        if let Some(extra) = it.next() {
            return Err(Error::parse(
                line_no,
                format!("expected two node ids, found extra token {extra:?}"),
            ));
        }
        max_id = max_id.max(u).max(v);
        edges.push((u, v));
    }
    if edges.is_empty() {
        return Err(Error::InvalidArgument(
            "edge list is empty: no edges found".into(),
        ));
    }
    Graph::from_edges(max_id + 1, edges)
}

fn parse_node_token(token: Option<&str>, line_no: usize, one_indexed: bool) -> Result<NodeId> {
    let token = token.ok_or_else(|| Error::parse(line_no, "expected two node ids on the line"))?;
    let id: usize = token
        .parse()
        .map_err(|_| Error::parse(line_no, format!("invalid node id {token:?}")))?;
    if one_indexed {
        if id == 0 {
            return Err(Error::parse(
                line_no,
                "node id 0 in a one-indexed edge list",
            ));
        }
        Ok(id - 1)
    } else {
        Ok(id)
    }
}

/// Parses an edge list whose node labels are arbitrary strings. Labels are
/// assigned dense ids in first-seen order; the returned vector maps id to
/// label.
pub fn parse_edge_list_labeled(reader: impl BufRead) -> Result<(Graph, Vec<String>)> {
    let mut ids: HashMap<String, NodeId> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
    let mut intern = |token: &str, labels: &mut Vec<String>| -> NodeId {
        *ids.entry(token.to_owned()).or_insert_with(|| {
            labels.push(token.to_owned());
            labels.len() - 1
        })
    };
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::parse(line_no, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let u = it
            .next()
            .ok_or_else(|| Error::parse(line_no, "expected two node labels"))?;
        let v = it
            .next()
            .ok_or_else(|| Error::parse(line_no, "expected two node labels"))?;
        if let Some(extra) = it.next() {
            return Err(Error::parse(
                line_no,
                format!("expected two node labels, found extra token {extra:?}"),
            ));
        }
        let u = intern(u, &mut labels);
        let v = intern(v, &mut labels);
        edges.push((u, v));
    }
    if edges.is_empty() {
        return Err(Error::InvalidArgument(
            "edge list is empty: no edges found".into(),
        ));
    }
    let graph = Graph::from_edges(labels.len(), edges)?;
    Ok((graph, labels))
}

/// Kind of one attribute column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttributeKind {
    /// Values drawn from the finite alphabet `0..cardinality`.
    Categorical { cardinality: u32 },
    /// Finite real values.
    Real,
}

impl AttributeKind {
    /// Parses `cat:<k>` or `real`.
    pub fn parse(token: &str) -> Result<AttributeKind> {
        let token = token.trim();
        if token.eq_ignore_ascii_case("real") {
            return Ok(AttributeKind::Real);
        }
        if let Some(card) = token.strip_prefix("cat:") {
            let cardinality: u32 = card.parse().map_err(|_| {
                Error::InvalidArgument(format!("invalid categorical cardinality in {token:?}"))
            })?;
            if cardinality < 2 {
                return Err(Error::InvalidArgument(format!(
                    "categorical attribute needs cardinality >= 2, got {cardinality}"
                )));
            }
            return Ok(AttributeKind::Categorical { cardinality });
        }
        Err(Error::InvalidArgument(format!(
            "unknown attribute kind {token:?} (expected `cat:<k>` or `real`)"
        )))
    }

    /// Parses a comma-separated kind list such as `cat:2,real,cat:29`.
    pub fn parse_list(spec: &str) -> Result<Vec<AttributeKind>> {
        spec.split(',').map(AttributeKind::parse).collect()
    }
}

/// Per-node attribute values for one graph: `n` rows of `F` columns.
/// Categorical values are stored as their small-integer codes.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTable {
    kinds: Vec<AttributeKind>,
    values: Vec<f64>,
    node_count: usize,
}

impl AttributeTable {
    pub fn new(kinds: Vec<AttributeKind>, values: Vec<f64>, node_count: usize) -> Result<Self> {
        let f = kinds.len();
        if values.len() != node_count * f {
            return Err(Error::DimensionMismatch(format!(
                "attribute table: expected {node_count} x {f} values, got {}",
                values.len()
            )));
        }
        let table = AttributeTable {
            kinds,
            values,
            node_count,
        };
        for u in 0..node_count {
            for (col, value) in table.row(u).iter().enumerate() {
                table.validate_cell(u, col, *value)?;
            }
        }
        Ok(table)
    }

    fn validate_cell(&self, node: NodeId, col: usize, value: f64) -> Result<()> {
        match self.kinds[col] {
            AttributeKind::Categorical { cardinality } => {
                if value.fract() != 0.0 || value < 0.0 || value >= cardinality as f64 {
                    return Err(Error::InvalidArgument(format!(
                        "node {node}, attribute {col}: categorical value {value} outside alphabet 0..{cardinality}"
                    )));
                }
            }
            AttributeKind::Real => {
                if !value.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "node {node}, attribute {col}: real value must be finite, got {value}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn attr_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn kinds(&self) -> &[AttributeKind] {
        &self.kinds
    }

    pub fn row(&self, u: NodeId) -> &[f64] {
        let f = self.kinds.len();
        &self.values[u * f..(u + 1) * f]
    }

    pub fn all_categorical(&self) -> bool {
        self.kinds
            .iter()
            .all(|k| matches!(k, AttributeKind::Categorical { .. }))
    }

    /// Reorders rows so that output row `perm[u]` is input row `u`.
    pub fn permuted(&self, perm: &[NodeId]) -> AttributeTable {
        assert_eq!(perm.len(), self.node_count);
        let f = self.kinds.len();
        let mut values = vec![0.0; self.values.len()];
        for u in 0..self.node_count {
            let target = perm[u];
            values[target * f..(target + 1) * f].copy_from_slice(self.row(u));
        }
        AttributeTable {
            kinds: self.kinds.clone(),
            values,
            node_count: self.node_count,
        }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Concatenates two tables with identical schemas; rows of `second`
    /// follow rows of `first` (combined-id order).
    pub fn stack(first: &AttributeTable, second: &AttributeTable) -> Result<AttributeTable> {
        if first.kinds != second.kinds {
            return Err(Error::DimensionMismatch(
                "attribute tables have different schemas".into(),
            ));
        }
        let mut values = first.values.clone();
        values.extend_from_slice(&second.values);
        Ok(AttributeTable {
            kinds: first.kinds.clone(),
            values,
            node_count: first.node_count + second.node_count,
        })
    }
}

/// Parses the comma-separated attribute file: header `node,attr1,...,attrF`,
/// then one row per node of the owning graph, in any order.
pub fn parse_attributes(
    reader: impl BufRead,
    graph: &Graph,
    kinds: &[AttributeKind],
) -> Result<AttributeTable> {
    let n = graph.node_count();
    let f = kinds.len();
    let mut values = vec![f64::NAN; n * f];
    let mut filled = vec![false; n];
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("attribute file is empty".into()))?;
    let header = header.map_err(|e| Error::parse(1, e.to_string()))?;
    let header_cols = header.trim().split(',').count();
    if header_cols != f + 1 {
        return Err(Error::parse(
            1,
            format!(
                "header has {header_cols} columns but {} were declared (node + {f} attributes)",
                f + 1
            ),
        ));
    }

    let mut rows = 0usize;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::parse(line_no, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let node: NodeId = fields
            .next()
            .unwrap()
            .trim()
            .parse()
            .map_err(|_| Error::parse(line_no, "invalid node id"))?;
        if node >= n {
            return Err(Error::parse(
                line_no,
                format!("node id {node} out of range for a {n}-node graph"),
            ));
        }
        if filled[node] {
            return Err(Error::parse(
                line_no,
                format!("duplicate row for node {node}"),
            ));
        }
        for col in 0..f {
            let field = fields
                .next()
                .ok_or_else(|| Error::parse(line_no, format!("expected {f} attribute values")))?;
            let value: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::parse(line_no, format!("invalid value {field:?}")))?;
            values[node * f + col] = value;
        }
        if fields.next().is_some() {
            return Err(Error::parse(line_no, "too many columns"));
        }
        filled[node] = true;
        rows += 1;
    }

    if rows != n {
        let missing = filled.iter().position(|&b| !b).unwrap_or(0);
        return Err(Error::InvalidArgument(format!(
            "attribute table has {rows} rows for a {n}-node graph (node {missing} is missing)"
        )));
    }
    AttributeTable::new(kinds.to_vec(), values, n)
}

/// Which input graph a combined node id belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    First,
    Second,
}

/// The disjoint-union indexing of two graphs: combined ids `0..n1` are the
/// first graph's nodes in order, `n1..n1+n2` the second graph's.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CombinedIndex {
    n1: usize,
    n2: usize,
}

impl CombinedIndex {
    pub fn combine(g1: &Graph, g2: &Graph) -> CombinedIndex {
        CombinedIndex {
            n1: g1.node_count(),
            n2: g2.node_count(),
        }
    }

    pub fn new(n1: usize, n2: usize) -> CombinedIndex {
        CombinedIndex { n1, n2 }
    }

    pub fn total(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn first_count(&self) -> usize {
        self.n1
    }

    pub fn second_count(&self) -> usize {
        self.n2
    }

    pub fn to_combined(&self, side: Side, local: NodeId) -> usize {
        match side {
            Side::First => {
                debug_assert!(local < self.n1);
                local
            }
            Side::Second => {
                debug_assert!(local < self.n2);
                self.n1 + local
            }
        }
    }

    pub fn to_local(&self, combined: usize) -> (Side, NodeId) {
        debug_assert!(combined < self.total());
        if combined < self.n1 {
            (Side::First, combined)
        } else {
            (Side::Second, combined - self.n1)
        }
    }
}
