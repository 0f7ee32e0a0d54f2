//! Undirected binary graphs and their adjacency-vector sequence encoding.
//!
//! A graph on `n` nodes under a fixed node order is written as the rows of
//! the strict lower triangle of its adjacency matrix. Row `i` (for
//! `i = 1..n`) is the vector
//!
//! ```text
//! X_i = (A[i][i-1], A[i][i-2], ..., A[i][0])
//! ```
//!
//! so entry `k` (1-based) of `X_i` says whether node `i` is joined to node
//! `i - k`. The first node has no row. Sequences are zero-padded to a
//! dataset-wide width so every graph produces `width - 1` vectors.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An undirected simple graph with an optional class label.
///
/// Edges are stored as `(i, j)` with `i > j`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    label: Option<i64>,
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a > b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph {
            n,
            edges: BTreeSet::new(),
            label: None,
        }
    }

    /// Builds a graph from an edge list. Duplicate and reversed pairs collapse
    /// to one undirected edge; self-loops and out-of-range endpoints are
    /// rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Graph::empty(n);
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Graph::empty(n);
        for i in 1..n {
            for j in 0..i {
                g.edges.insert((i, j));
            }
        }
        g
    }

    pub fn path(n: usize) -> Self {
        let mut g = Graph::empty(n);
        for i in 1..n {
            g.edges.insert((i, i - 1));
        }
        g
    }

    pub fn with_label(mut self, label: Option<i64>) -> Self {
        self.label = label;
        self
    }

    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<bool> {
        if a == b {
            return Err(Error::InvalidGraph(format!("self-loop on node {a}")));
        }
        if a >= self.n || b >= self.n {
            return Err(Error::InvalidGraph(format!(
                "edge ({a}, {b}) out of range for {} nodes",
                self.n
            )));
        }
        Ok(self.edges.insert(ordered(a, b)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> Option<i64> {
        self.label
    }

    pub fn set_label(&mut self, label: Option<i64>) {
        self.label = label;
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(i, j)` pairs with `i > j`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_set(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a != b && self.edges.contains(&ordered(a, b))
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    /// Relabels nodes so that old node `order[k]` becomes new node `k`.
    ///
    /// `order` must be a permutation of `0..n`.
    pub fn reorder(&self, order: &[usize]) -> Result<Graph> {
        if order.len() != self.n {
            return Err(Error::InvalidGraph(format!(
                "ordering has {} entries for {} nodes",
                order.len(),
                self.n
            )));
        }
        let mut position = vec![usize::MAX; self.n];
        for (new, &old) in order.iter().enumerate() {
            if old >= self.n || position[old] != usize::MAX {
                return Err(Error::InvalidGraph("ordering is not a permutation".into()));
            }
            position[old] = new;
        }
        let edges = self
            .edges
            .iter()
            .map(|&(i, j)| ordered(position[i], position[j]))
            .collect();
        Ok(Graph {
            n: self.n,
            edges,
            label: self.label,
        })
    }

    /// Whether every pair of nodes in `nodes` is adjacent.
    pub fn is_clique(&self, nodes: &[usize]) -> bool {
        nodes
            .iter()
            .enumerate()
            .all(|(a, &u)| nodes[a + 1..].iter().all(|&v| self.has_edge(u, v)))
    }

    /// The graph on the same node set keeping only edges among `nodes`.
    pub fn induced_on(&self, nodes: &[usize]) -> Graph {
        let keep: BTreeSet<usize> = nodes.iter().copied().collect();
        let edges = self
            .edges
            .iter()
            .filter(|(i, j)| keep.contains(i) && keep.contains(j))
            .copied()
            .collect();
        Graph {
            n: self.n,
            edges,
            label: self.label,
        }
    }

    /// Nodes touched by at least one edge.
    pub fn covered_nodes(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.edges.iter().flat_map(|&(i, j)| [i, j]).collect();
        set.into_iter().collect()
    }

    pub fn is_subgraph_of(&self, other: &Graph) -> bool {
        self.n == other.n && self.edges.is_subset(&other.edges)
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Graph(n={}, edges=[", self.n)?;
        for (k, (i, j)) in self.edges.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{j}-{i}")?;
        }
        f.write_str("])")
    }
}

/// Zero-padded adjacency-vector sequence of a graph.
///
/// `vectors[t]` (0-based) describes node `t + 1` and has length `t + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjVecSeq {
    vectors: Vec<Vec<u8>>,
    width: usize,
}

impl AdjVecSeq {
    /// Builds a sequence from explicit rows; rows must have lengths
    /// `1, 2, ...` and contain only 0/1 entries. Missing trailing rows up to
    /// `width - 1` are filled with zeros.
    pub fn from_vectors(mut vectors: Vec<Vec<u8>>, width: usize) -> Result<Self> {
        if vectors.len() > width.saturating_sub(1) {
            return Err(Error::InvalidSequence(format!(
                "{} vectors exceed width {width}",
                vectors.len()
            )));
        }
        for (t, v) in vectors.iter().enumerate() {
            if v.len() != t + 1 {
                return Err(Error::InvalidSequence(format!(
                    "vector {} has length {}, expected {}",
                    t + 1,
                    v.len(),
                    t + 1
                )));
            }
            if v.iter().any(|&b| b > 1) {
                return Err(Error::InvalidSequence("entries must be 0 or 1".into()));
            }
        }
        for t in vectors.len()..width.saturating_sub(1) {
            vectors.push(vec![0; t + 1]);
        }
        Ok(AdjVecSeq { vectors, width })
    }

    pub fn zeros(width: usize) -> Self {
        let vectors = (1..width).map(|len| vec![0; len]).collect();
        AdjVecSeq { vectors, width }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn vectors(&self) -> &[Vec<u8>] {
        &self.vectors
    }

    /// Entry `k` (1-based) of the row for node `row` (1-based, `row >= 1`):
    /// the indicator of edge `(row, row - k)`.
    pub fn get(&self, row: usize, k: usize) -> u8 {
        self.vectors[row - 1][k - 1]
    }

    pub fn ones(&self) -> usize {
        self.vectors
            .iter()
            .map(|v| v.iter().map(|&b| b as usize).sum::<usize>())
            .sum()
    }

    /// Row-major flattening: row 1, then row 2, and so on.
    pub fn flatten(&self) -> Vec<u8> {
        self.vectors.iter().flatten().copied().collect()
    }

    /// Position of entry `(row, k)` in [`AdjVecSeq::flatten`].
    pub fn flat_index(row: usize, k: usize) -> usize {
        row * (row - 1) / 2 + (k - 1)
    }
}

/// Converts a (canonically ordered) graph to its padded sequence.
pub fn to_sequence(g: &Graph, width: usize) -> Result<AdjVecSeq> {
    if g.n() > width {
        return Err(Error::WidthExceeded {
            nodes: g.n(),
            width,
        });
    }
    let mut seq = AdjVecSeq::zeros(width);
    for (i, j) in g.edges() {
        seq.vectors[i - 1][i - j - 1] = 1;
    }
    Ok(seq)
}

/// Reads a sequence back as a graph on `width` nodes. Rows past the last
/// edge are isolated nodes.
pub fn from_sequence(seq: &AdjVecSeq) -> Graph {
    let mut g = Graph::empty(seq.width());
    for (t, v) in seq.vectors.iter().enumerate() {
        let row = t + 1;
        for (k, &bit) in v.iter().enumerate() {
            if bit == 1 {
                g.edges.insert((row, row - (k + 1)));
            }
        }
    }
    g
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    n: usize,
    edges: Vec<[usize; 2]>,
    label: Option<i64>,
}

impl Serialize for Graph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GraphRecord {
            n: self.n,
            edges: self.edges.iter().map(|&(i, j)| [j, i]).collect(),
            label: self.label,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Graph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = GraphRecord::deserialize(d)?;
        Graph::from_edges(rec.n, rec.edges.iter().map(|e| (e[0], e[1])))
            .map(|g| g.with_label(rec.label))
            .map_err(serde::de::Error::custom)
    }
}

/// Writes one JSON object per line: `{"n":..,"edges":[[j,i],..],"label":..}`.
pub fn write_jsonl<W: Write>(mut out: W, graphs: &[Graph]) -> Result<()> {
    for g in graphs {
        serde_json::to_writer(&mut out, g)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<Graph>> {
    let mut graphs = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let g: Graph = serde_json::from_str(&line).map_err(|e| {
            Error::Parse(format!("graph JSON line {}: {e}", lineno + 1))
        })?;
        graphs.push(g);
    }
    Ok(graphs)
}
