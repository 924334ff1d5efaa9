//! Immutable graph storage with compressed out- and in-neighbor indices.
//!
//! Node ids are dense `0..num_nodes`. The edge list is kept exactly as it was
//! supplied (multiset semantics, self-loops included); the neighbor index is
//! derived from it. Undirected edges contribute one arc in each direction,
//! except self-loops which contribute a single arc.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub weight: f64,
}

impl Edge {
    pub fn new(source: NodeId, target: NodeId) -> Self {
        Edge {
            source,
            target,
            weight: 1.0,
        }
    }
}

/// Which adjacency defines the neighborhood of a node on directed graphs.
/// Undirected graphs ignore the distinction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborhoodMode {
    #[default]
    Out,
    In,
    Both,
}

impl FromStr for NeighborhoodMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "out" => Ok(NeighborhoodMode::Out),
            "in" => Ok(NeighborhoodMode::In),
            "both" => Ok(NeighborhoodMode::Both),
            other => Err(Error::Config(format!(
                "unknown neighborhood mode {other:?} (expected out, in or both)"
            ))),
        }
    }
}

impl fmt::Display for NeighborhoodMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NeighborhoodMode::Out => "out",
            NeighborhoodMode::In => "in",
            NeighborhoodMode::Both => "both",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
}

impl Csr {
    fn build(num_nodes: usize, arcs: &[(NodeId, NodeId)]) -> Self {
        let mut offsets = vec![0usize; num_nodes + 1];
        for &(s, _) in arcs {
            offsets[s + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut targets = vec![0; arcs.len()];
        // Stable fill: arcs keep their input order within each row.
        for &(s, t) in arcs {
            targets[cursor[s]] = t;
            cursor[s] += 1;
        }
        Csr { offsets, targets }
    }

    #[inline]
    fn row(&self, v: NodeId) -> &[NodeId] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<Edge>,
    directed: bool,
    out_index: Csr,
    in_index: Csr,
}

impl Graph {
    /// Builds a graph from an edge list. For undirected graphs each edge is
    /// indexed in both directions.
    pub fn from_edges(num_nodes: usize, edges: Vec<Edge>, directed: bool) -> Result<Self> {
        for (i, e) in edges.iter().enumerate() {
            if e.source >= num_nodes || e.target >= num_nodes {
                return Err(Error::Invalid(format!(
                    "edge {i} ({}, {}) references a node outside [0, {num_nodes})",
                    e.source, e.target
                )));
            }
            if !e.weight.is_finite() {
                return Err(Error::Invalid(format!("edge {i} has non-finite weight")));
            }
        }
        let mut arcs = Vec::with_capacity(if directed { edges.len() } else { 2 * edges.len() });
        for e in &edges {
            arcs.push((e.source, e.target));
            if !directed && e.source != e.target {
                arcs.push((e.target, e.source));
            }
        }
        let out_index = Csr::build(num_nodes, &arcs);
        let reversed: Vec<_> = arcs.iter().map(|&(s, t)| (t, s)).collect();
        let in_index = Csr::build(num_nodes, &reversed);
        Ok(Graph {
            num_nodes,
            edges,
            directed,
            out_index,
            in_index,
        })
    }

    pub fn edgeless(num_nodes: usize) -> Self {
        Graph::from_edges(num_nodes, Vec::new(), false).expect("edgeless graph is valid")
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn out_neighbors(&self, v: NodeId) -> &[NodeId] {
        self.out_index.row(v)
    }

    pub fn in_neighbors(&self, v: NodeId) -> &[NodeId] {
        self.in_index.row(v)
    }

    pub fn out_degree(&self, v: NodeId) -> usize {
        self.out_neighbors(v).len()
    }

    pub fn in_degree(&self, v: NodeId) -> usize {
        self.in_neighbors(v).len()
    }

    /// Neighbors of `v` under `mode`, as one or two contiguous slices.
    pub fn neighbors(&self, v: NodeId, mode: NeighborhoodMode) -> Neighbors<'_> {
        if !self.directed {
            return Neighbors {
                first: self.out_neighbors(v),
                second: &[],
            };
        }
        match mode {
            NeighborhoodMode::Out => Neighbors {
                first: self.out_neighbors(v),
                second: &[],
            },
            NeighborhoodMode::In => Neighbors {
                first: self.in_neighbors(v),
                second: &[],
            },
            NeighborhoodMode::Both => Neighbors {
                first: self.out_neighbors(v),
                second: self.in_neighbors(v),
            },
        }
    }

    /// Subgraph induced by `nodes` (in the given order, which defines the new
    /// dense ids). Arcs are kept with their multiplicity and row order.
    pub fn induced_subgraph(&self, nodes: &[NodeId]) -> Graph {
        let mut remap = vec![usize::MAX; self.num_nodes];
        for (new, &old) in nodes.iter().enumerate() {
            remap[old] = new;
        }
        let mut edges = Vec::new();
        for e in &self.edges {
            let (s, t) = (remap[e.source], remap[e.target]);
            if s != usize::MAX && t != usize::MAX {
                edges.push(Edge {
                    source: s,
                    target: t,
                    weight: e.weight,
                });
            }
        }
        Graph::from_edges(nodes.len(), edges, self.directed).expect("remapped ids are in range")
    }

    /// Writes the edge list in the tab-separated text format. Weights are
    /// written only when some edge carries a non-unit weight.
    pub fn write_edges<W: Write>(&self, mut out: W) -> Result<()> {
        let weighted = self.edges.iter().any(|e| e.weight != 1.0);
        for e in &self.edges {
            if weighted {
                writeln!(out, "{}\t{}\t{}", e.source, e.target, e.weight)?;
            } else {
                writeln!(out, "{}\t{}", e.source, e.target)?;
            }
        }
        Ok(())
    }

    pub fn save_edges(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_edges(&mut out)?;
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Neighbors<'a> {
    first: &'a [NodeId],
    second: &'a [NodeId],
}

impl<'a> Neighbors<'a> {
    pub fn len(&self) -> usize {
        self.first.len() + self.second.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> NodeId {
        if i < self.first.len() {
            self.first[i]
        } else {
            self.second[i - self.first.len()]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + 'a {
        self.first.iter().chain(self.second.iter()).copied()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Node count; when absent it is inferred as one past the largest id.
    pub num_nodes: Option<usize>,
    pub directed: bool,
    /// Undirected only: each line is one undirected edge. When false, the file
    /// must already list both directions of every edge.
    pub symmetrize: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            num_nodes: None,
            directed: false,
            symmetrize: true,
        }
    }
}

pub fn load_graph(path: &Path, opts: LoadOptions) -> Result<Graph> {
    let file = std::fs::File::open(path).map_err(|e| Error::read(path, e))?;
    read_graph(BufReader::new(file), path, opts)
}

pub fn read_graph<R: BufRead>(reader: R, path: &Path, opts: LoadOptions) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut max_id: Option<usize> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::read(path, e))?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 2 or 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let parse_id = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::parse(path, lineno, format!("invalid node id {s:?}")))
        };
        let source = parse_id(fields[0])?;
        let target = parse_id(fields[1])?;
        let weight = match fields.get(2) {
            Some(w) => {
                let w: f64 = w
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(path, lineno, format!("invalid weight {w:?}")))?;
                if !w.is_finite() {
                    return Err(Error::parse(path, lineno, "non-finite edge weight"));
                }
                w
            }
            None => 1.0,
        };
        if let Some(n) = opts.num_nodes {
            let id = source.max(target);
            if id >= n {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("node id {id} is out of range for {n} nodes"),
                ));
            }
        }
        max_id = Some(max_id.map_or(source.max(target), |m: usize| m.max(source).max(target)));
        edges.push(Edge {
            source,
            target,
            weight,
        });
    }
    let num_nodes = opts
        .num_nodes
        .unwrap_or_else(|| max_id.map_or(0, |m| m + 1));

    if !opts.directed && !opts.symmetrize {
        // Both directions are listed; keep one representative per pair.
        edges = fold_symmetric(&edges).ok_or_else(|| {
            Error::format(
                path,
                "undirected edge list without symmetrization must list both directions of every edge",
            )
        })?;
    }
    Graph::from_edges(num_nodes, edges, opts.directed)
}

/// Pairs each arc (u, v) with a matching (v, u) and returns one edge per
/// pair; self-loops stand alone. Returns None when the multiset is not
/// symmetric.
fn fold_symmetric(arcs: &[Edge]) -> Option<Vec<Edge>> {
    use std::collections::HashMap;
    let mut pending: HashMap<(NodeId, NodeId), usize> = HashMap::new();
    let mut kept = Vec::new();
    for e in arcs {
        if e.source == e.target {
            kept.push(*e);
            continue;
        }
        let rev = (e.target, e.source);
        match pending.get_mut(&rev) {
            Some(c) if *c > 0 => *c -= 1,
            _ => {
                *pending.entry((e.source, e.target)).or_insert(0) += 1;
                kept.push(*e);
            }
        }
    }
    pending.values().all(|&c| c == 0).then_some(kept)
}

/// Optional mapping from external string ids to dense node ids: line `i` of
/// the sidecar file holds the external id of node `i`.
#[derive(Debug, Clone, Default)]
pub struct IdMap {
    external: Vec<String>,
    lookup: std::collections::HashMap<String, NodeId>,
}

impl IdMap {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        let mut map = IdMap::default();
        for (i, line) in text.lines().enumerate() {
            let id = line.trim().to_string();
            if id.is_empty() {
                return Err(Error::parse(path, i + 1, "empty external id"));
            }
            if map.lookup.insert(id.clone(), i).is_some() {
                return Err(Error::parse(path, i + 1, format!("duplicate external id {id:?}")));
            }
            map.external.push(id);
        }
        Ok(map)
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }

    pub fn dense(&self, external: &str) -> Option<NodeId> {
        self.lookup.get(external).copied()
    }

    pub fn external(&self, id: NodeId) -> Option<&str> {
        self.external.get(id).map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, opts: LoadOptions) -> Result<Graph> {
        read_graph(text.as_bytes(), Path::new("test.tsv"), opts)
    }

    #[test]
    fn triangle_has_degree_two_everywhere() {
        let g = parse("0\t1\n1\t2\n2\t0\n", LoadOptions::default()).unwrap();
        assert_eq!(g.num_nodes(), 3);
        for v in 0..3 {
            assert_eq!(g.out_degree(v), 2);
            assert_eq!(g.in_degree(v), 2);
        }
    }

    #[test]
    fn empty_file_gives_isolated_nodes() {
        let opts = LoadOptions {
            num_nodes: Some(5),
            ..Default::default()
        };
        let g = parse("# nothing here\n", opts).unwrap();
        assert_eq!(g.num_nodes(), 5);
        assert_eq!(g.num_edges(), 0);
        assert!((0..5).all(|v| g.out_degree(v) == 0));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse("0\t1\n1 2\n", LoadOptions::default()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn id_out_of_declared_range_is_rejected() {
        let opts = LoadOptions {
            num_nodes: Some(3),
            ..Default::default()
        };
        let err = parse("0\t1\n1\t3\n", opts).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn non_finite_weight_is_rejected() {
        let err = parse("0\t1\tNaN\n", LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse("0\t1\tinf\n", LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn multi_edges_and_self_loops_are_preserved() {
        let g = parse("0\t1\n0\t1\n2\t2\n", LoadOptions::default()).unwrap();
        assert_eq!(g.out_neighbors(0), &[1, 1]);
        assert_eq!(g.out_neighbors(1), &[0, 0]);
        assert_eq!(g.out_neighbors(2), &[2]);
    }

    #[test]
    fn directed_graph_keeps_in_and_out_separate() {
        let opts = LoadOptions {
            directed: true,
            ..Default::default()
        };
        let g = parse("0\t1\n0\t2\n2\t1\n", opts).unwrap();
        assert_eq!(g.out_neighbors(0), &[1, 2]);
        assert_eq!(g.in_neighbors(1), &[0, 2]);
        assert_eq!(g.neighbors(2, NeighborhoodMode::Both).iter().collect::<Vec<_>>(), vec![1, 0]);
        assert_eq!(g.neighbors(1, NeighborhoodMode::Out).len(), 0);
    }

    #[test]
    fn pre_symmetrized_input_is_folded() {
        let opts = LoadOptions {
            symmetrize: false,
            ..Default::default()
        };
        let g = parse("0\t1\n1\t0\n1\t2\n2\t1\n", opts).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.out_degree(1), 2);
        let err = parse("0\t1\n1\t2\n2\t1\n", opts).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }

    #[test]
    fn induced_subgraph_keeps_row_order() {
        let g = parse("0\t1\n0\t2\n0\t3\n1\t2\n", LoadOptions::default()).unwrap();
        let sub = g.induced_subgraph(&[0, 2, 1]);
        assert_eq!(sub.num_nodes(), 3);
        assert_eq!(sub.out_neighbors(0), &[2, 1]);
        assert_eq!(sub.out_neighbors(1), &[0, 2]);
    }
}
