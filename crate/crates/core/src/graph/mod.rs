//! Exchange graph model: patient-donor pairs and non-directed donors (NDDs)
//! connected by weighted directed edges (potential transplants).

mod enumerate;
pub mod fixtures;
mod generate;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use enumerate::{enumerate_structures, DEFAULT_MAX_CHAIN_LEN, DEFAULT_MAX_CYCLE_LEN};
pub use generate::generate_random_graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Pair,
    Ndd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: usize,
    pub kind: VertexKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: usize,
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

/// Unvalidated graph contents, exactly as they appear in a graph file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphData {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
}

/// One broken graph invariant, naming the offending entity.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    NonContiguousVertexIds { position: usize, id: usize },
    DuplicateVertexId { id: usize },
    NonContiguousEdgeIds { position: usize, id: usize },
    DuplicateEdgeId { id: usize },
    UnknownEndpoint { edge: usize, vertex: usize },
    EdgeIntoNdd { edge: usize, ndd: usize },
    SelfLoop { edge: usize },
    ParallelEdge { edge: usize, source: usize, target: usize },
    InvalidWeight { edge: usize, weight: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonContiguousVertexIds { position, id } => {
                write!(f, "vertex at position {position} has id {id}; ids must be 0..n in order")
            }
            Violation::DuplicateVertexId { id } => write!(f, "vertex id {id} is duplicated"),
            Violation::NonContiguousEdgeIds { position, id } => {
                write!(f, "edge at position {position} has id {id}; ids must be 0..m in order")
            }
            Violation::DuplicateEdgeId { id } => write!(f, "edge id {id} is duplicated"),
            Violation::UnknownEndpoint { edge, vertex } => {
                write!(f, "edge {edge} references unknown vertex {vertex}")
            }
            Violation::EdgeIntoNdd { edge, ndd } => {
                write!(f, "edge {edge} enters non-directed donor {ndd}")
            }
            Violation::SelfLoop { edge } => write!(f, "edge {edge} is a self-loop"),
            Violation::ParallelEdge { edge, source, target } => {
                write!(f, "edge {edge} duplicates an earlier edge {source} -> {target}")
            }
            Violation::InvalidWeight { edge, weight } => {
                write!(f, "edge {edge} has invalid weight {weight}")
            }
        }
    }
}

/// Checks every graph invariant and returns the violations found.
///
/// The result is empty exactly when `GraphData` can be turned into an
/// [`ExchangeGraph`].
pub fn validate_graph(graph: &GraphData) -> Vec<Violation> {
    let mut violations = Vec::new();

    let mut seen_vertices = HashSet::new();
    for (position, v) in graph.vertices.iter().enumerate() {
        if !seen_vertices.insert(v.id) {
            violations.push(Violation::DuplicateVertexId { id: v.id });
        } else if v.id != position {
            violations.push(Violation::NonContiguousVertexIds { position, id: v.id });
        }
    }
    let kinds: HashMap<usize, VertexKind> = graph.vertices.iter().map(|v| (v.id, v.kind)).collect();

    let mut seen_edges = HashSet::new();
    let mut seen_pairs = HashSet::new();
    for (position, e) in graph.edges.iter().enumerate() {
        if !seen_edges.insert(e.id) {
            violations.push(Violation::DuplicateEdgeId { id: e.id });
        } else if e.id != position {
            violations.push(Violation::NonContiguousEdgeIds { position, id: e.id });
        }
        if !(e.weight.is_finite() && e.weight >= 0.0) {
            violations.push(Violation::InvalidWeight { edge: e.id, weight: e.weight });
        }
        for endpoint in [e.source, e.target] {
            if !kinds.contains_key(&endpoint) {
                violations.push(Violation::UnknownEndpoint { edge: e.id, vertex: endpoint });
            }
        }
        if kinds.get(&e.target) == Some(&VertexKind::Ndd) {
            violations.push(Violation::EdgeIntoNdd { edge: e.id, ndd: e.target });
        }
        if e.source == e.target {
            violations.push(Violation::SelfLoop { edge: e.id });
        } else if !seen_pairs.insert((e.source, e.target)) {
            violations.push(Violation::ParallelEdge {
                edge: e.id,
                source: e.source,
                target: e.target,
            });
        }
    }
    violations
}

/// A validated exchange graph. Vertex and edge ids are their positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphData", into = "GraphData")]
pub struct ExchangeGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    out_edges: Vec<Vec<usize>>,
}

impl ExchangeGraph {
    pub fn new(vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self> {
        Self::try_from(GraphData { vertices, edges })
    }

    pub fn empty() -> Self {
        ExchangeGraph { vertices: Vec::new(), edges: Vec::new(), out_edges: Vec::new() }
    }

    /// Builds a graph from vertex kinds and `(source, target, weight)` triples;
    /// ids are assigned by position.
    pub fn from_parts(kinds: &[VertexKind], arcs: &[(usize, usize, f64)]) -> Result<Self> {
        let vertices = kinds
            .iter()
            .enumerate()
            .map(|(id, &kind)| Vertex { id, kind })
            .collect();
        let edges = arcs
            .iter()
            .enumerate()
            .map(|(id, &(source, target, weight))| Edge { id, source, target, weight })
            .collect();
        Self::new(vertices, edges)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, id: usize) -> &Edge {
        &self.edges[id]
    }

    pub fn ndd_count(&self) -> usize {
        self.vertices.iter().filter(|v| v.kind == VertexKind::Ndd).count()
    }

    pub fn is_ndd(&self, vertex: usize) -> bool {
        self.vertices[vertex].kind == VertexKind::Ndd
    }

    /// Ids of edges leaving `vertex`, in ascending order.
    pub fn out_edges(&self, vertex: usize) -> &[usize] {
        &self.out_edges[vertex]
    }

    pub fn to_data(&self) -> GraphData {
        GraphData { vertices: self.vertices.clone(), edges: self.edges.clone() }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let data: GraphData = serde_json::from_str(text)?;
        Self::try_from(data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

impl TryFrom<GraphData> for ExchangeGraph {
    type Error = Error;

    fn try_from(data: GraphData) -> Result<Self> {
        let violations = validate_graph(&data);
        if !violations.is_empty() {
            return Err(Error::InvalidGraph(violations));
        }
        let mut out_edges = vec![Vec::new(); data.vertices.len()];
        for e in &data.edges {
            out_edges[e.source].push(e.id);
        }
        Ok(ExchangeGraph { vertices: data.vertices, edges: data.edges, out_edges })
    }
}

impl From<ExchangeGraph> for GraphData {
    fn from(graph: ExchangeGraph) -> Self {
        GraphData { vertices: graph.vertices, edges: graph.edges }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureKind {
    Cycle,
    Chain,
}

/// A cycle or chain: the unit a matching selects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleChain {
    pub kind: StructureKind,
    /// Edge ids in traversal order. Cycles start at their smallest vertex id;
    /// chains start at the NDD.
    pub edges: Vec<usize>,
    /// Vertices in traversal order (a cycle does not repeat its start).
    pub vertices: Vec<usize>,
    pub nominal_weight: f64,
    #[serde(skip)]
    vertex_mask: FixedBitSet,
}

impl CycleChain {
    pub fn new(graph: &ExchangeGraph, kind: StructureKind, edges: Vec<usize>) -> Self {
        let mut vertices: Vec<usize> = edges.iter().map(|&e| graph.edge(e).source).collect();
        if kind == StructureKind::Chain {
            if let Some(&last) = edges.last() {
                vertices.push(graph.edge(last).target);
            }
        }
        let nominal_weight = edges.iter().map(|&e| graph.edge(e).weight).sum();
        let mut vertex_mask = FixedBitSet::with_capacity(graph.vertex_count());
        for &v in &vertices {
            vertex_mask.insert(v);
        }
        CycleChain { kind, edges, vertices, nominal_weight, vertex_mask }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn is_cycle(&self) -> bool {
        self.kind == StructureKind::Cycle
    }

    pub fn contains_edge(&self, edge: usize) -> bool {
        self.edges.contains(&edge)
    }

    /// True when the two structures share a vertex and so cannot both be matched.
    pub fn conflicts_with(&self, other: &CycleChain) -> bool {
        !self.vertex_mask.is_disjoint(&other.vertex_mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_graph() -> GraphData {
        GraphData {
            vertices: vec![
                Vertex { id: 0, kind: VertexKind::Ndd },
                Vertex { id: 1, kind: VertexKind::Pair },
                Vertex { id: 2, kind: VertexKind::Pair },
            ],
            edges: vec![
                Edge { id: 0, source: 0, target: 1, weight: 1.0 },
                Edge { id: 1, source: 1, target: 2, weight: 1.0 },
            ],
        }
    }

    #[test]
    fn fixture_is_valid() {
        assert!(validate_graph(&fixtures::counterexample().to_data()).is_empty());
        assert!(validate_graph(&fixtures::chain_example().to_data()).is_empty());
    }

    #[test]
    fn edge_into_ndd_is_reported_once() {
        let mut data = pair_graph();
        data.edges.push(Edge { id: 2, source: 2, target: 0, weight: 1.0 });
        let violations = validate_graph(&data);
        assert_eq!(violations, vec![Violation::EdgeIntoNdd { edge: 2, ndd: 0 }]);
    }

    #[test]
    fn duplicate_edge_ids_each_reported() {
        let mut data = pair_graph();
        data.edges.push(Edge { id: 1, source: 2, target: 1, weight: 1.0 });
        data.edges.push(Edge { id: 0, source: 0, target: 2, weight: 1.0 });
        let dups: Vec<_> = validate_graph(&data)
            .into_iter()
            .filter(|v| matches!(v, Violation::DuplicateEdgeId { .. }))
            .collect();
        assert_eq!(
            dups,
            vec![Violation::DuplicateEdgeId { id: 1 }, Violation::DuplicateEdgeId { id: 0 }]
        );
    }

    #[test]
    fn other_violations() {
        let mut data = pair_graph();
        data.edges.push(Edge { id: 2, source: 1, target: 1, weight: 1.0 });
        data.edges.push(Edge { id: 3, source: 1, target: 2, weight: 1.0 });
        data.edges.push(Edge { id: 4, source: 2, target: 7, weight: -1.0 });
        let violations = validate_graph(&data);
        assert!(violations.contains(&Violation::SelfLoop { edge: 2 }));
        assert!(violations.contains(&Violation::ParallelEdge { edge: 3, source: 1, target: 2 }));
        assert!(violations.contains(&Violation::UnknownEndpoint { edge: 4, vertex: 7 }));
        assert!(violations.contains(&Violation::InvalidWeight { edge: 4, weight: -1.0 }));
    }

    #[test]
    fn loader_rejects_invalid_files() {
        let text = r#"{"vertices":[{"id":0,"kind":"ndd"},{"id":1,"kind":"pair"}],
                       "edges":[{"id":0,"source":1,"target":0,"weight":1.0}]}"#;
        let err = ExchangeGraph::from_json(text).unwrap_err();
        assert!(err.to_string().contains("enters non-directed donor 0"), "{err}");
    }

    #[test]
    fn json_round_trip() {
        let g = fixtures::counterexample();
        let text = g.to_json().unwrap();
        assert!(text.contains("\"kind\": \"pair\""));
        assert_eq!(ExchangeGraph::from_json(&text).unwrap(), g);
    }
}
