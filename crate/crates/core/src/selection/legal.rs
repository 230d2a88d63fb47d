use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ExchangeGraph;
use crate::uncertainty::{EdgeSet, QuerySet};

/// Serializable description of which query sets are allowed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegalConfig {
    /// Maximum number of queried edges (`Γ`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    /// Maximum number of queried edges entering any one recipient vertex.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_vertex_cap: Option<usize>,
    /// Restricts queries to these edges; all edges when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_set: Option<Vec<usize>>,
}

impl LegalConfig {
    pub fn budget(gamma: usize) -> Self {
        LegalConfig { budget: Some(gamma), ..Default::default() }
    }
}

/// The family of legal query sets.
///
/// Legal sets are subsets of a ground set that respect an optional
/// cardinality budget and an optional cap on queried edges per recipient.
/// The per-recipient cap is a partition matroid (edges are partitioned by
/// target vertex) and the budget truncates it, so every combination is a
/// matroid: subsets of legal sets are legal and every legal set extends to
/// one of size [`max_size`](Self::max_size).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LegalEdgeSets {
    ground: EdgeSet,
    budget: Option<usize>,
    per_vertex_cap: Option<usize>,
    recipient: Vec<usize>,
    vertex_count: usize,
}

impl LegalEdgeSets {
    pub fn new(graph: &ExchangeGraph, config: &LegalConfig) -> Result<Self> {
        let ground = match &config.ground_set {
            None => EdgeSet::full(graph.edge_count()),
            Some(edges) => {
                if let Some(&bad) = edges.iter().find(|&&e| e >= graph.edge_count()) {
                    return Err(Error::UnknownEdge(bad));
                }
                EdgeSet::from_edges(graph.edge_count(), edges.iter().copied())
            }
        };
        Ok(LegalEdgeSets {
            ground,
            budget: config.budget,
            per_vertex_cap: config.per_vertex_cap,
            recipient: graph.edges().iter().map(|e| e.target).collect(),
            vertex_count: graph.vertex_count(),
        })
    }

    /// All sets of at most `gamma` edges.
    pub fn with_budget(graph: &ExchangeGraph, gamma: usize) -> Self {
        Self::new(graph, &LegalConfig::budget(gamma)).expect("no ground set to validate")
    }

    pub fn config(&self) -> LegalConfig {
        let full = self.ground.count() == self.ground.universe();
        LegalConfig {
            budget: self.budget,
            per_vertex_cap: self.per_vertex_cap,
            ground_set: (!full).then(|| self.ground.to_vec()),
        }
    }

    pub fn ground_set(&self) -> &EdgeSet {
        &self.ground
    }

    pub fn budget(&self) -> Option<usize> {
        self.budget
    }

    pub fn edge_count(&self) -> usize {
        self.ground.universe()
    }

    fn recipient_load(&self, q: &QuerySet) -> Vec<usize> {
        let mut load = vec![0; self.vertex_count];
        for e in q.iter() {
            load[self.recipient[e]] += 1;
        }
        load
    }

    /// Ok if `q` is legal, otherwise an error naming the broken rule.
    pub fn check(&self, q: &QuerySet) -> Result<()> {
        if q.universe() != self.edge_count() {
            return Err(Error::IllegalQuerySet(format!(
                "query set covers {} edges, graph has {}",
                q.universe(),
                self.edge_count()
            )));
        }
        if let Some(e) = q.iter().find(|&e| !self.ground.contains(e)) {
            return Err(Error::IllegalQuerySet(format!("edge {e} is not in the ground set")));
        }
        if let Some(gamma) = self.budget {
            if q.count() > gamma {
                return Err(Error::IllegalQuerySet(format!(
                    "{} edges exceed the budget of {gamma}",
                    q.count()
                )));
            }
        }
        if let Some(cap) = self.per_vertex_cap {
            let load = self.recipient_load(q);
            if let Some(v) = (0..load.len()).find(|&v| load[v] > cap) {
                return Err(Error::IllegalQuerySet(format!(
                    "{} queried edges enter vertex {v}, cap is {cap}",
                    load[v]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, q: &QuerySet) -> bool {
        self.check(q).is_ok()
    }

    /// Edges that can be added to the legal set `q`, ascending.
    pub fn extensions(&self, q: &QuerySet) -> Vec<usize> {
        if self.budget.is_some_and(|gamma| q.count() >= gamma) {
            return Vec::new();
        }
        let load = self.per_vertex_cap.map(|_| self.recipient_load(q));
        self.ground
            .iter()
            .filter(|&e| !q.contains(e))
            .filter(|&e| match (&load, self.per_vertex_cap) {
                (Some(load), Some(cap)) => load[self.recipient[e]] < cap,
                _ => true,
            })
            .collect()
    }

    /// `C(q)`: legal supersets of `q` with one more edge, by ascending added edge.
    pub fn children(&self, q: &QuerySet) -> Vec<QuerySet> {
        self.extensions(q).into_iter().map(|e| q.with(e)).collect()
    }

    pub fn can_add(&self, q: &QuerySet, edge: usize) -> bool {
        edge < self.edge_count() && !q.contains(edge) && self.contains(&q.with(edge))
    }

    /// Rank of the matroid: the size of every maximal legal set.
    pub fn max_size(&self) -> usize {
        let free = match self.per_vertex_cap {
            None => self.ground.count(),
            Some(cap) => {
                let mut into = vec![0usize; self.vertex_count];
                for e in self.ground.iter() {
                    into[self.recipient[e]] += 1;
                }
                into.iter().map(|&n| n.min(cap)).sum()
            }
        };
        self.budget.map_or(free, |gamma| free.min(gamma))
    }
}
