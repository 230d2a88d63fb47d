//! Per-edge rejection and failure distributions, scenario sampling and exact
//! scenario enumeration.
//!
//! Every edge is independent. An edge that is queried is rejected with
//! probability `p_reject`; if it is accepted it survives post-match with
//! probability `p_success_queried`. An edge that is never queried survives
//! post-match with probability `p_success_unqueried`.

mod edge_set;
mod stream;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ExchangeGraph, VertexKind};

pub use edge_set::{EdgeSet, FailureVector, QuerySet, RejectionVector};
pub use stream::{Phase, ScenarioStream};

/// Default largest query set evaluated by full scenario enumeration.
pub const DEFAULT_EXACT_CAP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeProbabilities {
    pub p_reject: f64,
    pub p_success_queried: f64,
    pub p_success_unqueried: f64,
}

impl EdgeProbabilities {
    pub const SIMPLE: EdgeProbabilities =
        EdgeProbabilities { p_reject: 0.5, p_success_queried: 1.0, p_success_unqueried: 0.5 };

    pub fn is_valid(&self) -> bool {
        [self.p_reject, self.p_success_queried, self.p_success_unqueried]
            .iter()
            .all(|p| (0.0..=1.0).contains(p))
    }

    /// `E[r_e + f_e]`: the chance the edge ends up unusable, either rejected
    /// or failed.
    pub fn overall_death_probability(&self, queried: bool) -> f64 {
        if queried {
            self.p_reject + (1.0 - self.p_reject) * (1.0 - self.p_success_queried)
        } else {
            1.0 - self.p_success_unqueried
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionKind {
    Simple,
    Kpd,
    Custom,
}

/// How a distribution was produced; stored next to the probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: DistributionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub high_risk: Vec<usize>,
}

/// Independent per-edge probabilities covering every edge id exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSpec {
    per_edge: Vec<EdgeProbabilities>,
    provenance: Provenance,
}

impl DistributionSpec {
    pub fn new(per_edge: Vec<EdgeProbabilities>, provenance: Provenance) -> Result<Self> {
        if let Some((e, _)) = per_edge.iter().enumerate().find(|(_, p)| !p.is_valid()) {
            return Err(Error::InvalidDistribution(format!(
                "edge {e} has a probability outside [0, 1]"
            )));
        }
        Ok(DistributionSpec { per_edge, provenance })
    }

    /// The same probabilities for every edge.
    pub fn uniform(edge_count: usize, probs: EdgeProbabilities) -> Result<Self> {
        Self::new(
            vec![probs; edge_count],
            Provenance { kind: DistributionKind::Custom, seed: None, high_risk: Vec::new() },
        )
    }

    pub fn edge_count(&self) -> usize {
        self.per_edge.len()
    }

    pub fn get(&self, edge: usize) -> &EdgeProbabilities {
        &self.per_edge[edge]
    }

    pub fn per_edge(&self) -> &[EdgeProbabilities] {
        &self.per_edge
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn overall_death_probability(&self, edge: usize, queried: bool) -> f64 {
        self.per_edge[edge].overall_death_probability(queried)
    }

    /// Post-match survival probability of `edge` given the query state:
    /// 0 if rejected, `p_success_queried` if queried and accepted,
    /// `p_success_unqueried` otherwise.
    pub fn success_probability(&self, edge: usize, q: &QuerySet, r: &RejectionVector) -> f64 {
        let p = &self.per_edge[edge];
        if r.contains(edge) {
            0.0
        } else if q.contains(edge) {
            p.p_success_queried
        } else {
            p.p_success_unqueried
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&DistributionFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DistributionFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    /// Checks that the distribution covers exactly the edges of `graph`.
    pub fn check_covers(&self, graph: &ExchangeGraph) -> Result<()> {
        if self.edge_count() != graph.edge_count() {
            return Err(Error::InvalidDistribution(format!(
                "distribution covers {} edges, graph has {}",
                self.edge_count(),
                graph.edge_count()
            )));
        }
        Ok(())
    }
}

/// On-disk form: a map from edge id to probabilities, plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionFile {
    pub provenance: Provenance,
    #[serde(deserialize_with = "edge_keyed::deserialize")]
    pub per_edge: BTreeMap<usize, EdgeProbabilities>,
}

/// JSON object keys are strings; when the file is embedded in a buffered
/// (e.g. internally tagged) value serde no longer parses them as integers,
/// so the key accepts both forms.
mod edge_keyed {
    use std::collections::BTreeMap;
    use std::fmt;

    use serde::de::{self, Deserializer, Visitor};
    use serde::Deserialize;

    use super::EdgeProbabilities;

    #[derive(PartialEq, Eq, PartialOrd, Ord)]
    struct EdgeId(usize);

    impl<'de> Deserialize<'de> for EdgeId {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            struct IdVisitor;
            impl Visitor<'_> for IdVisitor {
                type Value = EdgeId;
                fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                    f.write_str("an edge id")
                }
                fn visit_u64<E: de::Error>(self, v: u64) -> Result<EdgeId, E> {
                    usize::try_from(v).map(EdgeId).map_err(E::custom)
                }
                fn visit_str<E: de::Error>(self, v: &str) -> Result<EdgeId, E> {
                    v.parse().map(EdgeId).map_err(|_| E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
            d.deserialize_any(IdVisitor)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<usize, EdgeProbabilities>, D::Error> {
        let raw = BTreeMap::<EdgeId, EdgeProbabilities>::deserialize(d)?;
        Ok(raw.into_iter().map(|(EdgeId(k), v)| (k, v)).collect())
    }
}

impl From<&DistributionSpec> for DistributionFile {
    fn from(spec: &DistributionSpec) -> Self {
        DistributionFile {
            provenance: spec.provenance.clone(),
            per_edge: spec.per_edge.iter().copied().enumerate().collect(),
        }
    }
}

impl TryFrom<DistributionFile> for DistributionSpec {
    type Error = Error;

    fn try_from(file: DistributionFile) -> Result<Self> {
        // BTreeMap keys are unique and sorted, so contiguity is the only check
        for (position, &id) in file.per_edge.keys().enumerate() {
            if id != position {
                return Err(Error::InvalidDistribution(format!(
                    "edge ids must be 0..m without gaps; found {id} at position {position}"
                )));
            }
        }
        DistributionSpec::new(file.per_edge.into_values().collect(), file.provenance)
    }
}

/// Rejection 0.5, queried success 1.0, unqueried success 0.5 on every edge.
pub fn make_simple(graph: &ExchangeGraph) -> DistributionSpec {
    DistributionSpec {
        per_edge: vec![EdgeProbabilities::SIMPLE; graph.edge_count()],
        provenance: Provenance { kind: DistributionKind::Simple, seed: None, high_risk: Vec::new() },
    }
}

/// Randomized distribution modeled on a fielded exchange.
///
/// Rejection ~ U(0.25, 0.43) on every edge. High-risk edges draw queried
/// success from U(0.2, 0.5) and unqueried success from U(0.0, 0.2); the rest
/// draw from U(0.9, 1.0) and U(0.8, 0.9).
pub fn make_kpd(graph: &ExchangeGraph, high_risk: &[usize], seed: u64) -> Result<DistributionSpec> {
    let m = graph.edge_count();
    if let Some(&bad) = high_risk.iter().find(|&&e| e >= m) {
        return Err(Error::UnknownEdge(bad));
    }
    let risky = EdgeSet::from_edges(m, high_risk.iter().copied());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_edge = (0..m)
        .map(|e| {
            let p_reject = rng.random_range(0.25..=0.43);
            let (q_range, n_range) =
                if risky.contains(e) { ((0.2, 0.5), (0.0, 0.2)) } else { ((0.9, 1.0), (0.8, 0.9)) };
            let p_success_queried = rng.random_range(q_range.0..=q_range.1);
            let p_success_unqueried = rng.random_range(n_range.0..=n_range.1);
            EdgeProbabilities { p_reject, p_success_queried, p_success_unqueried }
        })
        .collect();
    let mut high_risk = risky.to_vec();
    high_risk.dedup();
    Ok(DistributionSpec {
        per_edge,
        provenance: Provenance { kind: DistributionKind::Kpd, seed: Some(seed), high_risk },
    })
}

/// Picks `round(fraction * pairs)` pair vertices as highly sensitized and
/// returns the ids of all edges entering them.
pub fn high_risk_edges(graph: &ExchangeGraph, fraction: f64, seed: u64) -> Vec<usize> {
    let mut pairs: Vec<usize> = graph
        .vertices()
        .iter()
        .filter(|v| v.kind == VertexKind::Pair)
        .map(|v| v.id)
        .collect();
    let take = ((fraction.clamp(0.0, 1.0)) * pairs.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    let mut sensitized = vec![false; graph.vertex_count()];
    for &v in &pairs[..take] {
        sensitized[v] = true;
    }
    graph.edges().iter().filter(|e| sensitized[e.target]).map(|e| e.id).collect()
}

/// Draws `r`: each queried edge is rejected independently with its
/// rejection probability; unqueried edges are never rejected.
pub fn sample_rejections(spec: &DistributionSpec, q: &QuerySet, stream: &ScenarioStream) -> RejectionVector {
    let mut r = EdgeSet::empty(q.universe());
    let mut draws = stream.draws();
    for e in q.iter() {
        if draws.uniform(e) < spec.get(e).p_reject {
            r.insert(e);
        }
    }
    r
}

/// Draws `f` given `(q, r)`. Rejected edges are already dead and get
/// `f_e = 0`, so `r + f` stays an indicator vector.
pub fn sample_failures(
    spec: &DistributionSpec,
    q: &QuerySet,
    r: &RejectionVector,
    stream: &ScenarioStream,
) -> Result<FailureVector> {
    check_consistent(q, r)?;
    let mut f = EdgeSet::empty(q.universe());
    let mut draws = stream.draws();
    for e in 0..q.universe() {
        if r.contains(e) {
            continue;
        }
        let survive = if q.contains(e) {
            spec.get(e).p_success_queried
        } else {
            spec.get(e).p_success_unqueried
        };
        if draws.uniform(e) < 1.0 - survive {
            f.insert(e);
        }
    }
    Ok(f)
}

/// Errors unless every rejected edge was queried.
pub fn check_consistent(q: &QuerySet, r: &RejectionVector) -> Result<()> {
    if q.universe() != r.universe() {
        return Err(Error::InvalidDistribution(format!(
            "query set covers {} edges but rejection vector covers {}",
            q.universe(),
            r.universe()
        )));
    }
    match r.iter().find(|&e| !q.contains(e)) {
        Some(e) => Err(Error::InconsistentResponses(e)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionScenario {
    pub rejections: RejectionVector,
    pub probability: f64,
}

/// All `2^|q|` rejection patterns over the queried edges, with their
/// product-form probabilities.
///
/// Pattern `k` rejects the `i`-th queried edge (ascending id) when bit `i`
/// of `k` is set.
pub fn enumerate_rejection_scenarios(
    spec: &DistributionSpec,
    q: &QuerySet,
    cap: usize,
) -> Result<Vec<RejectionScenario>> {
    let queried = q.to_vec();
    if queried.len() > cap {
        return Err(Error::ExactCapExceeded { size: queried.len(), cap });
    }
    Ok(enumerate_patterns(spec, &queried, q.universe()))
}

pub(crate) fn enumerate_patterns(
    spec: &DistributionSpec,
    edges: &[usize],
    universe: usize,
) -> Vec<RejectionScenario> {
    (0..1u64 << edges.len())
        .map(|pattern| {
            let mut rejections = EdgeSet::empty(universe);
            let mut probability = 1.0;
            for (i, &e) in edges.iter().enumerate() {
                let p = spec.get(e).p_reject;
                if pattern >> i & 1 == 1 {
                    rejections.insert(e);
                    probability *= p;
                } else {
                    probability *= 1.0 - p;
                }
            }
            RejectionScenario { rejections, probability }
        })
        .collect()
}

/// Result of checking that querying never raises an edge's chance of ending
/// up unusable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// Edges where the queried death probability exceeds the unqueried one.
    pub violating_edges: Vec<usize>,
}

impl AssumptionReport {
    pub fn passes(&self) -> bool {
        self.violating_edges.is_empty()
    }
}

pub fn check_assumption_1(spec: &DistributionSpec) -> AssumptionReport {
    let violating_edges = (0..spec.edge_count())
        .filter(|&e| {
            spec.overall_death_probability(e, true) > spec.overall_death_probability(e, false) + 1e-12
        })
        .collect();
    AssumptionReport { violating_edges }
}
