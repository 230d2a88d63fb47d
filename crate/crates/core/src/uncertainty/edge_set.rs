use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A set of edge ids over a fixed universe `0..len`, stored as a bit vector.
///
/// Used for query sets (`q`), rejection vectors (`r`) and failure vectors
/// (`f`), which are all indicator vectors indexed by edge id.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct EdgeSet(FixedBitSet);

/// Edges chosen for pre-match querying.
pub type QuerySet = EdgeSet;
/// Queried edges that were rejected pre-match.
pub type RejectionVector = EdgeSet;
/// Edges that fail post-match.
pub type FailureVector = EdgeSet;

impl EdgeSet {
    pub fn empty(len: usize) -> Self {
        EdgeSet(FixedBitSet::with_capacity(len))
    }

    pub fn full(len: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(len);
        bits.insert_range(..);
        EdgeSet(bits)
    }

    /// Panics if an edge is outside the universe.
    pub fn from_edges(len: usize, edges: impl IntoIterator<Item = usize>) -> Self {
        let mut set = Self::empty(len);
        for e in edges {
            set.insert(e);
        }
        set
    }

    /// Size of the universe, i.e. the number of graph edges.
    pub fn universe(&self) -> usize {
        self.0.len()
    }

    pub fn count(&self) -> usize {
        self.0.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_clear()
    }

    pub fn contains(&self, edge: usize) -> bool {
        self.0.contains(edge)
    }

    pub fn insert(&mut self, edge: usize) {
        assert!(edge < self.universe(), "edge {edge} outside universe of {}", self.universe());
        self.0.insert(edge);
    }

    pub fn remove(&mut self, edge: usize) {
        self.0.set(edge, false);
    }

    pub fn with(&self, edge: usize) -> Self {
        let mut next = self.clone();
        next.insert(edge);
        next
    }

    /// Edge ids in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.ones()
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn is_subset(&self, other: &EdgeSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn intersection(&self, other: &EdgeSet) -> EdgeSet {
        let mut bits = self.0.clone();
        bits.intersect_with(&other.0);
        EdgeSet(bits)
    }

    pub fn union(&self, other: &EdgeSet) -> EdgeSet {
        let mut bits = self.0.clone();
        bits.union_with(&other.0);
        EdgeSet(bits)
    }

    pub fn max_edge(&self) -> Option<usize> {
        self.0.maximum()
    }
}

impl fmt::Debug for EdgeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[derive(Serialize, Deserialize)]
struct EdgeSetRepr {
    universe: usize,
    edges: Vec<usize>,
}

impl Serialize for EdgeSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        EdgeSetRepr { universe: self.universe(), edges: self.to_vec() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EdgeSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = EdgeSetRepr::deserialize(deserializer)?;
        if let Some(&bad) = repr.edges.iter().find(|&&e| e >= repr.universe) {
            return Err(serde::de::Error::custom(format!(
                "edge {bad} outside universe of {}",
                repr.universe
            )));
        }
        Ok(EdgeSet::from_edges(repr.universe, repr.edges))
    }
}
