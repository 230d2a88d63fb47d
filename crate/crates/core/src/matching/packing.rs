//! Exact maximum-value packing of vertex-disjoint structures.

use std::collections::HashMap;

use fixedbitset::FixedBitSet;

use super::Matching;
use crate::error::{Error, Result};
use crate::graph::CycleChain;

/// Largest structure list [`brute_force_packing`] accepts by default.
pub const BRUTE_FORCE_CAP: usize = 20;

// Values closer than this are treated as ties.
const TIE_EPS: f64 = 1e-12;

/// Maximum-value vertex-disjoint selection; returns selected indices, ascending.
///
/// Structures with non-positive value are never selected. The optimum is
/// computed by a memoized recursion over sets of still-selectable
/// structures: a set that falls apart into vertex-disjoint groups is solved
/// group by group, otherwise the recursion branches on the vertex shared by
/// the most structures (take one of them, or leave the vertex uncovered).
///
/// Among optimal selections the one including the lowest possible indices is
/// returned. It is built by walking structures in index order and keeping
/// each one whenever the optimum is still reachable with it.
pub fn pack(structures: &[CycleChain], values: &[f64]) -> Vec<usize> {
    assert_eq!(structures.len(), values.len());
    let candidates: Vec<usize> = (0..structures.len()).filter(|&i| values[i] > 0.0).collect();
    if candidates.is_empty() {
        return Vec::new();
    }
    let mut packer = Packer::new(structures, values, &candidates);
    let all = packer.full_set();
    let target = packer.optimum(&all);

    let mut free = all;
    let mut current = 0.0;
    let mut selected = Vec::new();
    for (i, &candidate) in candidates.iter().enumerate() {
        if !free.contains(i) {
            continue;
        }
        free.set(i, false);
        let mut rest = free.clone();
        rest.difference_with(&packer.conflicts[i]);
        if current + packer.values[i] + packer.optimum(&rest) >= target - TIE_EPS {
            current += packer.values[i];
            selected.push(candidate);
            free = rest;
        }
    }
    selected
}

/// Groups structure indices into connected components of the "shares a
/// vertex" relation. Each group is ascending; groups are ordered by their
/// smallest index. Packing decomposes over the groups, and so does the
/// lowest-index tie rule of [`pack`].
pub fn conflict_components(structures: &[CycleChain]) -> Vec<Vec<usize>> {
    let n = structures.len();
    let mut seen = vec![false; n];
    let mut groups = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut group = vec![start];
        let mut k = 0;
        while k < group.len() {
            let i = group[k];
            k += 1;
            for j in 0..n {
                if !seen[j] && structures[i].conflicts_with(&structures[j]) {
                    seen[j] = true;
                    group.push(j);
                }
            }
        }
        group.sort_unstable();
        groups.push(group);
    }
    groups
}

/// Exact weighted set packing over a fixed candidate list.
struct Packer {
    values: Vec<f64>,
    /// `conflicts[i]`: candidates sharing a vertex with candidate `i`, itself included.
    conflicts: Vec<FixedBitSet>,
    /// Vertex lists of each candidate.
    vertices: Vec<Vec<usize>>,
    /// Candidates covering each vertex.
    covering: HashMap<usize, FixedBitSet>,
    memo: HashMap<FixedBitSet, f64>,
}

impl Packer {
    fn new(structures: &[CycleChain], values: &[f64], candidates: &[usize]) -> Self {
        let n = candidates.len();
        let mut covering: HashMap<usize, FixedBitSet> = HashMap::new();
        for (k, &i) in candidates.iter().enumerate() {
            for &v in &structures[i].vertices {
                covering.entry(v).or_insert_with(|| FixedBitSet::with_capacity(n)).insert(k);
            }
        }
        let conflicts = candidates
            .iter()
            .map(|&i| {
                let mut set = FixedBitSet::with_capacity(n);
                for v in &structures[i].vertices {
                    set.union_with(&covering[v]);
                }
                set
            })
            .collect();
        Packer {
            values: candidates.iter().map(|&i| values[i]).collect(),
            conflicts,
            vertices: candidates.iter().map(|&i| structures[i].vertices.clone()).collect(),
            covering,
            memo: HashMap::new(),
        }
    }

    fn full_set(&self) -> FixedBitSet {
        let mut all = FixedBitSet::with_capacity(self.values.len());
        all.insert_range(..);
        all
    }

    /// Best total value of a disjoint selection from `set`.
    fn optimum(&mut self, set: &FixedBitSet) -> f64 {
        let Some(first) = set.minimum() else { return 0.0 };
        if let Some(&v) = self.memo.get(set) {
            return v;
        }
        // connected group of `first` within `set`
        let mut group = FixedBitSet::with_capacity(set.len());
        group.insert(first);
        let mut frontier = vec![first];
        while let Some(i) = frontier.pop() {
            for j in self.conflicts[i].intersection(set) {
                if !group.put(j) {
                    frontier.push(j);
                }
            }
        }
        let value = if group.count_ones(..) < set.count_ones(..) {
            let mut rest = set.clone();
            rest.difference_with(&group);
            self.optimum(&group) + self.optimum(&rest)
        } else {
            self.branch(set)
        };
        self.memo.insert(set.clone(), value);
        value
    }

    fn branch(&mut self, set: &FixedBitSet) -> f64 {
        if set.count_ones(..) == 1 {
            return self.values[set.minimum().expect("non-empty")];
        }
        // vertex shared by the most structures in `set`, lowest id on ties
        let mut vertex = usize::MAX;
        let mut degree = 0;
        for i in set.ones() {
            for &v in &self.vertices[i] {
                let d = self.covering[&v].intersection(set).count();
                if d > degree || (d == degree && v < vertex) {
                    vertex = v;
                    degree = d;
                }
            }
        }
        let mut take: Vec<usize> = self.covering[&vertex].intersection(set).collect();
        take.sort_unstable();
        let mut without = set.clone();
        without.difference_with(&self.covering[&vertex]);
        let mut best = self.optimum(&without);
        for i in take {
            let mut rest = set.clone();
            rest.difference_with(&self.conflicts[i]);
            let v = self.values[i] + self.optimum(&rest);
            if v > best {
                best = v;
            }
        }
        best
    }
}

/// Test oracle: enumerates every vertex-disjoint subset of the
/// positive-value structures and keeps the best, with the same tie rule as
/// [`pack`]. Errors if more than `cap` structures are given.
pub fn brute_force_packing(structures: &[CycleChain], values: &[f64], cap: usize) -> Result<Matching> {
    if structures.len() > cap {
        return Err(Error::TooManyStructures { count: structures.len(), cap });
    }
    let candidates: Vec<usize> = (0..structures.len()).filter(|&i| values[i] > 0.0).collect();
    let mut best: (f64, Vec<usize>) = (0.0, Vec::new());
    let mut chosen = Vec::new();
    enumerate(structures, values, &candidates, 0, &mut chosen, &mut best);
    Ok(Matching::from_selection(structures, values, best.1))
}

fn enumerate(
    structures: &[CycleChain],
    values: &[f64],
    candidates: &[usize],
    pos: usize,
    chosen: &mut Vec<usize>,
    best: &mut (f64, Vec<usize>),
) {
    if pos == candidates.len() {
        let value: f64 = chosen.iter().map(|&i| values[i]).sum();
        if value > best.0 + TIE_EPS {
            *best = (value, chosen.clone());
        }
        return;
    }
    let i = candidates[pos];
    if chosen.iter().all(|&j| !structures[i].conflicts_with(&structures[j])) {
        chosen.push(i);
        enumerate(structures, values, candidates, pos + 1, chosen, best);
        chosen.pop();
    }
    enumerate(structures, values, candidates, pos + 1, chosen, best);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{enumerate_structures, fixtures, generate_random_graph, ExchangeGraph, VertexKind};

    fn values_of(structures: &[CycleChain]) -> Vec<f64> {
        structures.iter().map(|s| s.nominal_weight).collect()
    }

    #[test]
    fn counterexample_nominal() {
        let g = fixtures::counterexample();
        let s = enumerate_structures(&g, 3, 3);
        let v = values_of(&s);
        assert_eq!(pack(&s, &v), vec![0, 2]);
        let brute = brute_force_packing(&s, &v, BRUTE_FORCE_CAP).unwrap();
        assert_eq!(brute.selected, vec![0, 2]);
        assert_eq!(brute.value, 5.0);
    }

    #[test]
    fn single_structure() {
        let g = ExchangeGraph::from_parts(&[VertexKind::Pair; 2], &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let s = enumerate_structures(&g, 3, 3);
        assert_eq!(brute_force_packing(&s, &[2.0], 20).unwrap().selected, vec![0]);
        assert_eq!(pack(&s, &[2.0]), vec![0]);
    }

    #[test]
    fn all_conflicting_picks_best_singleton() {
        // chains from one NDD all share the NDD
        let mut kinds = vec![VertexKind::Pair; 4];
        kinds[0] = VertexKind::Ndd;
        let g = ExchangeGraph::from_parts(&kinds, &[(0, 1, 1.0), (0, 2, 3.0), (0, 3, 2.0)]).unwrap();
        let s = enumerate_structures(&g, 3, 3);
        let v = values_of(&s);
        assert_eq!(pack(&s, &v), vec![1]);
        assert_eq!(brute_force_packing(&s, &v, 20).unwrap().selected, vec![1]);
    }

    #[test]
    fn ties_prefer_lower_indices() {
        let mut kinds = vec![VertexKind::Pair; 3];
        kinds[0] = VertexKind::Ndd;
        let g = ExchangeGraph::from_parts(&kinds, &[(0, 1, 1.0), (0, 2, 1.0)]).unwrap();
        let s = enumerate_structures(&g, 3, 3);
        assert_eq!(pack(&s, &[1.0, 1.0]), vec![0]);
        assert_eq!(pack(&s, &[0.0, 1.0]), vec![1]);
        assert!(pack(&s, &[0.0, 0.0]).is_empty());
    }

    #[test]
    fn cap_enforced() {
        let g = generate_random_graph(30, 0.2, 1);
        let s = enumerate_structures(&g, 3, 3);
        assert!(s.len() > 20);
        assert!(matches!(
            brute_force_packing(&s, &values_of(&s), 20),
            Err(Error::TooManyStructures { .. })
        ));
    }

    #[test]
    fn agrees_with_brute_force_on_random_graphs() {
        for seed in 0..40 {
            let g = generate_random_graph(12, 0.15, seed);
            let s = enumerate_structures(&g, 3, 3);
            let v: Vec<f64> = s.iter().enumerate().map(|(i, c)| c.nominal_weight * (1.0 + (i % 3) as f64)).collect();
            let fast = pack(&s, &v);
            let brute = brute_force_packing(&s, &v, usize::MAX).unwrap();
            assert_eq!(fast, brute.selected, "seed {seed}");
        }
    }
}
