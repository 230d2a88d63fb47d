use super::{CycleChain, ExchangeGraph, StructureKind, VertexKind};

pub const DEFAULT_MAX_CYCLE_LEN: usize = 3;
pub const DEFAULT_MAX_CHAIN_LEN: usize = 3;

/// Lists every cycle of at most `max_cycle_len` edges among pair vertices and
/// every chain of at most `max_chain_len` edges starting at an NDD.
///
/// Chains of every length are emitted (a chain and its prefixes are distinct
/// structures that conflict with each other). Cycles are rotated to start at
/// their smallest vertex; the output is sorted by edge-id sequence.
pub fn enumerate_structures(
    graph: &ExchangeGraph,
    max_cycle_len: usize,
    max_chain_len: usize,
) -> Vec<CycleChain> {
    let mut found: Vec<(StructureKind, Vec<usize>)> = Vec::new();
    let mut on_path = vec![false; graph.vertex_count()];
    let mut path = Vec::new();

    for start in 0..graph.vertex_count() {
        match graph.vertices()[start].kind {
            VertexKind::Pair => {
                on_path[start] = true;
                extend_cycles(graph, start, start, max_cycle_len, &mut on_path, &mut path, &mut found);
                on_path[start] = false;
            }
            VertexKind::Ndd => {
                on_path[start] = true;
                extend_chains(graph, start, max_chain_len, &mut on_path, &mut path, &mut found);
                on_path[start] = false;
            }
        }
    }

    found.sort_by(|a, b| a.1.cmp(&b.1));
    found
        .into_iter()
        .map(|(kind, edges)| CycleChain::new(graph, kind, edges))
        .collect()
}

fn extend_cycles(
    graph: &ExchangeGraph,
    start: usize,
    at: usize,
    cap: usize,
    on_path: &mut [bool],
    path: &mut Vec<usize>,
    found: &mut Vec<(StructureKind, Vec<usize>)>,
) {
    for &e in graph.out_edges(at) {
        let next = graph.edge(e).target;
        if next == start {
            path.push(e);
            found.push((StructureKind::Cycle, path.clone()));
            path.pop();
        } else if next > start && !on_path[next] && path.len() + 1 < cap {
            // every vertex after the start has a larger id, so each cycle is
            // found exactly once, from its smallest vertex
            on_path[next] = true;
            path.push(e);
            extend_cycles(graph, start, next, cap, on_path, path, found);
            path.pop();
            on_path[next] = false;
        }
    }
}

fn extend_chains(
    graph: &ExchangeGraph,
    at: usize,
    cap: usize,
    on_path: &mut [bool],
    path: &mut Vec<usize>,
    found: &mut Vec<(StructureKind, Vec<usize>)>,
) {
    if path.len() == cap {
        return;
    }
    for &e in graph.out_edges(at) {
        let next = graph.edge(e).target;
        if on_path[next] {
            continue;
        }
        on_path[next] = true;
        path.push(e);
        found.push((StructureKind::Chain, path.clone()));
        extend_chains(graph, next, cap, on_path, path, found);
        path.pop();
        on_path[next] = false;
    }
}
