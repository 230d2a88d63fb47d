//! Inputs shared by the benchmarks.

use edgequery::selection::Instance;
use edgequery::uncertainty::make_simple;
use edgequery::generate_random_graph;

/// First random graph at or after `seed` with at least `min_structures`
/// cycles and chains, under the Simple distribution.
pub fn random_instance(n: usize, p: f64, seed: u64, min_structures: usize) -> Instance {
    (seed..)
        .map(|s| {
            let g = generate_random_graph(n, p, s);
            let spec = make_simple(&g);
            Instance::new(g, spec).expect("simple distribution covers the graph")
        })
        .find(|inst| inst.structures.len() >= min_structures)
        .expect("unbounded search")
}
