use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ExchangeGraph, VertexKind};

/// Directed Erdős–Rényi exchange graph on `n` vertices.
///
/// Each ordered pair of distinct vertices gets an edge independently with
/// probability `p`. Vertices left without incoming edges become NDDs. All
/// weights are 1.
pub fn generate_random_graph(n: usize, p: f64, seed: u64) -> ExchangeGraph {
    assert!(n >= 1, "graph needs at least one vertex");
    assert!((0.0..=1.0).contains(&p), "edge probability {p} outside [0, 1]");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut arcs = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < p {
                arcs.push((u, v, 1.0));
            }
            if rng.random::<f64>() < p {
                arcs.push((v, u, 1.0));
            }
        }
    }
    arcs.sort_by_key(|&(s, t, _)| (s, t));

    let mut has_incoming = vec![false; n];
    for &(_, t, _) in &arcs {
        has_incoming[t] = true;
    }
    let kinds: Vec<_> = has_incoming
        .into_iter()
        .map(|incoming| if incoming { VertexKind::Pair } else { VertexKind::Ndd })
        .collect();
    ExchangeGraph::from_parts(&kinds, &arcs).expect("generated graphs are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_probability() {
        let g = generate_random_graph(10, 0.0, 7);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.ndd_count(), 10);
    }

    #[test]
    fn complete_digraph() {
        let g = generate_random_graph(3, 1.0, 7);
        assert_eq!(g.edge_count(), 6);
        assert_eq!(g.ndd_count(), 0);
    }

    #[test]
    fn reproducible() {
        let a = generate_random_graph(40, 0.05, 11);
        let b = generate_random_graph(40, 0.05, 11);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = generate_random_graph(40, 0.05, 12);
        assert_ne!(a, c);
    }

    #[test]
    fn mean_edge_count_matches_binomial() {
        // E = n(n-1)p = 24.5, Var = n(n-1)p(1-p)
        let (n, p, runs) = (50usize, 0.01, 1000);
        let trials = (n * (n - 1)) as f64;
        let mean_expected = trials * p;
        let sd = (trials * p * (1.0 - p)).sqrt();
        let total: usize = (0..runs).map(|s| generate_random_graph(n, p, s as u64).edge_count()).sum();
        let mean = total as f64 / runs as f64;
        let se = sd / (runs as f64).sqrt();
        assert!((mean - mean_expected).abs() <= 3.0 * se, "mean {mean} vs {mean_expected} (se {se})");
    }

    #[test]
    fn ndds_have_no_incoming_edges() {
        let g = generate_random_graph(50, 0.02, 3);
        for e in g.edges() {
            assert!(!g.is_ndd(e.target));
        }
    }
}
