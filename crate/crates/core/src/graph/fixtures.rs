//! Small hand-built graphs used in tests, the CLI and the session service.

use super::{ExchangeGraph, VertexKind};

/// Vertex ids of [`counterexample`], in order.
pub const COUNTEREXAMPLE_VERTICES: [&str; 6] = ["A", "B", "C", "D", "E", "F"];

/// Six pairs forming three overlapping cycles: (A,B), (B,C,E) and (C,D,F).
///
/// All weights are 1 except E->B, which weighs 1.5. The three edges whose
/// queries interact are the first three ids:
///
/// | id | edge   |
/// |----|--------|
/// | 0  | A -> B |
/// | 1  | B -> C |
/// | 2  | C -> D |
/// | 3  | B -> A |
/// | 4  | C -> E |
/// | 5  | E -> B (1.5) |
/// | 6  | D -> F |
/// | 7  | F -> C |
pub fn counterexample() -> ExchangeGraph {
    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;
    const D: usize = 3;
    const E: usize = 4;
    const F: usize = 5;
    ExchangeGraph::from_parts(
        &[VertexKind::Pair; 6],
        &[
            (A, B, 1.0),
            (B, C, 1.0),
            (C, D, 1.0),
            (B, A, 1.0),
            (C, E, 1.0),
            (E, B, 1.5),
            (D, F, 1.0),
            (F, C, 1.0),
        ],
    )
    .expect("fixture is valid")
}

/// Edge ids of the three interacting edges of [`counterexample`].
pub const COUNTEREXAMPLE_E1: usize = 0;
pub const COUNTEREXAMPLE_E2: usize = 1;
pub const COUNTEREXAMPLE_E3: usize = 2;

/// An NDD `n` (vertex 0) starting the chain n -> p1 -> p2 -> p3, with two
/// 2-cycles (p1,p4) and (p2,p5). Edge 0 is n -> p1.
pub fn chain_example() -> ExchangeGraph {
    let mut kinds = vec![VertexKind::Pair; 6];
    kinds[0] = VertexKind::Ndd;
    ExchangeGraph::from_parts(
        &kinds,
        &[
            (0, 1, 1.0),
            (1, 2, 1.0),
            (2, 3, 1.0),
            (1, 4, 1.0),
            (4, 1, 1.0),
            (2, 5, 1.0),
            (5, 2, 1.0),
        ],
    )
    .expect("fixture is valid")
}

/// Looks a fixture up by name (`counterexample`, `chain-example`).
pub fn by_name(name: &str) -> Option<ExchangeGraph> {
    match name {
        "counterexample" => Some(counterexample()),
        "chain-example" => Some(chain_example()),
        _ => None,
    }
}

pub const NAMES: [&str; 2] = ["counterexample", "chain-example"];
