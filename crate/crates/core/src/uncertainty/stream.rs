use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a random draw is used for. Each phase gets an unrelated key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Phase {
    Rejection = 1,
    Failure = 2,
    Realization = 3,
    Bootstrap = 4,
}

/// Counter-based randomness addressed by `(seed, phase, scenario, edge)`.
///
/// The draw for an edge depends only on that address, so adding edges to a
/// query set leaves every other edge's outcome unchanged, and all methods
/// compared on a graph see the same scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScenarioStream {
    pub seed: u64,
    pub phase: Phase,
    pub scenario: u64,
}

impl ScenarioStream {
    pub fn new(seed: u64, phase: Phase, scenario: u64) -> Self {
        ScenarioStream { seed, phase, scenario }
    }

    pub fn draws(&self) -> EdgeDraws {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(self.phase as u64).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.scenario);
        EdgeDraws { rng }
    }

    /// Uniform draw in `[0, 1)` for a single edge.
    pub fn uniform(&self, edge: usize) -> f64 {
        self.draws().uniform(edge)
    }
}

/// Reader over one scenario's per-edge draws.
pub struct EdgeDraws {
    rng: ChaCha8Rng,
}

impl EdgeDraws {
    pub fn uniform(&mut self, edge: usize) -> f64 {
        // one u64 (two 32-bit words) per edge
        self.rng.set_word_pos(2 * edge as u128);
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
