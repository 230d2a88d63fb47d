/// Visit statistics of a search-tree node.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UcbStats {
    /// Sum of values propagated through the node (`U`).
    pub total_value: f64,
    /// Number of visits (`N`).
    pub visits: u64,
}

impl UcbStats {
    pub fn record(&mut self, value: f64) {
        self.total_value += value;
        self.visits += 1;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.visits > 0).then(|| self.total_value / self.visits as f64)
    }
}

/// Upper confidence bound of a child node.
///
/// `(U/N - v_min)/(v_max - v_min) + sqrt(N_parent / N)`. An unvisited child
/// scores `+inf` so every child is tried once, and the normalized term is 0
/// while all values seen so far are equal.
pub fn ucb_score(node: &UcbStats, parent_visits: u64, v_min: f64, v_max: f64) -> f64 {
    if node.visits == 0 {
        return f64::INFINITY;
    }
    let n = node.visits as f64;
    let exploit = if v_max > v_min { (node.total_value / n - v_min) / (v_max - v_min) } else { 0.0 };
    exploit + (parent_visits as f64 / n).sqrt()
}

/// Running minimum and maximum of all values seen by a search.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ValueRange {
    pub min: f64,
    pub max: f64,
}

impl Default for ValueRange {
    fn default() -> Self {
        ValueRange { min: f64::INFINITY, max: f64::NEG_INFINITY }
    }
}

impl ValueRange {
    pub fn observe(&mut self, value: f64) {
        self.min = self.min.min(value);
        self.max = self.max.max(value);
    }
}
