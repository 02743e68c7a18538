//! Filter acceptance for the line search: a trial point is acceptable if no
//! stored pair `(θ, f)` dominates it.

/// Margin on the constraint violation.
pub const GAMMA_THETA: f64 = 1e-5;
/// Margin on the objective.
pub const GAMMA_F: f64 = 1e-5;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilterState {
    /// Stored pairs with margins already applied; mutually non-dominated.
    entries: Vec<(f64, f64)>,
}

impl FilterState {
    /// Filter with the single upper bound `θ ≤ θ_max`.
    pub fn new(theta_max: f64) -> Self {
        Self {
            entries: vec![(theta_max, f64::NEG_INFINITY)],
        }
    }

    /// Rebuilds a filter from recorded entries (e.g. an iteration log).
    pub fn from_entries(entries: Vec<(f64, f64)>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    /// `true` unless some entry has both smaller-or-equal `θ` and `f`.
    pub fn acceptable(&self, theta: f64, f: f64) -> bool {
        self.entries.iter().all(|&(te, fe)| theta < te || f < fe)
    }

    /// Adds `(θ, f)` with margins and removes entries it dominates.
    pub fn augment(&mut self, theta: f64, f: f64) {
        let t = (1.0 - GAMMA_THETA) * theta;
        let g = f - GAMMA_F * theta;
        if self.entries.iter().any(|&(te, fe)| te <= t && fe <= g) {
            return;
        }
        self.entries.retain(|&(te, fe)| !(t <= te && g <= fe));
        self.entries.push((t, g));
    }

    /// Pairwise non-dominance of the stored entries.
    pub fn is_consistent(&self) -> bool {
        let e = &self.entries;
        (0..e.len()).all(|i| {
            (0..e.len()).all(|j| i == j || !(e[i].0 <= e[j].0 && e[i].1 <= e[j].1))
        })
    }
}
