//! Step-size control targeting a desired number of corrector iterations.

use super::CorrectorStats;
use crate::error::{Error, Result};

/// Contraction model for the corrector increments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorModel {
    /// `ε_{j+1} ≤ ρ ε_j` (Gauss–Newton).
    Linear,
    /// `ε_{j+1} ≤ δ ε_j²` (Newton).
    Quadratic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSizeState {
    /// Current step as a fraction of the segment being traversed.
    pub h: f64,
    pub k_desired: usize,
    pub model: ErrorModel,
    pub h_min: f64,
    pub h_max: f64,
    /// Largest factor by which `h` may grow in one update.
    pub growth: f64,
}

impl StepSizeState {
    pub fn new(h: f64, k_desired: usize, model: ErrorModel, h_min: f64, h_max: f64, growth: f64) -> Result<Self> {
        if !(h_min > 0.0 && h_min <= h_max && h_max.is_finite()) {
            return Err(Error::InvalidProblem(format!("step bounds [{h_min}, {h_max}] are invalid")));
        }
        if !(h >= h_min && h <= h_max) {
            return Err(Error::InvalidProblem(format!("initial step {h} outside [{h_min}, {h_max}]")));
        }
        if k_desired < 2 {
            return Err(Error::InvalidProblem(format!("desired iterations must be at least 2, got {k_desired}")));
        }
        if !(growth >= 1.0) {
            return Err(Error::InvalidProblem(format!("growth clamp must be at least 1, got {growth}")));
        }
        Ok(Self {
            h,
            k_desired,
            model,
            h_min,
            h_max,
            growth,
        })
    }

    fn clamp(&self, h: f64) -> f64 {
        h.min(self.h * self.growth).clamp(self.h_min, self.h_max)
    }
}

/// New step from the statistics of a corrector run at step `state.h`.
///
/// The predictor error is modelled as `ε0(h) = γ h²` with `γ = a0/h²`, and the
/// run is taken to have ended when its model increment reached the tolerance
/// after `m` iterations. The result is the largest `h` for which the model
/// predicts `k̃` iterations to the same tolerance.
pub fn adapt_step(state: &StepSizeState, stats: &CorrectorStats) -> f64 {
    let (a0, a1) = (stats.a0, stats.a1);
    if stats.iterations < 2 || !(a0 > 0.0) || !a0.is_finite() {
        return state.clamp(state.h * state.growth);
    }
    let m = stats.iterations as f64;
    let k = state.k_desired as f64;
    let q = a1 / a0;
    let factor = if !(q > 0.0) {
        state.growth
    } else if q >= 1.0 {
        // no contraction observed: only shrink when the run was too long
        if m > k {
            0.5
        } else {
            1.0
        }
    } else {
        // ratio a0'/a0 that moves the iteration count from m to k̃
        let ratio = match state.model {
            ErrorModel::Linear => q.powf(m - k),
            ErrorModel::Quadratic => q.powf(2f64.powf(m - k) - 1.0),
        };
        ratio.sqrt()
    };
    state.clamp(state.h * factor)
}
