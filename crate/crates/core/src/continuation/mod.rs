//! Predictor–corrector continuation of KKT points over the pinned values.

use std::time::{Duration, Instant};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kinetics::StateVector;
use crate::nlp::{solve_with_active, KktSolution, Method, NlpProblem, SolverOptions, Status};
use crate::sensitivity::{kkt_sensitivities, predict_multipliers, tangent_predict, SensitivityMatrix};

pub mod step;
pub mod sweep;

pub use step::{adapt_step, ErrorModel, StepSizeState};
pub use sweep::{pins_feasible, sweep_grid, GridSpec, PointOutcome, SweepPoint, SweepResult};

/// Corrector iteration count and its first two increment norms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CorrectorStats {
    pub iterations: usize,
    pub a0: f64,
    pub a1: f64,
}

impl CorrectorStats {
    pub fn of(sol: &KktSolution) -> Self {
        Self {
            iterations: sol.iterations,
            a0: sol.increments.first().copied().unwrap_or(0.0),
            a1: sol.increments.get(1).copied().unwrap_or(0.0),
        }
    }
}

/// A converged point on the path.
#[derive(Clone, Debug)]
pub struct PathPoint {
    pub r: Vec<f64>,
    pub solution: KktSolution,
    /// `None` when the sensitivity system is singular or complementarity is weak.
    pub sens: Option<SensitivityMatrix>,
    pub stats: CorrectorStats,
}

impl PathPoint {
    /// Wraps a converged solution of `problem` and differentiates it.
    pub fn new(problem: &NlpProblem, solution: KktSolution) -> Result<Self> {
        if !solution.converged() {
            return Err(Error::PathFailure {
                r: problem.pins.values.clone(),
                msg: format!("corrector ended with status {}", solution.status),
            });
        }
        let sens = match kkt_sensitivities(problem, &solution) {
            Ok(s) => Some(s),
            Err(e) => {
                log::info!("r = {:?}: {e}; falling back to constant prediction", problem.pins.values);
                None
            }
        };
        Ok(Self {
            r: problem.pins.values.clone(),
            stats: CorrectorStats::of(&solution),
            solution,
            sens,
        })
    }

    /// Solves at the pins of `problem` from `x0`.
    pub fn solve(problem: &NlpProblem, x0: &StateVector, config: &ContinuationConfig) -> Result<Self> {
        let sol = solve_with_active(problem, x0, &[], &config.solver, config.corrector)?;
        Self::new(problem, sol)
    }

    pub fn x(&self) -> &StateVector {
        &self.solution.x
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    /// One prediction straight to the target.
    #[default]
    FullStep,
    /// Sub-steps chosen by [`adapt_step`].
    Adaptive,
    /// Targets within `ε_tol` of the last corrected point take the tangent
    /// prediction without correction.
    LinearStep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Predictor {
    #[default]
    Euler,
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuationConfig {
    pub mode: Mode,
    pub predictor: Predictor,
    pub corrector: Method,
    /// Linear-step radius (mol/kg).
    pub eps_tol: f64,
    pub h_init: f64,
    pub k_desired: usize,
    pub h_min: f64,
    pub h_max: f64,
    pub growth: f64,
    pub solver: SolverOptions,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            mode: Mode::FullStep,
            predictor: Predictor::Euler,
            corrector: Method::Ggn,
            eps_tol: 1.1,
            h_init: 0.4,
            k_desired: 10,
            h_min: 1e-3,
            h_max: 1.0,
            growth: 2.0,
            solver: SolverOptions::default(),
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode == Mode::LinearStep && !(self.eps_tol > 0.0) {
            return Err(Error::InvalidProblem(format!("linear-step radius must be positive, got {}", self.eps_tol)));
        }
        self.step_state().map(|_| ())
    }

    pub fn step_state(&self) -> Result<StepSizeState> {
        let model = match self.corrector {
            Method::Ggn => ErrorModel::Linear,
            Method::Newton => ErrorModel::Quadratic,
        };
        StepSizeState::new(self.h_init, self.k_desired, model, self.h_min, self.h_max, self.growth)
    }
}

fn lerp(a: &[f64], b: &[f64], h: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + h * (y - x)).collect()
}

/// Warm start `(x0, λ0)` for `r_prev + h (r_next − r_prev)` by tangent
/// extrapolation; the previous solution if sensitivities are missing.
/// Components are clipped to the bounds.
pub fn euler_predict(prev: &PathPoint, r_next: &[f64], h: f64) -> (StateVector, DVector<f64>) {
    match &prev.sens {
        Some(sens) => {
            let r = lerp(&prev.r, r_next, h);
            let mut x = tangent_predict(&prev.solution, sens, &r);
            x.iter_mut().for_each(|v| *v = v.max(0.0));
            (x, predict_multipliers(&prev.solution, sens, &r).0)
        }
        None => constant_predict(prev),
    }
}

/// The previous solution as warm start.
pub fn constant_predict(prev: &PathPoint) -> (StateVector, DVector<f64>) {
    (prev.solution.x.clone(), prev.solution.lambda.clone())
}

/// Uncorrected tangent prediction at `r_new` when it lies within `eps_tol`
/// of `prev`; `None` defers to a corrected step.
pub fn linear_step_query(prev: &PathPoint, r_new: &[f64], eps_tol: f64) -> Option<StateVector> {
    let dist = prev.r.iter().zip(r_new).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    if dist == 0.0 {
        return Some(prev.solution.x.clone());
    }
    let sens = prev.sens.as_ref()?;
    (dist < eps_tol).then(|| tangent_predict(&prev.solution, sens, r_new))
}

/// Why a segment stopped short of its target.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentFailure {
    /// Parameter of the last rejected corrector run.
    pub r: Vec<f64>,
    /// Status of that run.
    pub status: Status,
    /// `true` if the step was reduced below `h_min` (adaptive mode).
    pub path_failure: bool,
}

/// Result of [`continue_to`]: `points[0]` is the starting point and the last
/// entry the last converged point.
#[derive(Clone, Debug)]
pub struct Segment {
    pub points: Vec<PathPoint>,
    pub failure: Option<SegmentFailure>,
    /// Corrector iterations of accepted runs.
    pub iterations: usize,
    /// Corrector iterations of rejected runs.
    pub rejected_iterations: usize,
    pub predictor_time: Duration,
    pub corrector_time: Duration,
}

impl Segment {
    pub fn last(&self) -> &PathPoint {
        self.points.last().expect("segment holds its start")
    }

    pub fn reached(&self) -> bool {
        self.failure.is_none()
    }
}

/// Follows the path from `prev` to `r_target` (pin values of `problem` are
/// ignored; its pin indices define the parameters).
pub fn continue_to(problem: &NlpProblem, prev: &PathPoint, r_target: &[f64], config: &ContinuationConfig) -> Result<Segment> {
    let mut state = config.step_state()?;
    continue_with_state(problem, prev, r_target, config, &mut state)
}

/// As [`continue_to`], carrying the step-size state across calls.
pub fn continue_with_state(
    problem: &NlpProblem,
    prev: &PathPoint,
    r_target: &[f64],
    config: &ContinuationConfig,
    state: &mut StepSizeState,
) -> Result<Segment> {
    config.validate()?;
    if r_target.len() != prev.r.len() || r_target.len() != problem.pins.len() {
        return Err(Error::InvalidProblem(format!(
            "target has {} parameters, path has {}",
            r_target.len(),
            prev.r.len()
        )));
    }
    let mut seg = Segment {
        points: vec![prev.clone()],
        failure: None,
        iterations: 0,
        rejected_iterations: 0,
        predictor_time: Duration::ZERO,
        corrector_time: Duration::ZERO,
    };
    if r_target == prev.r.as_slice() {
        return Ok(seg);
    }
    let r_start = prev.r.clone();
    let adaptive = config.mode == Mode::Adaptive;
    let mut s = 0.0;
    let mut h = if adaptive { state.h } else { 1.0 };
    while s < 1.0 {
        let h_eff = h.min(1.0 - s);
        let last = s + h_eff >= 1.0 - 1e-12;
        let r_next = if last { r_target.to_vec() } else { lerp(&r_start, r_target, s + h_eff) };
        let t0 = Instant::now();
        let cur = seg.last();
        let (x0, _) = match config.predictor {
            Predictor::Euler => euler_predict(cur, &r_next, 1.0),
            Predictor::Constant => constant_predict(cur),
        };
        let active = cur.solution.active.active.clone();
        seg.predictor_time += t0.elapsed();

        let t0 = Instant::now();
        let p = problem.with_pins(&r_next)?;
        let sol = solve_with_active(&p, &x0, &active, &config.solver, config.corrector)?;
        seg.corrector_time += t0.elapsed();
        log::debug!("r = {r_next:?}: {} in {} iterations", sol.status, sol.iterations);

        if sol.converged() {
            seg.iterations += sol.iterations;
            let t0 = Instant::now();
            let point = PathPoint::new(&p, sol)?;
            seg.predictor_time += t0.elapsed();
            s = if last { 1.0 } else { s + h_eff };
            if adaptive {
                state.h = h_eff.max(state.h_min);
                state.h = adapt_step(state, &point.stats);
                h = state.h;
            }
            seg.points.push(point);
        } else {
            seg.rejected_iterations += sol.iterations;
            if !adaptive {
                seg.failure = Some(SegmentFailure {
                    r: r_next,
                    status: sol.status,
                    path_failure: false,
                });
                break;
            }
            h = h_eff / 2.0;
            if h < state.h_min {
                seg.failure = Some(SegmentFailure {
                    r: r_next,
                    status: sol.status,
                    path_failure: true,
                });
                break;
            }
            state.h = h;
        }
    }
    Ok(seg)
}

#[cfg(test)]
mod tests;
