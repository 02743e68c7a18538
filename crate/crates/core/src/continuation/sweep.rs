//! Grid sweeps: a sequential spine of row seeds, then rows traversed outward
//! from their seeds (rows in parallel).

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use super::{continue_with_state, linear_step_query, ContinuationConfig, Mode, PathPoint};
use crate::error::{Error, Result};
use crate::kinetics::{ConservationSystem, StateVector};
use crate::nlp::linalg::nnls;
use crate::nlp::{objective, NlpProblem, Status};
use crate::par;

/// Grid values per pinned parameter (one or two axes, pin order).
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<Vec<f64>>,
}

impl GridSpec {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidProblem(format!("a sweep needs one or two axes, got {}", axes.len())));
        }
        if axes.iter().any(|a| a.is_empty()) {
            return Err(Error::InvalidProblem("empty grid axis".into()));
        }
        if axes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("grid values must be finite".into()));
        }
        Ok(Self { axes })
    }

    /// `start, start + step, …` (`count` values).
    pub fn range(start: f64, step: f64, count: usize) -> Vec<f64> {
        (0..count).map(|k| start + step * k as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(rows, columns)`: a single row for one axis, otherwise the first
    /// axis indexes rows.
    fn shape(&self) -> (usize, usize) {
        match self.axes.len() {
            1 => (1, self.axes[0].len()),
            _ => (self.axes[0].len(), self.axes[1].len()),
        }
    }

    fn index(&self, i: usize, j: usize) -> Vec<usize> {
        match self.axes.len() {
            1 => vec![j],
            _ => vec![i, j],
        }
    }

    fn coords(&self, i: usize, j: usize) -> Vec<f64> {
        match self.axes.len() {
            1 => vec![self.axes[0][j]],
            _ => vec![self.axes[0][i], self.axes[1][j]],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointOutcome {
    Converged,
    /// Uncorrected tangent prediction (linear-step mode).
    Linear,
    /// No nonnegative state satisfies conservation and pins; not attempted.
    Infeasible,
    /// Corrector failure at a single full step.
    Failed(Status),
    /// Step reduced below the minimum without convergence.
    PathFailure,
}

impl PointOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointOutcome::Converged => "converged",
            PointOutcome::Linear => "linear",
            PointOutcome::Infeasible => "infeasible",
            PointOutcome::Failed(s) => s.as_str(),
            PointOutcome::PathFailure => "path_failure",
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, PointOutcome::Failed(_) | PointOutcome::PathFailure)
    }
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    /// Index along each axis.
    pub index: Vec<usize>,
    pub r: Vec<f64>,
    pub outcome: PointOutcome,
    pub z: Option<StateVector>,
    pub phi: Option<f64>,
    /// Corrector iterations spent on this point (all sub-steps).
    pub iterations: usize,
    /// `dz/dr`, `n × n_r`.
    pub tangents: Option<DMatrix<f64>>,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub pins: Vec<usize>,
    pub grid: GridSpec,
    /// Row-major in grid index order.
    pub points: Vec<SweepPoint>,
    /// Iterations of the anchor solve (not part of the grid).
    pub anchor_iterations: usize,
    pub wall_time: Duration,
    pub predictor_time: Duration,
    pub corrector_time: Duration,
}

impl SweepResult {
    /// Points that were attempted (feasible).
    pub fn attempted(&self) -> usize {
        self.points.iter().filter(|p| p.outcome != PointOutcome::Infeasible).count()
    }

    pub fn converged(&self) -> usize {
        self.points.iter().filter(|p| p.outcome == PointOutcome::Converged).count()
    }

    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.outcome.is_failure()).count()
    }

    /// Corrector iterations over converged points, excluding the anchor.
    pub fn iterations(&self) -> usize {
        self.points.iter().filter(|p| !p.outcome.is_failure()).map(|p| p.iterations).sum()
    }

    /// Corrector iterations spent on failed points.
    pub fn failed_iterations(&self) -> usize {
        self.points.iter().filter(|p| p.outcome.is_failure()).map(|p| p.iterations).sum()
    }

    /// Anchor plus grid iterations, failures excluded.
    pub fn total_iterations(&self) -> usize {
        self.anchor_iterations + self.iterations()
    }
}

/// Whether some `z ≥ 0` satisfies `C z = b` with the pinned entries equal to
/// `r` (nonnegative least squares on the stacked system).
pub fn pins_feasible(cons: &ConservationSystem, pins: &[usize], r: &[f64]) -> bool {
    if r.iter().any(|&v| !(v >= 0.0)) {
        return false;
    }
    let n = cons.matrix.ncols();
    let mc = cons.n_rows();
    let mut a = DMatrix::zeros(mc + pins.len(), n);
    let mut b = DVector::zeros(mc + pins.len());
    a.view_mut((0, 0), (mc, n)).copy_from(&cons.matrix);
    b.rows_mut(0, mc).copy_from(&cons.totals);
    for (k, (&i, &v)) in pins.iter().zip(r).enumerate() {
        a[(mc + k, i)] = 1.0;
        b[mc + k] = v;
    }
    let z = nnls(&a, &b);
    (&a * z - &b).amax() <= 1e-9 * b.amax().max(1.0)
}

/// Attempts one grid point from `base`; returns the record and the new base
/// if the point was corrected.
fn advance(
    problem: &NlpProblem,
    base: &PathPoint,
    index: Vec<usize>,
    r: Vec<f64>,
    config: &ContinuationConfig,
    state: &mut super::StepSizeState,
    timing: &mut (Duration, Duration),
) -> Result<(SweepPoint, Option<PathPoint>)> {
    let mech = problem.mechanism;
    if config.mode == Mode::LinearStep {
        if let Some(z) = linear_step_query(base, &r, config.eps_tol) {
            if r != base.r {
                let phi = objective::phi(mech, &z);
                let point = SweepPoint {
                    index,
                    r,
                    outcome: PointOutcome::Linear,
                    z: Some(z),
                    phi: Some(phi),
                    iterations: 0,
                    tangents: None,
                };
                return Ok((point, None));
            }
        }
    }
    let seg = continue_with_state(problem, base, &r, config, state)?;
    timing.0 += seg.predictor_time;
    timing.1 += seg.corrector_time;
    match &seg.failure {
        None => {
            let last = seg.last().clone();
            let point = SweepPoint {
                index,
                r,
                outcome: PointOutcome::Converged,
                phi: Some(last.solution.phi),
                z: Some(last.solution.x.clone()),
                iterations: seg.iterations,
                tangents: last.sens.as_ref().map(|s| s.dx_dr.clone()),
            };
            Ok((point, Some(last)))
        }
        Some(f) => {
            log::info!("r = {:?}: {} (last attempt at {:?})", r, f.status, f.r);
            let outcome = if f.path_failure {
                PointOutcome::PathFailure
            } else {
                PointOutcome::Failed(f.status)
            };
            let point = SweepPoint {
                index,
                r,
                outcome,
                z: None,
                phi: None,
                iterations: seg.iterations + seg.rejected_iterations,
                tangents: None,
            };
            Ok((point, None))
        }
    }
}

fn nearest(values: &[f64], target: f64) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if (v - target).abs() < (values[best] - target).abs() {
            best = k;
        }
    }
    best
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Tracks solutions over `grid` starting from `anchor`.
///
/// Infeasible points are skipped. The row nearest the anchor is seeded from
/// the anchor; every other row is seeded, in order of distance from the
/// anchor row, from the nearest converged seed so far. Each row is then
/// traversed outward from its seed, continuing from the last corrected point
/// past failures. Rows are independent after seeding, so results do not
/// depend on `jobs`.
pub fn sweep_grid(
    problem: &NlpProblem,
    anchor: &PathPoint,
    grid: &GridSpec,
    config: &ContinuationConfig,
    jobs: usize,
) -> Result<SweepResult> {
    let start = Instant::now();
    config.validate()?;
    if grid.axes.len() != problem.pins.len() || anchor.r.len() != problem.pins.len() {
        return Err(Error::InvalidProblem(format!(
            "{} grid axes for {} pins",
            grid.axes.len(),
            problem.pins.len()
        )));
    }
    if !anchor.solution.converged() {
        return Err(Error::PathFailure {
            r: anchor.r.clone(),
            msg: "anchor did not converge".into(),
        });
    }
    let (nrows, ncols) = grid.shape();
    let pins = &problem.pins.indices;
    let feasible: Vec<Vec<bool>> = (0..nrows)
        .map(|i| (0..ncols).map(|j| pins_feasible(problem.conservation, pins, &grid.coords(i, j))).collect())
        .collect();

    let col_axis = grid.axes.last().expect("validated");
    let spine = nearest(col_axis, *anchor.r.last().expect("validated"));
    let anchor_row = if nrows == 1 { 0 } else { nearest(&grid.axes[0], anchor.r[0]) };
    let row_order: Vec<usize> = (anchor_row..nrows).chain((0..anchor_row).rev()).collect();

    // seeds along the spine
    let mut timing = (Duration::ZERO, Duration::ZERO);
    let mut state = config.step_state()?;
    let mut seeds: Vec<Option<(usize, SweepPoint, Option<PathPoint>)>> = vec![None; nrows];
    let mut converged_seeds: Vec<PathPoint> = vec![anchor.clone()];
    for &i in &row_order {
        let Some(js) = (0..ncols)
            .filter(|&j| feasible[i][j])
            .min_by_key(|&j| (j as isize - spine as isize).unsigned_abs())
        else {
            continue;
        };
        let r = grid.coords(i, js);
        let base = converged_seeds
            .iter()
            .min_by(|a, b| distance(&a.r, &r).total_cmp(&distance(&b.r, &r)))
            .expect("anchor is present");
        let (point, new_base) = advance(problem, base, grid.index(i, js), r, config, &mut state, &mut timing)?;
        if let Some(b) = &new_base {
            converged_seeds.push(b.clone());
        }
        seeds[i] = Some((js, point, new_base));
    }

    // rows outward from their seeds
    let rows: Vec<usize> = (0..nrows).collect();
    let row_results = par::map_with_jobs(jobs, &rows, |&i| -> Result<(Vec<SweepPoint>, (Duration, Duration))> {
        let mut timing = (Duration::ZERO, Duration::ZERO);
        let mut out: Vec<Option<SweepPoint>> = vec![None; ncols];
        let infeasible = |j: usize| SweepPoint {
            index: grid.index(i, j),
            r: grid.coords(i, j),
            outcome: PointOutcome::Infeasible,
            z: None,
            phi: None,
            iterations: 0,
            tangents: None,
        };
        let Some((js, seed_point, seed_base)) = &seeds[i] else {
            return Ok(((0..ncols).map(infeasible).collect(), timing));
        };
        let row_base = match seed_base {
            Some(b) => b.clone(),
            None => converged_seeds
                .iter()
                .min_by(|a, b| distance(&a.r, &seed_point.r).total_cmp(&distance(&b.r, &seed_point.r)))
                .expect("anchor is present")
                .clone(),
        };
        out[*js] = Some(seed_point.clone());
        let right: Vec<usize> = (js + 1..ncols).collect();
        let left: Vec<usize> = (0..*js).rev().collect();
        for dir in [right, left] {
            let mut state = config.step_state()?;
            let mut base = row_base.clone();
            for j in dir {
                if !feasible[i][j] {
                    out[j] = Some(infeasible(j));
                    continue;
                }
                let (point, new_base) =
                    advance(problem, &base, grid.index(i, j), grid.coords(i, j), config, &mut state, &mut timing)?;
                if let Some(b) = new_base {
                    base = b;
                }
                out[j] = Some(point);
            }
        }
        Ok((out.into_iter().map(|p| p.expect("every column visited")).collect(), timing))
    });

    let mut points = Vec::with_capacity(grid.len());
    for row in row_results {
        let (pts, t) = row?;
        timing.0 += t.0;
        timing.1 += t.1;
        points.extend(pts);
    }
    Ok(SweepResult {
        pins: pins.clone(),
        grid: grid.clone(),
        points,
        anchor_iterations: anchor.stats.iterations,
        wall_time: start.elapsed(),
        predictor_time: timing.0,
        corrector_time: timing.1,
    })
}
