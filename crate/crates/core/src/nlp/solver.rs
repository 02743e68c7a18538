//! Generalized Gauss–Newton and Newton correctors for the local problem.
//!
//! Pinned components and active bounds are eliminated; the remaining
//! (free) components carry the conservation rows. Each iteration solves
//! `[H, Cᵀ; C, 0][d; −λ] = −[∇f; C x − b]` on the free block, truncates the
//! step at the first bound it would cross, and globalizes with a filter line
//! search, one second-order correction and, if the search collapses, a
//! minimum-distance feasibility restoration.

use log::{debug, info};
use nalgebra::{DMatrix, DVector};

use super::filter::{FilterState, GAMMA_F, GAMMA_THETA};
use super::linalg::{min_norm_solve, KktFactor};
use super::objective;
use super::problem::{constraint_rows, ActiveSetState, NlpProblem, Residuals};
use crate::error::{Error, Result};
use crate::kinetics::{Mechanism, StateVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Gauss–Newton model Hessian `J1ᵀJ1`.
    Ggn,
    /// Exact Hessian `J1ᵀJ1 + (D J1ᵀ)F1`, falling back to `J1ᵀJ1` when the
    /// reduced Hessian is not positive definite.
    Newton,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    /// Converged after at least one feasibility restoration.
    RestorationUsed,
    FailedSingular,
    FailedMaxIter,
    FailedRestoration,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::RestorationUsed => "restoration_used",
            Status::FailedSingular => "failed_singular",
            Status::FailedMaxIter => "failed_maxiter",
            Status::FailedRestoration => "failed_restoration",
        }
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, Status::Converged | Status::RestorationUsed)
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Convergence when every increment component is below this.
    pub tol_abs: f64,
    /// ... or when `‖d‖∞ < tol_rel ‖x‖∞`.
    pub tol_rel: f64,
    pub tol_feas: f64,
    pub tol_stat: f64,
    pub max_iter: usize,
    pub t_min: f64,
    pub backtrack: f64,
    /// Armijo constant.
    pub eta: f64,
    /// Bound multipliers below `−mu_tol · ‖∇f‖∞` release their bound.
    pub mu_tol: f64,
    /// Diagonal variable scaling `x = D x̃`; `None` is the identity.
    pub variable_scale: Option<DVector<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_abs: 1e-10,
            tol_rel: 1e-9,
            tol_feas: 1e-9,
            tol_stat: 1e-8,
            max_iter: 200,
            t_min: 1e-8,
            backtrack: 0.5,
            eta: 1e-4,
            mu_tol: 1e-10,
            variable_scale: None,
        }
    }
}

impl SolverOptions {
    /// Scaling by the magnitudes of `anchor` (floored at 1e-3 of its largest entry).
    pub fn scaled_by(mut self, anchor: &StateVector) -> Self {
        let floor = 1e-3 * anchor.amax().max(f64::MIN_POSITIVE);
        self.variable_scale = Some(anchor.map(|v| v.abs().max(floor)));
        self
    }
}

/// One accepted iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    /// `‖C x − b‖₁` and `½‖s F1‖²` at the accepted point.
    pub theta: f64,
    pub f: f64,
    /// `‖d‖∞` of the full step, in the (possibly scaled) solver variables.
    pub d_norm: f64,
    pub step: f64,
    pub active: Vec<usize>,
    pub soc: bool,
    pub restoration: bool,
    pub hessian_fallback: bool,
    /// Filter entries at acceptance time (before augmentation).
    pub filter: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct KktSolution {
    pub x: StateVector,
    /// Multipliers of the conservation rows followed by the pin rows.
    pub lambda: DVector<f64>,
    pub active: ActiveSetState,
    /// Stationarity `‖J1ᵀF1 − J2ᵀλ‖∞ / (‖J1‖_F ‖F1‖₂)`, the usual
    /// scale-free measure for least-squares problems.
    pub kkt_residual: f64,
    /// The same residual divided by `max(1, ‖J1ᵀF1‖∞)`. Near a solution the
    /// gradient itself is at roundoff level, so this ratio saturates well
    /// above machine precision; reported for diagnostics.
    pub gradient_relative: f64,
    /// `‖F2‖∞`.
    pub feasibility: f64,
    pub iterations: usize,
    pub status: Status,
    pub log: Vec<IterationLog>,
    /// `‖d_k‖₂` for every computed increment, including the final one.
    pub increments: Vec<f64>,
    /// `Φ(x) = ‖F1(x)‖²`.
    pub phi: f64,
}

impl KktSolution {
    pub fn converged(&self) -> bool {
        self.status.is_converged()
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Objective<'a> {
    Kinetic(&'a Mechanism),
    /// `F1 = x − target`.
    Distance(DVector<f64>),
}

impl Objective<'_> {
    fn eval(&self, x: &StateVector) -> (DVector<f64>, DMatrix<f64>) {
        match self {
            Objective::Kinetic(m) => objective::residual_and_jacobian(m, x),
            Objective::Distance(t) => (&x.0 - t, DMatrix::identity(t.len(), t.len())),
        }
    }

    fn residual(&self, x: &StateVector) -> DVector<f64> {
        match self {
            Objective::Kinetic(m) => objective::residual(m, x),
            Objective::Distance(t) => &x.0 - t,
        }
    }

    fn curvature(&self, x: &StateVector, w: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Objective::Kinetic(m) => objective::curvature(m, x, w),
            Objective::Distance(t) => DMatrix::zeros(t.len(), t.len()),
        }
    }
}

/// Power of two close to `1/‖J1(x0)‖_max`, applied to `F1` so that the
/// objective is O(1) in magnitude; exact in binary arithmetic.
pub(crate) fn objective_scale(j1: &DMatrix<f64>) -> f64 {
    let m = j1.amax();
    if m > 0.0 && m.is_finite() {
        2f64.powi(-(m.log2().round() as i32))
    } else {
        1.0
    }
}

/// Solves the linearized problem `min ½‖F1 + J1 d‖² s.t. F2 + J2 d = 0` for
/// the full residual set; returns `(d, λ)`.
pub fn solve_clls(res: &Residuals) -> Result<(DVector<f64>, DVector<f64>)> {
    let h = res.j1.transpose() * &res.j1;
    let g = res.j1.transpose() * &res.f1;
    let k = KktFactor::new(&h, &res.j2);
    k.check()?;
    Ok(k.solve(&g, &res.f2))
}

/// Minimum-norm `ď` with `F2(x + d) + J2 ď = 0`; `None` if `J2` is rank deficient.
pub fn soc_step(res: &Residuals, f2_trial: &DVector<f64>) -> Option<DVector<f64>> {
    min_norm_solve(&res.j2, &(-f2_trial))
}

pub fn ggn_solve(problem: &NlpProblem, x0: &StateVector, opts: &SolverOptions) -> Result<KktSolution> {
    solve(problem, x0, opts, Method::Ggn)
}

/// Newton iterations on the KKT conditions. All constraints are affine, so
/// the Lagrangian Hessian does not depend on the multiplier estimate and the
/// iteration needs only `x0`.
pub fn newton_kkt_solve(problem: &NlpProblem, x0: &StateVector, opts: &SolverOptions) -> Result<KktSolution> {
    solve(problem, x0, opts, Method::Newton)
}

pub fn solve(problem: &NlpProblem, x0: &StateVector, opts: &SolverOptions, method: Method) -> Result<KktSolution> {
    validate_start(problem, x0)?;
    let obj = Objective::Kinetic(problem.mechanism);
    Ok(Corrector::new(problem, obj, opts, method, true).run(x0, &[]))
}

/// Warm-started solve keeping a previous active set.
pub fn solve_with_active(
    problem: &NlpProblem,
    x0: &StateVector,
    active: &[usize],
    opts: &SolverOptions,
    method: Method,
) -> Result<KktSolution> {
    validate_start(problem, x0)?;
    let obj = Objective::Kinetic(problem.mechanism);
    Ok(Corrector::new(problem, obj, opts, method, true).run(x0, active))
}

/// Nearest point to `x` (in the Euclidean norm) that satisfies conservation,
/// pins and bounds, provided the filter accepts it.
pub fn restore_feasibility(
    problem: &NlpProblem,
    x: &StateVector,
    filter: &FilterState,
    opts: &SolverOptions,
) -> Result<StateVector> {
    validate_start(problem, x)?;
    let sol = restoration_solve(problem, x, &[], opts);
    let theta = problem.conservation.residual(&sol.x).abs().sum();
    let f = 0.5 * objective::residual(problem.mechanism, &sol.x).norm_squared();
    if !sol.converged() || sol.feasibility >= opts.tol_feas {
        return Err(Error::Restoration(format!("subproblem ended with status {}", sol.status)));
    }
    if !filter.acceptable(theta, f) {
        return Err(Error::Restoration("restored point is not acceptable to the filter".into()));
    }
    Ok(sol.x)
}

fn restoration_solve(problem: &NlpProblem, x: &StateVector, active: &[usize], opts: &SolverOptions) -> KktSolution {
    let obj = Objective::Distance(x.0.clone());
    Corrector::new(problem, obj, opts, Method::Ggn, false).run(x, active)
}

fn validate_start(problem: &NlpProblem, x0: &StateVector) -> Result<()> {
    if x0.len() != problem.n() {
        return Err(Error::InvalidProblem(format!(
            "start has {} entries, expected {}",
            x0.len(),
            problem.n()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidProblem("start contains non-finite values".into()));
    }
    Ok(())
}

struct Step {
    d: DVector<f64>,
    d_scaled_norm: f64,
    lambda: DVector<f64>,
    fallback: bool,
}

enum Inner {
    Step(Step),
    Converged(Step),
    Singular,
}

struct Corrector<'p, 'a> {
    problem: &'p NlpProblem<'a>,
    obj: Objective<'a>,
    opts: &'p SolverOptions,
    method: Method,
    allow_restoration: bool,
    dscale: DVector<f64>,
    scale: f64,
}

impl<'p, 'a> Corrector<'p, 'a> {
    fn new(
        problem: &'p NlpProblem<'a>,
        obj: Objective<'a>,
        opts: &'p SolverOptions,
        method: Method,
        allow_restoration: bool,
    ) -> Self {
        let n = problem.n();
        let dscale = opts.variable_scale.clone().unwrap_or_else(|| DVector::from_element(n, 1.0));
        Self {
            problem,
            obj,
            opts,
            method,
            allow_restoration,
            dscale,
            scale: 1.0,
        }
    }

    fn theta(&self, x: &DVector<f64>) -> f64 {
        self.problem.conservation.residual(x).abs().sum()
    }

    fn f_at(&self, x: &StateVector) -> f64 {
        0.5 * (self.obj.residual(x) * self.scale).norm_squared()
    }

    fn free(&self, active: &[usize]) -> Vec<usize> {
        (0..self.problem.n())
            .filter(|&i| !self.problem.pins.contains(i) && !active.contains(&i))
            .collect()
    }

    /// Linearized subproblem on the free block at `x`.
    fn step(
        &self,
        x: &StateVector,
        f1: &DVector<f64>,
        j1: &DMatrix<f64>,
        free: &[usize],
        curvature: Option<&DMatrix<f64>>,
    ) -> Option<Step> {
        let cons = self.problem.conservation;
        let df = DVector::from_fn(free.len(), |k, _| self.dscale[free[k]]);
        let j1f = j1.select_columns(free) * DMatrix::from_diagonal(&df);
        let af = cons.matrix.select_columns(free) * DMatrix::from_diagonal(&df);
        let g = j1f.transpose() * f1;
        let c = cons.residual(x);
        let h_gn = j1f.transpose() * &j1f;
        let mut fallback = false;
        let factor = match curvature {
            Some(cv) => {
                let cf = DMatrix::from_diagonal(&df) * cv.select_rows(free).select_columns(free) * DMatrix::from_diagonal(&df);
                let k = KktFactor::new(&(&h_gn + cf), &af);
                if k.check().is_ok() && k.has_correct_inertia() {
                    let (dt, _) = k.solve(&g, &c);
                    // reject non-descent Newton directions as well
                    if g.dot(&dt) <= 0.0 {
                        Some(k)
                    } else {
                        None
                    }
                } else {
                    None
                }
            }
            None => None,
        };
        let factor = match factor {
            Some(k) => k,
            None => {
                fallback = curvature.is_some();
                let k = KktFactor::new(&h_gn, &af);
                k.check().ok()?;
                k
            }
        };
        let (dt, lambda) = factor.solve(&g, &c);
        let mut d = DVector::zeros(self.problem.n());
        for (k, &i) in free.iter().enumerate() {
            d[i] = df[k] * dt[k];
        }
        Some(Step {
            d_scaled_norm: dt.amax(),
            d,
            lambda,
            fallback,
        })
    }

    fn run(mut self, x0: &StateVector, initial_active: &[usize]) -> KktSolution {
        let n = self.problem.n();
        let opts = self.opts;
        let mut x = self.problem.admissible_start(x0);
        let mut active: Vec<usize> = initial_active
            .iter()
            .copied()
            .filter(|&i| i < n && !self.problem.pins.contains(i))
            .collect();
        active.sort_unstable();
        active.dedup();
        for &i in &active {
            x[i] = 0.0;
        }

        let (_, j1_0) = self.obj.eval(&x);
        self.scale = objective_scale(&j1_0);
        let theta0 = self.theta(&x);
        let theta_max = 1e4 * theta0.max(1.0);
        let theta_min = 1e-4 * theta0.max(1.0);
        let mut filter = FilterState::new(theta_max);
        let mut log = Vec::new();
        let mut increments = Vec::new();
        let mut used_restoration = false;
        let mut iterations = 0usize;

        loop {
            let (f1u, j1u) = self.obj.eval(&x);
            let f1 = &f1u * self.scale;
            let j1 = &j1u * self.scale;
            let grad = j1.transpose() * &f1;
            let theta = self.theta(&x);
            let f = 0.5 * f1.norm_squared();
            let curv = match self.method {
                Method::Newton => Some(self.obj.curvature(&x, &f1u) * (self.scale * self.scale)),
                Method::Ggn => None,
            };

            // adjust the active set until the step is consistent with it
            let mut outcome = Inner::Singular;
            for _ in 0..(2 * n + 2) {
                let free = self.free(&active);
                let Some(step) = self.step(&x, &f1, &j1, &free, curv.as_ref()) else {
                    outcome = Inner::Singular;
                    break;
                };
                let blocked: Vec<usize> = free.iter().copied().filter(|&i| x[i] <= 0.0 && step.d[i] < 0.0).collect();
                if !blocked.is_empty() {
                    debug!("activating bounds {blocked:?} (zero components moving down)");
                    for i in blocked {
                        x[i] = 0.0;
                        active.push(i);
                    }
                    active.sort_unstable();
                    continue;
                }
                let xs_norm = x.iter().zip(self.dscale.iter()).map(|(a, s)| (a / s).abs()).fold(0.0, f64::max);
                let small = step.d_scaled_norm < opts.tol_abs || step.d_scaled_norm < opts.tol_rel * xs_norm;
                let feasible = self.problem.conservation.residual(&x).amax() < opts.tol_feas;
                if small && feasible {
                    let mu = self.multipliers(&grad, &step.lambda, &active);
                    let thr = opts.mu_tol * grad.amax().max(f64::MIN_POSITIVE);
                    let worst = mu
                        .iter()
                        .enumerate()
                        .filter(|(_, &m)| m < -thr)
                        .min_by(|a, b| a.1.total_cmp(b.1).then(active[a.0].cmp(&active[b.0])));
                    if let Some((k, _)) = worst {
                        let i = active.remove(k);
                        debug!("releasing bound on component {i}");
                        continue;
                    }
                    outcome = Inner::Converged(step);
                    break;
                }
                outcome = Inner::Step(step);
                break;
            }

            let step = match outcome {
                Inner::Singular => {
                    info!("KKT matrix singular at iteration {iterations}");
                    return self.finish(x, active, Status::FailedSingular, iterations, log, increments, None);
                }
                Inner::Converged(step) => {
                    increments.push(step.d.norm());
                    // take the final (sub-tolerance) increment as well
                    let xf = StateVector(&x.0 + &step.d);
                    if step.d.amax() > 0.0 && xf.iter().all(|&v| v >= 0.0) {
                        x = xf;
                        iterations += 1;
                        log.push(IterationLog {
                            iteration: iterations,
                            theta: self.theta(&x),
                            f: self.f_at(&x),
                            d_norm: step.d_scaled_norm,
                            step: 1.0,
                            active: active.clone(),
                            soc: false,
                            restoration: false,
                            hessian_fallback: step.fallback,
                            filter: filter.entries().to_vec(),
                        });
                    }
                    let status = if used_restoration {
                        Status::RestorationUsed
                    } else {
                        Status::Converged
                    };
                    let kkt = self.multipliers_at(&x, &active);
                    return self.finish(x, active, status, iterations, log, increments, kkt);
                }
                Inner::Step(step) => step,
            };
            if iterations >= opts.max_iter {
                return self.finish(x, active, Status::FailedMaxIter, iterations, log, increments, None);
            }
            increments.push(step.d.norm());
            let d = &step.d;

            // largest step keeping x ≥ 0
            let mut t_bound = f64::INFINITY;
            let mut block = None;
            for i in 0..n {
                if d[i] < 0.0 {
                    let t = x[i] / -d[i];
                    if t < t_bound {
                        t_bound = t;
                        block = Some(i);
                    }
                }
            }
            let t_max = t_bound.min(1.0);
            let slope = grad.dot(d);
            let roundoff = 10.0 * f64::EPSILON * f.abs();

            let accept = |theta_t: f64, f_t: f64, t: f64, filter: &FilterState| -> Option<bool> {
                if !theta_t.is_finite() || !f_t.is_finite() || !filter.acceptable(theta_t, f_t) {
                    return None;
                }
                let switching = slope < 0.0 && t * (-slope).powf(2.3) > theta.powf(1.1);
                if switching && theta <= theta_min {
                    // f-type step: Armijo on the objective
                    (f_t <= f + opts.eta * t * slope + roundoff).then_some(false)
                } else {
                    let ok = theta_t <= (1.0 - GAMMA_THETA) * theta || f_t <= f - GAMMA_F * theta + roundoff;
                    ok.then_some(true)
                }
            };

            let mut t = t_max;
            let mut soc_tried = false;
            let mut accepted: Option<(StateVector, f64, bool, bool)> = None;
            while t >= opts.t_min * t_max.max(f64::MIN_POSITIVE) && t > 0.0 {
                let mut xt = StateVector(&x.0 + d * t);
                if t == t_bound {
                    if let Some(b) = block {
                        xt[b] = 0.0;
                    }
                }
                xt.iter_mut().for_each(|v| {
                    if *v < 0.0 {
                        *v = 0.0
                    }
                });
                let theta_t = self.theta(&xt);
                let f_t = self.f_at(&xt);
                if let Some(h_type) = accept(theta_t, f_t, t, &filter) {
                    accepted = Some((xt, t, h_type, false));
                    break;
                }
                if !soc_tried && t == t_max && theta_t >= theta && theta_t > 0.0 {
                    soc_tried = true;
                    let free = self.free(&active);
                    let cf = self.problem.conservation.matrix.select_columns(&free);
                    let ct = self.problem.conservation.residual(&xt);
                    if let Some(dc) = min_norm_solve(&cf, &(-ct)) {
                        let mut xs = xt.clone();
                        for (k, &i) in free.iter().enumerate() {
                            xs[i] += dc[k];
                        }
                        if xs.iter().all(|&v| v >= 0.0) {
                            let theta_s = self.theta(&xs);
                            let f_s = self.f_at(&xs);
                            if let Some(h_type) = accept(theta_s, f_s, t, &filter) {
                                accepted = Some((xs, t, h_type, true));
                                break;
                            }
                        }
                    }
                }
                t *= opts.backtrack;
            }

            match accepted {
                Some((xt, t, h_type, soc)) => {
                    let snapshot = filter.entries().to_vec();
                    if h_type {
                        filter.augment(theta, f);
                    }
                    if t == t_bound && t < 1.0 {
                        if let Some(b) = block {
                            if !active.contains(&b) {
                                debug!("step truncated at bound of component {b}");
                                active.push(b);
                                active.sort_unstable();
                            }
                        }
                    }
                    x = xt;
                    iterations += 1;
                    let entry = IterationLog {
                        iteration: iterations,
                        theta: self.theta(&x),
                        f: self.f_at(&x),
                        d_norm: step.d_scaled_norm,
                        step: t,
                        active: active.clone(),
                        soc,
                        restoration: false,
                        hessian_fallback: step.fallback,
                        filter: snapshot,
                    };
                    debug!(
                        "iter {:3}  theta {:.3e}  f {:.6e}  |d| {:.3e}  t {:.3e}{}{}",
                        entry.iteration,
                        entry.theta,
                        entry.f,
                        entry.d_norm,
                        entry.step,
                        if soc { "  soc" } else { "" },
                        if step.fallback { "  gn-fallback" } else { "" }
                    );
                    log.push(entry);
                }
                None => {
                    // line search collapsed
                    if !self.allow_restoration || theta < opts.tol_feas {
                        info!("line search failed at iteration {iterations} (theta {theta:.3e})");
                        return self.finish(x, active, Status::FailedRestoration, iterations, log, increments, None);
                    }
                    filter.augment(theta, f);
                    let rest = restoration_solve(self.problem, &x, &active, opts);
                    let theta_r = self.theta(&rest.x);
                    let f_r = self.f_at(&rest.x);
                    if !rest.converged() || theta_r >= opts.tol_feas.max(theta) || !filter.acceptable(theta_r, f_r) {
                        return self.finish(x, active, Status::FailedRestoration, iterations, log, increments, None);
                    }
                    info!("feasibility restoration at iteration {iterations}");
                    used_restoration = true;
                    let snapshot = filter.entries().to_vec();
                    x = rest.x;
                    active = rest.active.active;
                    iterations += 1;
                    log.push(IterationLog {
                        iteration: iterations,
                        theta: theta_r,
                        f: f_r,
                        d_norm: step.d_scaled_norm,
                        step: 0.0,
                        active: active.clone(),
                        soc: false,
                        restoration: true,
                        hessian_fallback: step.fallback,
                        filter: snapshot,
                    });
                }
            }
        }
    }

    /// `(∇f, λ)` in objective scale from the linearized problem at `x`.
    fn multipliers_at(&self, x: &StateVector, active: &[usize]) -> Option<(DVector<f64>, DVector<f64>)> {
        let (f1, j1) = self.obj.eval(x);
        let f1 = f1 * self.scale;
        let j1 = j1 * self.scale;
        let grad = j1.transpose() * &f1;
        let step = self.step(x, &f1, &j1, &self.free(active), None)?;
        Some((grad, step.lambda))
    }

    /// Bound multipliers `(∇f − Cᵀλ)_i` on active components (objective scale).
    fn multipliers(&self, grad: &DVector<f64>, lambda: &DVector<f64>, active: &[usize]) -> Vec<f64> {
        let r = grad - self.problem.conservation.matrix.transpose() * lambda;
        active.iter().map(|&i| r[i]).collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        x: StateVector,
        active: Vec<usize>,
        status: Status,
        iterations: usize,
        log: Vec<IterationLog>,
        increments: Vec<f64>,
        kkt: Option<(DVector<f64>, DVector<f64>)>,
    ) -> KktSolution {
        let s2 = self.scale * self.scale;
        let mc = self.problem.conservation.n_rows();
        let np = self.problem.pins.len();
        let (grad, lam_c) = match kkt {
            Some(v) => v,
            None => {
                let (f1, j1) = self.obj.eval(&x);
                let grad = (j1.transpose() * f1) * s2;
                // least-squares multipliers for reporting only
                let ct = self.problem.conservation.matrix.transpose();
                let free = self.free(&active);
                let a = ct.select_rows(&free);
                let b = DVector::from_fn(free.len(), |k, _| grad[free[k]]);
                let lam = a
                    .svd(true, true)
                    .solve(&b, 1e-14)
                    .unwrap_or_else(|_| DVector::zeros(mc));
                (grad, lam)
            }
        };
        let r = &grad - self.problem.conservation.matrix.transpose() * &lam_c;
        let mut lambda = DVector::zeros(mc + np);
        lambda.rows_mut(0, mc).copy_from(&(&lam_c / s2));
        for (k, &i) in self.problem.pins.indices.iter().enumerate() {
            lambda[mc + k] = r[i] / s2;
        }
        let mu: Vec<f64> = active.iter().map(|&i| r[i] / s2).collect();
        let mut stat = r.clone();
        for &i in self.problem.pins.indices.iter().chain(&active) {
            stat[i] = 0.0;
        }
        let (f1, j1) = self.obj.eval(&x);
        let natural = j1.norm() * f1.norm();
        let kkt_residual = if natural > 0.0 { stat.amax() / s2 / natural } else { stat.amax() / s2 };
        let gradient_relative = (stat.amax() / s2) / (grad.amax() / s2).max(1.0);
        let (f2, _) = constraint_rows(self.problem, &x, &active);
        let phi = f1.norm_squared();
        KktSolution {
            feasibility: f2.amax(),
            x,
            lambda,
            active: ActiveSetState { active, mu },
            kkt_residual,
            gradient_relative,
            iterations,
            status,
            log,
            increments,
            phi,
        }
    }
}
