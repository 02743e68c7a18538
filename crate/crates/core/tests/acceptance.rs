//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the report is always printed. A red criterion is
//! reported, not hidden; set `ACCEPTANCE_STRICT=1` to turn it into a nonzero
//! exit status.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;
use simtrack::continuation::{
    continue_to, euler_predict, sweep_grid, ContinuationConfig, GridSpec, Mode, PathPoint, Predictor,
};
use simtrack::nlp::{
    ggn_solve, landscape_scan, local_minima, newton_kkt_solve, objective, FilterState, LandscapeSpec, NlpProblem,
    ProgressVariableSpec, SolverOptions, UnphysicalPolicy,
};
use simtrack::odeint::{integrate, relax_to_equilibrium};
use simtrack::sensitivity::kkt_sensitivities;
use simtrack::{ConservationSystem, Mechanism, StateVector};

const REFERENCE_INITIAL: [f64; 6] = [0.34546441, 2.0279732, 1.5195639, 0.76454959, 3.0000000, 32.905130];
const REFERENCE_SOLUTION: [f64; 6] = [0.34563763, 2.0281615, 1.5193606, 0.76437637, 3.0000000, 32.905130];
const H2O: usize = 4;
const H2: usize = 1;

struct Report {
    failed: Vec<usize>,
}

impl Report {
    fn line(&mut self, id: usize, name: &str, pass: bool, detail: String) {
        println!("criterion {id} {:<28} {}  {detail}", name, if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id);
        }
    }
}

fn check(pass: bool, what: &str, notes: &mut Vec<String>) -> bool {
    if !pass {
        notes.push(format!("[{what} failed]"));
    }
    pass
}

fn setup() -> (Mechanism, ConservationSystem) {
    let m = Mechanism::bundled_h2();
    let c = ConservationSystem::from_anchor(&m, &StateVector::from_slice(&REFERENCE_INITIAL)).unwrap();
    (m, c)
}

fn start() -> StateVector {
    StateVector::from_slice(&REFERENCE_INITIAL)
}

fn pinned<'a>(m: &'a Mechanism, c: &'a ConservationSystem, pins: &[(usize, f64)]) -> NlpProblem<'a> {
    let spec = ProgressVariableSpec::new(pins.iter().map(|p| p.0).collect(), pins.iter().map(|p| p.1).collect()).unwrap();
    NlpProblem::new(m, c, spec).unwrap()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn golden_solve(r: &mut Report) {
    let (m, c) = setup();
    let p = pinned(&m, &c, &[(H2O, 3.0)]);
    // first call warms caches; the timed call is the measurement
    let _ = ggn_solve(&p, &start(), &SolverOptions::default());
    let (sol, dt) = timed(|| ggn_solve(&p, &start(), &SolverOptions::default()).unwrap());
    let dev = (0..6)
        .filter(|&i| i != H2O)
        .map(|i| (sol.x[i] - REFERENCE_SOLUTION[i]).abs() / REFERENCE_SOLUTION[i])
        .fold(0.0, f64::max);
    let worst = (0..6)
        .filter(|&i| i != H2O)
        .max_by(|&a, &b| {
            let e = |i: usize| (sol.x[i] - REFERENCE_SOLUTION[i]).abs() / REFERENCE_SOLUTION[i];
            e(a).total_cmp(&e(b))
        })
        .unwrap();
    let pass = sol.status.as_str() == "converged"
        && sol.x[H2O] == 3.0
        && dev <= 0.01
        && sol.feasibility < 1e-9
        && sol.kkt_residual < 1e-8
        && dt < Duration::from_millis(50);
    r.line(
        1,
        "golden solve",
        pass,
        format!(
            "status {} pin {} max rel dev {:.4}% ({}) feas {:.1e} kkt {:.1e} iters {} time {:.2} ms",
            sol.status,
            sol.x[H2O],
            100.0 * dev,
            m.species[worst],
            sol.feasibility,
            sol.kkt_residual,
            sol.iterations,
            dt.as_secs_f64() * 1e3
        ),
    );
}

fn row(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.7}")).collect();
    format!("[{}]", parts.join(", "))
}

fn conservation_cross_check(r: &mut Report) {
    let (_, c) = setup();
    let a = &c.matrix * DVector::from_column_slice(&REFERENCE_INITIAL);
    let b = &c.matrix * DVector::from_column_slice(&REFERENCE_SOLUTION);
    let gap = (&a - &b).amax();
    let quoted = [12.3400599, 4.1100140, 65.810260];
    let quoted_gap = a.iter().zip(quoted).map(|(x, q)| (x - q).abs()).fold(0.0, f64::max);
    r.line(
        2,
        "conservation cross-check",
        gap < 1e-6 && quoted_gap < 1e-6,
        format!("initial {} solution {} max gap {gap:.1e}", row(&a), row(&b)),
    );
}

fn one_d_sweep(r: &mut Report) {
    let (m, c) = setup();
    let p = pinned(&m, &c, &[(H2O, 3.0)]);
    let config = ContinuationConfig::default();
    let grid = GridSpec::new(vec![GridSpec::range(0.0, 0.25, 17)]).unwrap();
    let (res, dt) = timed(|| {
        let a = PathPoint::solve(&p, &start(), &config).unwrap();
        sweep_grid(&p, &a, &grid, &config, 1).unwrap()
    });
    let total = res.total_iterations();
    let mean = total as f64 / 17.0;
    let pass = res.converged() == 17 && total <= 150 && mean <= 9.0 && dt < Duration::from_secs(1);
    r.line(
        3,
        "1-D sweep economy",
        pass,
        format!(
            "converged {}/17 total iterations {total} mean {mean:.2} time {:.1} ms",
            res.converged(),
            dt.as_secs_f64() * 1e3
        ),
    );
}

fn predictor_benefit(r: &mut Report) {
    let (m, c) = setup();
    let p = pinned(&m, &c, &[(H2O, 3.0), (H2, REFERENCE_INITIAL[H2])]);
    let axis = |count| {
        let mut a = vec![0.001];
        a.extend(GridSpec::range(0.5, 0.5, count));
        a
    };
    let grid = GridSpec::new(vec![axis(11), axis(8)]).unwrap();
    let run = |predictor| {
        let config = ContinuationConfig {
            predictor,
            ..Default::default()
        };
        let a = PathPoint::solve(&p, &start(), &config).unwrap();
        sweep_grid(&p, &a, &grid, &config, 1).unwrap()
    };
    let ((euler, constant), dt) = timed(|| (run(Predictor::Euler), run(Predictor::Constant)));
    let (e, k) = (euler.total_iterations(), constant.total_iterations());
    let reduction = 1.0 - e as f64 / k as f64;
    let eq = relax_to_equilibrium(&m, &c, &start()).unwrap();
    let misplaced = euler
        .points
        .iter()
        .filter(|q| q.outcome.is_failure() && q.r[0] <= eq[H2O])
        .count();
    let pass = e < k && reduction >= 0.03 && misplaced == 0 && dt < Duration::from_secs(10);
    r.line(
        4,
        "predictor benefit",
        pass,
        format!(
            "attempted {} euler {e} constant {k} reduction {:.1}% failures {} (below eq. H2O {:.4}: {misplaced}) time {:.1} ms",
            euler.attempted(),
            100.0 * reduction,
            euler.failures(),
            eq[H2O],
            dt.as_secs_f64() * 1e3
        ),
    );
}

fn step_size_controller(r: &mut Report) {
    let (m, c) = setup();
    let p = pinned(&m, &c, &[(H2O, 3.0)]);
    let config = |mode| ContinuationConfig {
        mode,
        h_init: 0.4,
        k_desired: 10,
        ..Default::default()
    };
    let a = PathPoint::solve(&p, &start(), &config(Mode::FullStep)).unwrap();
    let full = continue_to(&p, &a, &[0.5], &config(Mode::FullStep)).unwrap();
    let adaptive = continue_to(&p, &a, &[0.5], &config(Mode::Adaptive)).unwrap();
    let inner: Vec<f64> = adaptive.points[1..adaptive.points.len().saturating_sub(1)]
        .iter()
        .map(|q| q.r[0])
        .collect();
    let pass = adaptive.reached()
        && full.reached()
        && !inner.is_empty()
        && inner.iter().all(|&v| v > 0.5 && v < 3.0)
        && adaptive.iterations <= 2 * full.iterations;
    r.line(
        5,
        "step-size controller",
        pass,
        format!(
            "intermediate {inner:?} adaptive {} vs full-step {} iterations",
            adaptive.iterations, full.iterations
        ),
    );
}

fn landscape_multiplicity(r: &mut Report) {
    let (m, c) = setup();
    let spec = LandscapeSpec {
        fixed: vec![(0, 0.3), (H2, 2.0)],
        axes: vec![(H2O, GridSpec::range(0.5, 0.01, 551))],
        policy: UnphysicalPolicy::Evaluate,
    };
    let pts = landscape_scan(&m, &c, &spec, 1).unwrap();
    let minima: Vec<f64> = local_minima(&pts).iter().map(|&k| pts[k].coords[0]).collect();
    let pass = minima.len() == 2 && (minima[0] - 3.1020).abs() <= 0.3 && (minima[1] - 5.2977).abs() <= 0.3;
    r.line(6, "landscape multiplicity", pass, format!("interior minima at H2O = {minima:.2?}"));
}

fn random_states(count: usize) -> Vec<StateVector> {
    let mut runner = TestRunner::deterministic();
    let strategy = proptest::collection::vec(1e-4f64..40.0, 6);
    (0..count)
        .map(|_| StateVector::from_slice(&strategy.new_tree(&mut runner).unwrap().current()))
        .collect()
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax()
}

fn fd_columns(z: &StateVector, f: impl Fn(&StateVector) -> DVector<f64>) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = (0..z.len())
        .map(|j| {
            let h = 1e-6 * z[j].abs().max(1.0);
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[j] += h;
            zm[j] -= h;
            (f(&zp) - f(&zm)) / (2.0 * h)
        })
        .collect();
    DMatrix::from_columns(&cols)
}

fn property_suite(r: &mut Report) {
    let (m, c) = setup();
    let mut notes = Vec::new();
    let mut pass = true;

    // derivatives on 100 random states
    let states = random_states(100);
    let (mut ej, mut e1, mut ed) = (0.0f64, 0.0f64, 0.0f64);
    for (k, z) in states.iter().enumerate() {
        ej = ej.max(rel_err(&m.jacobian(z), &fd_columns(z, |y| m.source_term(y))));
        let (_, j1) = objective::residual_and_jacobian(&m, z);
        e1 = e1.max(rel_err(&j1, &fd_columns(z, |y| objective::residual(&m, y))));
        let v = DVector::from_fn(6, |i, _| ((i + k) as f64 * 0.7).sin());
        let eps = 1e-5 * z.amax();
        let fd = (m.jacobian(&StateVector(&z.0 + &v * eps)) - m.jacobian(&StateVector(&z.0 - &v * eps))) / (2.0 * eps);
        ed = ed.max(rel_err(&m.jacobian_directional(z, &v), &fd));
    }
    pass &= check(ej < 1e-6 && e1 < 1e-6 && ed < 1e-5, "derivatives", &mut notes);
    notes.push(format!("J_S {ej:.1e} J1 {e1:.1e} directional {ed:.1e} on {} states", states.len()));

    // sensitivities against re-solve central differences
    let p = pinned(&m, &c, &[(H2O, 3.0)]);
    let tight = SolverOptions {
        tol_abs: 1e-13,
        tol_rel: 1e-13,
        ..Default::default()
    };
    let at = |v: f64| ggn_solve(&p.with_pins(&[v]).unwrap(), &start(), &tight).unwrap();
    let base = at(3.0);
    let sens = kkt_sensitivities(&p, &base).unwrap();
    let h = 1e-4;
    let fd = (&at(3.0 + h).x.0 - &at(3.0 - h).x.0) / (2.0 * h);
    let es = (&fd - sens.tangent(0)).amax();
    pass &= check(es < 1e-4, "sensitivity", &mut notes);
    notes.push(format!("dz/dr {es:.1e}"));

    // Euler predictor error under step halving
    let a = PathPoint::new(&p, base.clone()).unwrap();
    let err = |d: f64| (&euler_predict(&a, &[3.0 - d], 1.0).0 .0 - &at(3.0 - d).x.0).norm();
    let ratio = err(0.2) / err(0.1);
    pass &= check((3.0..=5.0).contains(&ratio), "euler order", &mut notes);
    notes.push(format!("euler ratio {ratio:.2}"));

    // filter logs over a set of solves, both correctors
    let mut entries = 0;
    let mut filter_ok = true;
    for (h2o, h2) in [(3.0, 2.0), (1.0, 3.0), (0.5, 4.0), (4.0, 1.0), (1.0, 4.0), (2.0, 0.5)] {
        let q = pinned(&m, &c, &[(H2O, h2o), (H2, h2)]);
        for sol in [ggn_solve(&q, &start(), &SolverOptions::default()), newton_kkt_solve(&q, &start(), &SolverOptions::default())] {
            for l in &sol.unwrap().log {
                let f = FilterState::from_entries(l.filter.clone());
                filter_ok &= f.is_consistent() && f.acceptable(l.theta, l.f);
                entries += 1;
            }
        }
    }
    pass &= check(filter_ok, "filter", &mut notes);
    notes.push(format!("filter logs {entries}"));

    // trajectory conservation and termination
    let z0 = StateVector::from_slice(&REFERENCE_SOLUTION);
    let cz = ConservationSystem::from_anchor(&m, &z0).unwrap();
    let traj = integrate(&m, &z0, (0.0, 1e-2), 1e-8).unwrap();
    let drift = traj
        .states
        .iter()
        .map(|z| (cz.residual(&z.0).component_div(&cz.totals)).amax())
        .fold(0.0, f64::max);
    let eq = relax_to_equilibrium(&m, &cz, &z0).unwrap();
    let dist = (&traj.last().0 - &eq.0).amax();
    pass &= check(drift < 1e-9 && dist < 1e-6, "trajectory", &mut notes);
    notes.push(format!("drift {drift:.1e} end-to-equilibrium {dist:.1e}"));

    // corrector agreement and Newton tail
    let g = ggn_solve(&p, &start(), &SolverOptions::default()).unwrap();
    let n = newton_kkt_solve(&p, &start(), &SolverOptions::default()).unwrap();
    let gap = (&g.x.0 - &n.x.0).amax();
    let d = &n.increments;
    let quadratic = d.len() >= 3 && d[d.len() - 3..].windows(2).all(|w| w[1] <= 10.0 * w[0] * w[0]);
    pass &= check(gap < 1e-8 && quadratic, "correctors", &mut notes);
    let tail: Vec<String> = d.iter().map(|v| format!("{v:.1e}")).collect();
    notes.push(format!("ggn-newton {gap:.1e} newton increments [{}]", tail.join(", ")));

    r.line(7, "property suite", pass, notes.join("; "));
}

fn main() {
    let mut r = Report { failed: Vec::new() };
    golden_solve(&mut r);
    conservation_cross_check(&mut r);
    one_d_sweep(&mut r);
    predictor_benefit(&mut r);
    step_size_controller(&mut r);
    landscape_multiplicity(&mut r);
    property_suite(&mut r);
    println!("acceptance: {} of 7 criteria pass; failing {:?}", 7 - r.failed.len(), r.failed);
    if !r.failed.is_empty() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
