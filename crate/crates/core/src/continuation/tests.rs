use super::*;
use crate::kinetics::tests::REFERENCE_INITIAL;
use crate::kinetics::{ConservationSystem, Mechanism};
use crate::nlp::tests::golden;
use crate::nlp::{ggn_solve, ProgressVariableSpec};

fn start() -> StateVector {
    StateVector::from_slice(&REFERENCE_INITIAL)
}

fn one_d<'a>(m: &'a Mechanism, c: &'a ConservationSystem) -> NlpProblem<'a> {
    NlpProblem::new(m, c, ProgressVariableSpec::by_name(m, &[("H2O", 3.0)]).unwrap()).unwrap()
}

fn two_d<'a>(m: &'a Mechanism, c: &'a ConservationSystem) -> NlpProblem<'a> {
    NlpProblem::new(m, c, ProgressVariableSpec::by_name(m, &[("H2O", 3.0), ("H2", REFERENCE_INITIAL[1])]).unwrap()).unwrap()
}

fn anchor(p: &NlpProblem) -> PathPoint {
    PathPoint::solve(p, &start(), &ContinuationConfig::default()).unwrap()
}

fn grid_1d() -> GridSpec {
    GridSpec::new(vec![GridSpec::range(0.0, 0.25, 17)]).unwrap()
}

fn grid_2d() -> GridSpec {
    let mut a = vec![0.001];
    a.extend(GridSpec::range(0.5, 0.5, 11));
    let mut b = vec![0.001];
    b.extend(GridSpec::range(0.5, 0.5, 8));
    GridSpec::new(vec![a, b]).unwrap()
}

fn config(mode: Mode, predictor: Predictor) -> ContinuationConfig {
    ContinuationConfig {
        mode,
        predictor,
        ..Default::default()
    }
}

#[test]
fn euler_predict_trivial_cases() {
    let (m, c) = golden();
    let p = one_d(&m, &c);
    let a = anchor(&p);
    assert_eq!(euler_predict(&a, &[2.0], 0.0).0, a.solution.x);
    assert_eq!(euler_predict(&a, &[3.0], 0.7).0, a.solution.x);
    let (x, _) = euler_predict(&a, &[2.0], 0.5);
    assert_eq!(x[4], 2.5);
    assert!(x.iter().all(|&v| v >= 0.0));
    let no_sens = PathPoint { sens: None, ..a.clone() };
    assert_eq!(euler_predict(&no_sens, &[2.0], 1.0).0, a.solution.x);
}

#[test]
fn euler_initial_error_is_second_order() {
    let (m, c) = golden();
    let p = one_d(&m, &c);
    let a = anchor(&p);
    let err = |d: f64| {
        let target = ggn_solve(&p.with_pins(&[3.0 - d]).unwrap(), &start(), &Default::default()).unwrap();
        (&euler_predict(&a, &[3.0 - d], 1.0).0 .0 - &target.x.0).norm()
    };
    let ratio = err(0.2) / err(0.1);
    assert!((3.0..=5.0).contains(&ratio), "{ratio}");
}

#[test]
fn continue_to_same_parameter_returns_start() {
    let (m, c) = golden();
    let p = one_d(&m, &c);
    let a = anchor(&p);
    let seg = continue_to(&p, &a, &[3.0], &ContinuationConfig::default()).unwrap();
    assert_eq!(seg.points.len(), 1);
    assert_eq!(seg.iterations, 0);
    assert!(seg.reached());
}

#[test]
fn adaptive_jump_inserts_an_intermediate_point() {
    let (m, c) = golden();
    let p = one_d(&m, &c);
    let a = anchor(&p);
    let full = continue_to(&p, &a, &[0.5], &config(Mode::FullStep, Predictor::Euler)).unwrap();
    let adaptive = continue_to(&p, &a, &[0.5], &config(Mode::Adaptive, Predictor::Euler)).unwrap();
    assert!(full.reached() && adaptive.reached());
    assert_eq!(full.points.len(), 2);
    let inner: Vec<f64> = adaptive.points[1..adaptive.points.len() - 1].iter().map(|q| q.r[0]).collect();
    assert!(!inner.is_empty() && inner.iter().all(|&r| r > 0.5 && r < 3.0), "{inner:?}");
    assert!((inner[0] - 2.0).abs() < 1e-12);
    assert!(adaptive.iterations <= 2 * full.iterations);
    let end = adaptive.last();
    assert_eq!(end.r, vec![0.5]);
    assert!((&end.solution.x.0 - &full.last().solution.x.0).amax() < 1e-8);
}

#[test]
fn infeasible_target_fails_with_last_good_point() {
    let (m, c) = golden();
    let p = one_d(&m, &c);
    let a = anchor(&p);
    let full = continue_to(&p, &a, &[5.0], &config(Mode::FullStep, Predictor::Euler)).unwrap();
    let f = full.failure.as_ref().unwrap();
    assert!(!f.path_failure);
    assert_eq!(full.points.len(), 1);
    let adaptive = continue_to(&p, &a, &[5.0], &config(Mode::Adaptive, Predictor::Euler)).unwrap();
    let f = adaptive.failure.as_ref().unwrap();
    assert!(f.path_failure);
    let last = adaptive.last();
    assert!(last.r[0] > 3.0 && last.r[0] < 4.12, "{:?}", last.r);
    assert!(last.solution.converged());
}

#[test]
fn linear_step_query_cases() {
    let (m, c) = golden();
    let p = one_d(&m, &c);
    let a = anchor(&p);
    assert_eq!(linear_step_query(&a, &[3.0], 1.1).unwrap(), a.solution.x);
    assert_eq!(linear_step_query(&a, &[2.0], 1.1).unwrap()[4], 2.0);
    assert!(linear_step_query(&a, &[1.75], 1.1).is_none());
}

#[test]
fn one_d_sweep_is_economical() {
    let (m, c) = golden();
    let p = one_d(&m, &c);
    let a = anchor(&p);
    let res = sweep_grid(&p, &a, &grid_1d(), &ContinuationConfig::default(), 1).unwrap();
    assert_eq!(res.points.len(), 17);
    assert_eq!(res.converged(), 17);
    assert!(res.total_iterations() <= 150);
    assert!(res.total_iterations() as f64 / 17.0 <= 9.0);
    // the grid point at the anchor costs nothing
    assert_eq!(res.points[12].iterations, 0);
    for q in &res.points {
        let z = q.z.as_ref().unwrap();
        assert_eq!(z[4], q.r[0]);
        assert!(c.residual(z).amax() < 1e-9);
        assert_eq!(q.tangents.as_ref().unwrap().shape(), (6, 1));
    }
    // no branch jumping: bounded difference quotients along the path (the
    // tangent grows like r^-1/2 towards H2O = 0, hence the loose bound)
    for w in res.points.windows(2) {
        let dz = (&w[1].z.as_ref().unwrap().0 - &w[0].z.as_ref().unwrap().0).norm();
        assert!(dz / 0.25 < 20.0, "{:?}: {}", w[0].r, dz / 0.25);
        if w[0].r[0] >= 0.5 {
            let t = w[0].tangents.as_ref().unwrap().norm().max(w[1].tangents.as_ref().unwrap().norm());
            assert!(dz / 0.25 <= 1.5 * t, "{:?}", w[0].r);
        }
    }
    let constant = sweep_grid(&p, &a, &grid_1d(), &config(Mode::FullStep, Predictor::Constant), 1).unwrap();
    assert_eq!(constant.converged(), 17);
    assert!(res.total_iterations() < constant.total_iterations());
}

#[test]
fn linear_mode_corrects_only_far_points() {
    let (m, c) = golden();
    let p = one_d(&m, &c);
    let a = anchor(&p);
    let res = sweep_grid(&p, &a, &grid_1d(), &config(Mode::LinearStep, Predictor::Euler), 1).unwrap();
    let corrected: Vec<f64> = res
        .points
        .iter()
        .filter(|q| q.outcome == PointOutcome::Converged)
        .map(|q| q.r[0])
        .collect();
    assert_eq!(corrected, vec![0.5, 1.75, 3.0]);
    assert_eq!(res.failures(), 0);
    // deviation from the corrected path grows quadratically with distance
    let exact = sweep_grid(&p, &a, &grid_1d(), &ContinuationConfig::default(), 1).unwrap();
    let dev = |k: usize| (&res.points[k].z.as_ref().unwrap().0 - &exact.points[k].z.as_ref().unwrap().0).norm();
    let ratio = dev(10) / dev(11); // distance 0.5 vs 0.25 from 3.0
    assert!((3.0..=5.0).contains(&ratio), "{ratio}");
}

#[test]
fn degenerate_grid_at_anchor() {
    let (m, c) = golden();
    let p = one_d(&m, &c);
    let a = anchor(&p);
    let res = sweep_grid(&p, &a, &GridSpec::new(vec![vec![3.0]]).unwrap(), &ContinuationConfig::default(), 1).unwrap();
    assert_eq!(res.points.len(), 1);
    assert_eq!(res.points[0].iterations, 0);
    assert_eq!(res.points[0].z.as_ref().unwrap().0, a.solution.x.0);
}

#[test]
fn feasibility_prefilter() {
    let (_, c) = golden();
    let pins = [4, 1];
    assert!(pins_feasible(&c, &pins, &[3.0, 2.0]));
    assert!(pins_feasible(&c, &pins, &[0.0, 0.0]));
    assert!(!pins_feasible(&c, &pins, &[4.5, 0.001]));
    assert!(!pins_feasible(&c, &pins, &[4.0, 4.0]));
    assert!(!pins_feasible(&c, &pins, &[-0.25, 1.0]));
    let g = grid_2d();
    let feasible = (0..12)
        .flat_map(|i| (0..9).map(move |j| (i, j)))
        .filter(|&(i, j)| pins_feasible(&c, &pins, &[g.axes[0][i], g.axes[1][j]]))
        .count();
    assert_eq!(feasible, 71);
}

#[test]
fn two_d_sweep_prefers_euler_and_ignores_jobs() {
    let (m, c) = golden();
    let p = two_d(&m, &c);
    let a = anchor(&p);
    let euler = sweep_grid(&p, &a, &grid_2d(), &ContinuationConfig::default(), 1).unwrap();
    assert_eq!(euler.points.len(), 108);
    assert_eq!(euler.attempted(), 71);
    let constant = sweep_grid(&p, &a, &grid_2d(), &config(Mode::FullStep, Predictor::Constant), 1).unwrap();
    assert!(euler.total_iterations() < constant.total_iterations());
    let par = sweep_grid(&p, &a, &grid_2d(), &ContinuationConfig::default(), 4).unwrap();
    for (u, v) in euler.points.iter().zip(&par.points) {
        assert_eq!(u.index, v.index);
        assert_eq!(u.outcome, v.outcome);
        assert_eq!(u.iterations, v.iterations);
        assert_eq!(u.z.as_ref().map(|z| z.0.clone()), v.z.as_ref().map(|z| z.0.clone()));
    }
    for q in euler.points.iter().filter(|q| q.outcome == PointOutcome::Converged) {
        let z = q.z.as_ref().unwrap();
        assert_eq!((z[4], z[1]), (q.r[0], q.r[1]));
        assert!(z.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn grid_and_config_validation() {
    assert!(GridSpec::new(vec![]).is_err());
    assert!(GridSpec::new(vec![vec![1.0], vec![], vec![2.0]]).is_err());
    assert!(GridSpec::new(vec![vec![f64::NAN]]).is_err());
    assert_eq!(GridSpec::range(3.0, -0.25, 3), vec![3.0, 2.75, 2.5]);
    let bad = ContinuationConfig {
        mode: Mode::LinearStep,
        eps_tol: 0.0,
        ..Default::default()
    };
    assert!(bad.validate().is_err());
    let (m, c) = golden();
    let p = one_d(&m, &c);
    let a = anchor(&p);
    assert!(sweep_grid(&p, &a, &grid_2d(), &ContinuationConfig::default(), 1).is_err());
    assert!(continue_to(&p, &a, &[1.0, 2.0], &ContinuationConfig::default()).is_err());
}

#[test]
fn negative_grid_values_are_infeasible() {
    let (m, c) = golden();
    let p = one_d(&m, &c);
    let a = anchor(&p);
    let g = GridSpec::new(vec![GridSpec::range(3.0, -0.25, 17)]).unwrap();
    let res = sweep_grid(&p, &a, &g, &ContinuationConfig::default(), 1).unwrap();
    assert_eq!(res.points.len(), 17);
    assert_eq!(res.failures(), 0);
    assert_eq!(res.converged(), 13);
    assert!(res.points[13..].iter().all(|q| q.outcome == PointOutcome::Infeasible));
}
