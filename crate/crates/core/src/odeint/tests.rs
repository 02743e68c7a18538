use super::*;
use crate::kinetics::tests::{REFERENCE_INITIAL, REFERENCE_SOLUTION};
use crate::nlp::landscape::{landscape_scan, LandscapeSpec, UnphysicalPolicy};
use crate::nlp::tests::golden;
use crate::nlp::{assemble, complete_state, ggn_solve, phi, ActiveSetState, NlpProblem, ProgressVariableSpec};

const HORIZON: f64 = 1e-2;

fn reference_solution() -> (Mechanism, ConservationSystem, StateVector) {
    let (m, _) = golden();
    let z = StateVector::from_slice(&REFERENCE_SOLUTION);
    // the published column is rounded; use its own totals
    let c = ConservationSystem::from_anchor(&m, &z).unwrap();
    (m, c, z)
}

/// Deterministic low-discrepancy points in `[0, 1)^3`.
fn halton(k: usize) -> [f64; 3] {
    let radical = |mut i: usize, b: usize| {
        let (mut f, mut r) = (1.0, 0.0);
        while i > 0 {
            f /= b as f64;
            r += f * (i % b) as f64;
            i /= b;
        }
        r
    };
    [radical(k, 2), radical(k, 3), radical(k, 5)]
}

#[test]
fn equilibrium_start_stays_put() {
    let (m, c, z) = reference_solution();
    let eq = relax_to_equilibrium(&m, &c, &z).unwrap();
    let tr = integrate(&m, &eq, (0.0, 1e-3), 1e-10).unwrap();
    for s in &tr.states {
        assert!((&s.0 - &eq.0).amax() <= 1e-9 * eq.amax());
    }
}

#[test]
fn trajectory_from_reference_reaches_equilibrium() {
    let (m, c, z) = reference_solution();
    let eq = relax_to_equilibrium(&m, &c, &z).unwrap();
    let tr = integrate(&m, &z, (0.0, HORIZON), 1e-10).unwrap();
    assert!((&tr.last().0 - &eq.0).amax() < 1e-6);
    assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    assert_eq!((tr.t0(), tr.tf()), (0.0, HORIZON));
    let b0 = &c.matrix * &z.0;
    let mass0 = m.mass(&z);
    for s in &tr.states {
        assert!(s.iter().all(|&v| v >= -1e-12));
        assert!((&c.matrix * &s.0 - &b0).amax() <= 1e-9 * b0.amax());
        assert!((m.mass(s) - mass0).abs() <= 1e-9 * mass0);
    }
    // monotone approach in ‖S‖ over the tail
    let tail: Vec<f64> = tr
        .times
        .iter()
        .zip(&tr.states)
        .filter(|(t, _)| **t >= 1e-4)
        .map(|(_, s)| m.source_term(s).amax())
        .collect();
    assert!(tail.len() > 10);
    // S is a difference of gross rates, so its roundoff floor scales with them
    let floor = 1e-14 * characteristic_rate(&m, &eq);
    for w in tail.windows(2) {
        assert!(w[1] <= w[0] + floor, "{w:?}");
    }
}

#[test]
fn zero_horizon_returns_the_start() {
    let (m, _, z) = reference_solution();
    let tr = integrate(&m, &z, (1.0, 1.0), 1e-8).unwrap();
    assert_eq!(tr.len(), 1);
    assert_eq!(tr.states[0], z);
    assert_eq!(tr.steps, 0);
}

#[test]
fn invalid_arguments_are_rejected() {
    let (m, c, z) = reference_solution();
    assert!(integrate(&m, &z, (1.0, 0.0), 1e-8).is_err());
    assert!(integrate(&m, &z, (0.0, f64::INFINITY), 1e-8).is_err());
    assert!(integrate(&m, &z, (0.0, 1.0), 0.0).is_err());
    assert!(integrate(&m, &StateVector::zeros(3), (0.0, 1.0), 1e-8).is_err());
    let mut neg = z.clone();
    neg[0] = -1e-3;
    assert!(integrate(&m, &neg, (0.0, 1.0), 1e-8).is_err());
    let mut off = z.clone();
    off[5] += 1.0;
    assert!(matches!(relax_to_equilibrium(&m, &c, &off), Err(Error::Equilibrium(_))));
}

#[test]
fn equilibrium_is_unique_for_given_totals() {
    let (m, c) = golden();
    let z0 = StateVector::from_slice(&REFERENCE_INITIAL);
    let nb = conserved_directions(&c);
    assert_eq!(nb.ncols(), 3);
    assert!((&c.matrix * &nb).amax() < 1e-12);
    let eq0 = relax_to_equilibrium(&m, &c, &z0).unwrap();
    for k in 1..4 {
        let [a, b, d] = halton(k);
        let dir = &nb * DVector::from_column_slice(&[a - 0.5, b - 0.5, d - 0.5]);
        // the largest step that keeps the start nonnegative, halved
        let t = (0..6)
            .filter(|&i| dir[i] < 0.0)
            .map(|i| -z0[i] / dir[i])
            .fold(1.0, f64::min);
        let z1 = StateVector(&z0.0 + dir * (0.5 * t));
        let eq1 = relax_to_equilibrium(&m, &c, &z1).unwrap();
        assert!((&eq0.0 - &eq1.0).amax() < 1e-8, "{k}: {:e}", (&eq0.0 - &eq1.0).amax());
    }
}

#[test]
fn equilibrium_satisfies_detailed_balance() {
    let (m, c) = golden();
    let eq = relax_to_equilibrium(&m, &c, &StateVector::from_slice(&REFERENCE_INITIAL)).unwrap();
    for (k, (f, r)) in m.rates_of_progress(&eq).into_iter().enumerate() {
        assert!((f - r).abs() <= 1e-6 * f.max(r), "reaction {k}: {f:e} vs {r:e}");
    }
    // and is where the objective residual vanishes with no pins
    let p = NlpProblem::new(&m, &c, ProgressVariableSpec::new(vec![], vec![]).unwrap()).unwrap();
    let at_eq = assemble(&p, &eq, &ActiveSetState::empty());
    let away = assemble(&p, &StateVector::from_slice(&REFERENCE_INITIAL), &ActiveSetState::empty());
    assert!(at_eq.f1.norm() < 1e-6 * away.f1.norm());
    assert!(at_eq.f2.amax() < 1e-12);
}

#[test]
fn equilibrium_minimizes_phi_over_feasible_samples() {
    let (m, c) = golden();
    let eq = relax_to_equilibrium(&m, &c, &StateVector::from_slice(&REFERENCE_INITIAL)).unwrap();
    let phi_eq = phi(&m, &eq);
    let mut tested = 0;
    let mut k = 1;
    while tested < 1000 {
        let [a, b, d] = halton(k);
        k += 1;
        let z = complete_state(&c, &[(0, 4.0 * a), (1, 6.0 * b), (4, 4.2 * d)]).unwrap();
        if z.iter().all(|&v| v >= 0.0) {
            assert!(phi_eq <= phi(&m, &z), "{:?}", z.as_slice());
            tested += 1;
        }
    }
}

#[test]
fn landscape_minimum_at_equilibrium_completion() {
    let (m, c) = golden();
    let eq = relax_to_equilibrium(&m, &c, &StateVector::from_slice(&REFERENCE_INITIAL)).unwrap();
    let mut scan: Vec<f64> = (0..41).map(|k| eq[4] - 0.2 + 0.01 * k as f64).collect();
    scan[20] = eq[4];
    let spec = LandscapeSpec {
        fixed: vec![(0, eq[0]), (1, eq[1])],
        axes: vec![(4, scan)],
        policy: UnphysicalPolicy::Skip,
    };
    let pts = landscape_scan(&m, &c, &spec, 1).unwrap();
    let best = pts
        .iter()
        .filter(|p| p.phi.is_some())
        .min_by(|a, b| a.phi.unwrap().total_cmp(&b.phi.unwrap()))
        .unwrap();
    assert_eq!(best.index, vec![20]);
}

#[test]
fn global_error_follows_the_method_order() {
    let (m, _, z) = reference_solution();
    let span = (0.0, 1e-4);
    let reference = integrate(&m, &z, span, 1e-13).unwrap();
    let err = |tol: f64| (&integrate(&m, &z, span, tol).unwrap().last().0 - &reference.last().0).amax();
    // local error control at order 2 gives global error ∝ tol^(2/3)
    let ratio = err(1e-6) / err(1e-8);
    let expected = 100f64.powf(2.0 / 3.0);
    assert!(ratio > expected / 3.0 && ratio < expected * 3.0, "{ratio}");
}

/// Distance from `z` to the polyline through `states`.
fn distance_to_curve(z: &StateVector, states: &[StateVector]) -> f64 {
    states
        .windows(2)
        .map(|w| {
            let seg = &w[1].0 - &w[0].0;
            let len2 = seg.norm_squared();
            let t = if len2 > 0.0 { ((&z.0 - &w[0].0).dot(&seg) / len2).clamp(0.0, 1.0) } else { 0.0 };
            (&z.0 - &w[0].0 - seg * t).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn nearby_trajectories_are_attracted_to_the_manifold() {
    let (m, c) = golden();
    let p = NlpProblem::new(&m, &c, ProgressVariableSpec::by_name(&m, &[("H2O", 1.5)]).unwrap()).unwrap();
    let sim = ggn_solve(&p, &StateVector::from_slice(&REFERENCE_INITIAL), &Default::default()).unwrap().x;
    let nb = conserved_directions(&c);
    let eq = relax_to_equilibrium(&m, &c, &sim).unwrap();
    // forward trajectory through the manifold point as the reference curve
    let reference = integrate(&m, &sim, (0.0, HORIZON), 1e-10).unwrap();
    for k in 1..6 {
        let [a, b, d] = halton(k);
        // perturb within the conserved subspace, keeping the pinned species
        let mut dir = &nb * DVector::from_column_slice(&[a - 0.5, b - 0.5, d - 0.5]);
        let along = nb.row(4).transpose();
        dir -= &nb * (&along * (dir[4] / along.norm_squared()));
        assert!(dir[4].abs() < 1e-12);
        let start = StateVector(&sim.0 + dir * 0.02);
        assert!(start.iter().all(|&v| v >= 0.0));
        let tr = integrate(&m, &start, (0.0, 1e-5), 1e-10).unwrap();
        let d0 = distance_to_curve(&start, &reference.states);
        let d1 = distance_to_curve(tr.last(), &reference.states);
        assert!(d1 < 0.1 * d0, "{k}: {d0:e} -> {d1:e}");
        // … well before reaching equilibrium
        assert!((&tr.last().0 - &eq.0).norm() > 10.0 * d1);
    }
}
