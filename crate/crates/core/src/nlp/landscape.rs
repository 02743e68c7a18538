//! Objective landscapes over conservation-completed states.

use super::objective;
use super::problem::complete_state;
use crate::error::{Error, Result};
use crate::kinetics::{ConservationSystem, Mechanism, StateVector, NEGATIVE_SLACK};
use crate::par;

/// What to do with grid points whose completion has negative components.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum UnphysicalPolicy {
    /// Flag the point and leave `Φ` undefined.
    #[default]
    Skip,
    /// Flag the point but still evaluate `Φ` on the (unphysical) polynomial
    /// extension of the rate law.
    Evaluate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandscapeSpec {
    /// Components held at fixed values for the whole scan.
    pub fixed: Vec<(usize, f64)>,
    /// One or two scanned components with their values.
    pub axes: Vec<(usize, Vec<f64>)>,
    pub policy: UnphysicalPolicy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandscapePoint {
    /// Index along each axis.
    pub index: Vec<usize>,
    /// Scanned coordinate values.
    pub coords: Vec<f64>,
    /// Completed state, `None` if the completion system is singular.
    pub z: Option<StateVector>,
    pub phi: Option<f64>,
    pub physical: bool,
}

/// Evaluates `Φ = ‖J_S S‖²` on every grid point of `spec`.
pub fn landscape_scan(
    mech: &Mechanism,
    cons: &ConservationSystem,
    spec: &LandscapeSpec,
    jobs: usize,
) -> Result<Vec<LandscapePoint>> {
    if spec.axes.is_empty() || spec.axes.len() > 2 {
        return Err(Error::InvalidProblem("landscape needs one or two scan axes".into()));
    }
    let n = mech.n_species();
    let mut used: Vec<usize> = spec.fixed.iter().map(|f| f.0).collect();
    used.extend(spec.axes.iter().map(|a| a.0));
    if used.iter().any(|&i| i >= n) {
        return Err(Error::InvalidProblem("landscape index out of range".into()));
    }
    if used.len() + cons.n_rows() != n {
        return Err(Error::InvalidProblem(format!(
            "landscape must fix exactly {} components (fixed + scanned), got {}",
            n - cons.n_rows(),
            used.len()
        )));
    }

    let mut grid: Vec<Vec<usize>> = vec![vec![]];
    for (_, vals) in &spec.axes {
        grid = grid
            .into_iter()
            .flat_map(|p| {
                (0..vals.len()).map(move |k| {
                    let mut q = p.clone();
                    q.push(k);
                    q
                })
            })
            .collect();
    }

    let points = par::map_with_jobs(jobs, &grid, |idx| {
        let coords: Vec<f64> = idx.iter().zip(&spec.axes).map(|(&k, a)| a.1[k]).collect();
        let mut fixed = spec.fixed.clone();
        fixed.extend(spec.axes.iter().zip(&coords).map(|(a, &v)| (a.0, v)));
        match complete_state(cons, &fixed) {
            Ok(z) => {
                let physical = z.is_nonnegative(NEGATIVE_SLACK);
                let phi = (physical || spec.policy == UnphysicalPolicy::Evaluate)
                    .then(|| objective::phi(mech, &z))
                    .filter(|v| v.is_finite());
                LandscapePoint {
                    index: idx.clone(),
                    coords,
                    z: Some(z),
                    phi,
                    physical,
                }
            }
            Err(_) => LandscapePoint {
                index: idx.clone(),
                coords,
                z: None,
                phi: None,
                physical: false,
            },
        }
    });
    Ok(points)
}

/// Interior strict local minima of a 1-D scan (undefined values break runs).
pub fn local_minima(points: &[LandscapePoint]) -> Vec<usize> {
    (1..points.len().saturating_sub(1))
        .filter(|&k| match (points[k - 1].phi, points[k].phi, points[k + 1].phi) {
            (Some(a), Some(b), Some(c)) => b < a && b < c,
            _ => false,
        })
        .collect()
}
