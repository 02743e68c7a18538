//! First-order parameter sensitivities of a KKT point with respect to the
//! pinned values, and the tangent (linear) prediction built on them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kinetics::StateVector;
use crate::nlp::linalg::KktFactor;
use crate::nlp::problem::constraint_rows;
use crate::nlp::solver::objective_scale;
use crate::nlp::{objective, KktSolution, NlpProblem};

/// Bound multipliers at or below this (in the normalized objective scale)
/// violate strict complementarity.
pub const STRICT_COMPLEMENTARITY: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityMatrix {
    /// Parameter values the derivatives were taken at.
    pub r: DVector<f64>,
    /// Species index of each parameter.
    pub pins: Vec<usize>,
    /// `n × n_r`.
    pub dx_dr: DMatrix<f64>,
    /// Conservation rows then pins, `(m_c + n_r) × n_r`.
    pub dlambda_dr: DMatrix<f64>,
    /// Active bounds, `n_active × n_r`.
    pub dmu_dr: DMatrix<f64>,
    /// `max_i ‖K r_i − e_i‖∞ / ‖e_i‖∞` over the right-hand sides.
    pub residual: f64,
}

impl SensitivityMatrix {
    pub fn n_params(&self) -> usize {
        self.dx_dr.ncols()
    }

    /// Tangent column `i` (derivative of the solution along parameter `i`).
    pub fn tangent(&self, i: usize) -> DVector<f64> {
        self.dx_dr.column(i).into_owned()
    }
}

/// Differentiates the KKT conditions
/// `∇f(x) − J2ᵀ λ = 0, F2(x, r) = 0` with respect to `r`:
/// `[H  −J2ᵀ; J2  0] [dx; dλ] = [0; E]` where `E` selects the pin rows. `H`
/// is the exact Hessian of `½‖F1‖²` whichever corrector produced `sol`.
pub fn kkt_sensitivities(problem: &NlpProblem, sol: &KktSolution) -> Result<SensitivityMatrix> {
    if !sol.converged() {
        return Err(Error::SensitivityUnavailable(format!("solution status is {}", sol.status)));
    }
    let n = problem.n();
    let nr = problem.pins.len();
    let mc = problem.conservation.n_rows();
    let active = &sol.active.active;
    let x = &sol.x;

    let (f1, j1) = objective::residual_and_jacobian(problem.mechanism, x);
    let s = objective_scale(&j1);
    let s2 = s * s;
    if let Some((k, mu)) = sol
        .active
        .mu
        .iter()
        .enumerate()
        .find(|(_, mu)| (**mu * s2).abs() <= STRICT_COMPLEMENTARITY)
    {
        return Err(Error::SensitivityUnavailable(format!(
            "weakly active bound on species {} (μ = {mu:.3e})",
            active[k]
        )));
    }

    let h = (j1.transpose() * &j1 + objective::curvature(problem.mechanism, x, &f1)) * s2;
    let (_, j2) = constraint_rows(problem, x, active);
    let kkt = KktFactor::new(&h, &j2);
    kkt.check()
        .map_err(|e| Error::SensitivityUnavailable(format!("KKT matrix: {e}")))?;

    let m = j2.nrows();
    let mut dx = DMatrix::zeros(n, nr);
    let mut dl = DMatrix::zeros(m, nr);
    let mut residual = 0.0f64;
    let zero = DVector::zeros(n);
    for i in 0..nr {
        let mut e = DVector::zeros(m);
        e[mc + i] = 1.0;
        let (d, l) = kkt.solve(&zero, &(-&e));
        let r_top = &h * &d - j2.transpose() * &l;
        let r_bot = &j2 * &d - &e;
        residual = residual.max(r_top.amax().max(r_bot.amax()));
        dx.set_column(i, &d);
        dl.set_column(i, &l);
    }
    // exact structure: identity on pins, zero on active bounds
    for (k, &p) in problem.pins.indices.iter().enumerate() {
        for i in 0..nr {
            dx[(p, i)] = if i == k { 1.0 } else { 0.0 };
        }
    }
    for &a in active {
        dx.row_mut(a).fill(0.0);
    }
    let dl = dl / s2;
    Ok(SensitivityMatrix {
        r: problem.pins.r(),
        pins: problem.pins.indices.clone(),
        dx_dr: dx,
        dlambda_dr: dl.rows(0, mc + nr).into_owned(),
        dmu_dr: dl.rows(mc + nr, active.len()).into_owned(),
        residual,
    })
}

/// `z* + (dz*/dr)(r_new − r*)`; pinned entries equal `r_new` exactly.
pub fn tangent_predict(sol: &KktSolution, sens: &SensitivityMatrix, r_new: &[f64]) -> StateVector {
    let dr = DVector::from_column_slice(r_new) - &sens.r;
    let mut z = StateVector(&sol.x.0 + &sens.dx_dr * &dr);
    for (&p, &v) in sens.pins.iter().zip(r_new) {
        z[p] = v;
    }
    z
}

/// Linear prediction of `(λ, μ)` alongside [`tangent_predict`].
pub fn predict_multipliers(sol: &KktSolution, sens: &SensitivityMatrix, r_new: &[f64]) -> (DVector<f64>, DVector<f64>) {
    let dr = DVector::from_column_slice(r_new) - &sens.r;
    let mu = DVector::from_column_slice(&sol.active.mu);
    (&sol.lambda + &sens.dlambda_dr * &dr, mu + &sens.dmu_dr * &dr)
}
