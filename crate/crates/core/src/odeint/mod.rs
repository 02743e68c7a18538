//! Stiff integration of `dz/dt = S(z)` with TR-BDF2 (L-stable, second
//! order, adaptive step), and relaxation to equilibrium.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kinetics::{ConservationSystem, Mechanism, StateVector, NEGATIVE_SLACK};

const GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;
/// Diagonal coefficient of both implicit stages, `γ/2`.
const D: f64 = GAMMA / 2.0;
/// Weight of the explicit terms in the second stage, `√2/4`.
const W: f64 = std::f64::consts::SQRT_2 / 4.0;
const MAX_NEWTON: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// Strictly increasing, in seconds.
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub steps: usize,
    pub rejected: usize,
}

impl Trajectory {
    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn tf(&self) -> f64 {
        *self.times.last().expect("trajectory holds its start")
    }

    pub fn last(&self) -> &StateVector {
        self.states.last().expect("trajectory holds its start")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Mixed error weights `tol (1 + |z_i|)`.
fn weights(z: &DVector<f64>, tol: f64) -> DVector<f64> {
    z.map(|v| tol * (1.0 + v.abs()))
}

fn wnorm(v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    v.iter().zip(w.iter()).map(|(a, b)| (a / b).abs()).fold(0.0, f64::max)
}

/// Solves `z − D h S(z) = rhs` by Newton from `guess`. Linear invariants of
/// `S` are reproduced exactly by every Newton step.
fn stage(m: &Mechanism, rhs: &DVector<f64>, guess: &DVector<f64>, h: f64, w: &DVector<f64>) -> Option<DVector<f64>> {
    let n = rhs.len();
    let mut z = guess.clone();
    for _ in 0..MAX_NEWTON {
        let zs = StateVector(z.clone());
        let (s, j) = m.source_and_jacobian(&zs);
        let g = &z - &s * (D * h) - rhs;
        let mat = DMatrix::identity(n, n) - j * (D * h);
        let dz = mat.lu().solve(&(-g))?;
        z += &dz;
        if !z.iter().all(|v| v.is_finite()) {
            return None;
        }
        if wnorm(&dz, w) < 1e-3 {
            return Some(z);
        }
    }
    None
}

struct StepOutcome {
    z: DVector<f64>,
    /// Weighted local error estimate.
    err: f64,
}

fn trbdf2_step(m: &Mechanism, z: &DVector<f64>, f0: &DVector<f64>, h: f64, tol: f64) -> Option<StepOutcome> {
    let w = weights(z, tol);
    let zg = stage(m, &(z + f0 * (D * h)), &(z + f0 * (GAMMA * h)), h, &w)?;
    let fg = m.source_term(&StateVector(zg.clone()));
    let z1 = stage(m, &(z + (f0 + &fg) * (W * h)), &(z + f0 * h), h, &w)?;
    let f1 = m.source_term(&StateVector(z1.clone()));
    // difference to the embedded third-order weights
    let (b0, bg, b1) = (W - (1.0 - W) / 3.0, W - (3.0 * W + 1.0) / 3.0, D - D / 3.0);
    let e = (f0 * b0 + &fg * bg + &f1 * b1) * h;
    // filtered through the stage matrix so stiff components are not overestimated
    let n = z.len();
    let mat = DMatrix::identity(n, n) - m.jacobian(&StateVector(z1.clone())) * (D * h);
    let e = mat.lu().solve(&e).unwrap_or(e);
    let w1 = weights(&z1, tol).zip_map(&w, f64::min);
    Some(StepOutcome { err: wnorm(&e, &w1), z: z1 })
}

/// Integrates from `z0` over `t_span = (t0, tf)` with local error per step
/// at most `tol` in the mixed norm `|e_i| ≤ tol (1 + |z_i|)`.
pub fn integrate(m: &Mechanism, z0: &StateVector, t_span: (f64, f64), tol: f64) -> Result<Trajectory> {
    let (t0, tf) = t_span;
    if !(t0.is_finite() && tf.is_finite() && tf >= t0) {
        return Err(Error::InvalidProblem(format!("invalid time span ({t0}, {tf})")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidProblem(format!("tolerance must be positive, got {tol}")));
    }
    if z0.len() != m.n_species() {
        return Err(Error::InvalidProblem(format!(
            "start has {} entries, expected {}",
            z0.len(),
            m.n_species()
        )));
    }
    if !z0.is_nonnegative(NEGATIVE_SLACK) || z0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidProblem("start must be finite and nonnegative".into()));
    }
    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![z0.clone()],
        steps: 0,
        rejected: 0,
    };
    let span = tf - t0;
    if span == 0.0 {
        return Ok(traj);
    }
    let mut t = t0;
    let mut z = z0.0.clone();
    let mut f = m.source_term(z0);
    let scaled_rate = wnorm(&f, &weights(&z, 1.0));
    let mut h = if scaled_rate > 0.0 {
        (0.01 * tol.cbrt() / scaled_rate).min(span)
    } else {
        span
    };
    let h_floor = 1e-14 * tf.abs().max(span);
    while t < tf {
        let last = t + h >= tf;
        let h_try = if last { tf - t } else { h };
        match trbdf2_step(m, &z, &f, h_try, tol) {
            Some(out) if out.err <= 1.0 && out.z.iter().all(|&v| v >= -NEGATIVE_SLACK) => {
                t = if last { tf } else { t + h_try };
                z = out.z.map(|v| v.max(0.0));
                f = m.source_term(&StateVector(z.clone()));
                traj.times.push(t);
                traj.states.push(StateVector(z.clone()));
                traj.steps += 1;
                let factor = if out.err > 0.0 { 0.9 * out.err.powf(-1.0 / 3.0) } else { 5.0 };
                h = h_try * factor.clamp(0.2, 5.0);
            }
            Some(out) => {
                traj.rejected += 1;
                let factor = if out.err > 1.0 { 0.9 * out.err.powf(-1.0 / 3.0) } else { 0.5 };
                h = h_try * factor.clamp(0.1, 0.5);
            }
            None => {
                traj.rejected += 1;
                h = h_try * 0.25;
            }
        }
        if h < h_floor {
            return Err(Error::Integration {
                t,
                msg: format!("step size underflow (h = {h:.3e})"),
            });
        }
    }
    Ok(traj)
}

/// Gross reaction flux in specific units: the largest one-way rate of
/// progress, scaled like `S`.
pub fn characteristic_rate(m: &Mechanism, z: &StateVector) -> f64 {
    let g = m.volume_factor() * z.iter().map(|v| v.max(0.0)).sum::<f64>();
    m.rates_of_progress(z)
        .iter()
        .map(|&(f, r)| f.max(r))
        .fold(0.0, f64::max)
        * g
}

/// Orthonormal basis of the null space of `C` (directions that keep the
/// conservation totals).
fn conserved_directions(cons: &ConservationSystem) -> DMatrix<f64> {
    let n = cons.matrix.ncols();
    let eig = (cons.matrix.transpose() * &cons.matrix).symmetric_eigen();
    let tol = 1e-10 * eig.eigenvalues.amax().max(1.0);
    let cols: Vec<_> = (0..n)
        .filter(|&k| eig.eigenvalues[k].abs() < tol)
        .map(|k| eig.eigenvectors.column(k).into_owned())
        .collect();
    DMatrix::from_columns(&cols)
}

/// Integrates until `‖S(z)‖∞ < 1e-10 ·` [`characteristic_rate`], then
/// polishes with damped Newton on `S(z) = 0` within the conserved subspace.
pub fn relax_to_equilibrium(m: &Mechanism, cons: &ConservationSystem, z0: &StateVector) -> Result<StateVector> {
    let resid = cons.residual(z0).amax();
    if resid > 1e-8 * cons.totals.amax().max(1.0) {
        return Err(Error::Equilibrium(format!("start violates conservation by {resid:.3e}")));
    }
    let mut z = z0.clone();
    let mut horizon = 1e-6;
    let mut t = 0.0;
    let mut settled = false;
    for _ in 0..40 {
        let rate = characteristic_rate(m, &z);
        if rate == 0.0 || m.source_term(&z).amax() < 1e-10 * rate {
            settled = true;
            break;
        }
        z = integrate(m, &z, (t, t + horizon), 1e-10)?.last().clone();
        t += horizon;
        horizon *= 2.0;
    }
    if !settled {
        return Err(Error::Equilibrium(format!("not settled after t = {t:.3e} s")));
    }
    polish(m, cons, z)
}

fn polish(m: &Mechanism, cons: &ConservationSystem, mut z: StateVector) -> Result<StateVector> {
    let nb = conserved_directions(cons);
    let residual = |z: &StateVector| (nb.transpose() * m.source_term(z)).norm();
    let mut r = residual(&z);
    for _ in 0..50 {
        let (s, j) = m.source_and_jacobian(&z);
        let g = nb.transpose() * &s;
        let jr = nb.transpose() * j * &nb;
        let Some(dy) = jr.lu().solve(&(-g)) else {
            break;
        };
        let dz = &nb * dy;
        let mut t = 1.0;
        let mut improved = false;
        while t > 1e-6 {
            let trial = StateVector(&z.0 + &dz * t);
            if trial.iter().all(|&v| v >= 0.0) {
                let rt = residual(&trial);
                if rt < r {
                    z = trial;
                    r = rt;
                    improved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !improved || dz.amax() * t < 1e-15 * z.amax() {
            break;
        }
    }
    let rate = characteristic_rate(m, &z);
    if m.source_term(&z).amax() > 1e-10 * rate {
        return Err(Error::Equilibrium(format!("Newton polish stalled at ‖S‖ = {:.3e}", m.source_term(&z).amax())));
    }
    Ok(z)
}

#[cfg(test)]
mod tests;
