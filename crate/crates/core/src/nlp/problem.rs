//! Problem description: pinned progress variables, conservation and bounds.

use nalgebra::{DMatrix, DVector};

use super::objective;
use crate::error::{Error, Result};
use crate::kinetics::{ConservationSystem, Mechanism, StateVector};

/// Species pinned to prescribed values `r` (the reaction progress variables).
#[derive(Clone, Debug, PartialEq)]
pub struct ProgressVariableSpec {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl ProgressVariableSpec {
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::InvalidProblem(format!(
                "{} pin indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        for (a, &i) in indices.iter().enumerate() {
            if indices[..a].contains(&i) {
                return Err(Error::InvalidProblem(format!("duplicate pin on species {i}")));
            }
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidProblem(format!("pin value {v} must be finite and nonnegative")));
        }
        Ok(Self { indices, values })
    }

    /// Pins by species name.
    pub fn by_name(mech: &Mechanism, pins: &[(&str, f64)]) -> Result<Self> {
        let indices = pins
            .iter()
            .map(|(n, _)| mech.species_index(n))
            .collect::<Result<Vec<_>>>()?;
        Self::new(indices, pins.iter().map(|p| p.1).collect())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn with_values(&self, values: &[f64]) -> Result<Self> {
        Self::new(self.indices.clone(), values.to_vec())
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.contains(&i)
    }

    pub fn r(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }
}

/// The local problem: minimize `½‖F1(x)‖²` subject to `C x = b`, pinned
/// components and `x ≥ 0`.
#[derive(Clone, Debug)]
pub struct NlpProblem<'a> {
    pub mechanism: &'a Mechanism,
    pub conservation: &'a ConservationSystem,
    pub pins: ProgressVariableSpec,
}

impl<'a> NlpProblem<'a> {
    pub fn new(
        mechanism: &'a Mechanism,
        conservation: &'a ConservationSystem,
        pins: ProgressVariableSpec,
    ) -> Result<Self> {
        let n = mechanism.n_species();
        if conservation.matrix.ncols() != n {
            return Err(Error::InvalidProblem("conservation system does not match the mechanism".into()));
        }
        if let Some(&i) = pins.indices.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidProblem(format!("pin index {i} out of range")));
        }
        if pins.len() + conservation.n_rows() >= n {
            return Err(Error::InvalidProblem(format!(
                "{} pins and {} conservation rows leave no free species out of {n}",
                pins.len(),
                conservation.n_rows()
            )));
        }
        Ok(Self {
            mechanism,
            conservation,
            pins,
        })
    }

    pub fn n(&self) -> usize {
        self.mechanism.n_species()
    }

    pub fn with_pins(&self, values: &[f64]) -> Result<Self> {
        Ok(Self {
            mechanism: self.mechanism,
            conservation: self.conservation,
            pins: self.pins.with_values(values)?,
        })
    }

    /// Number of rows of `F2` for a given active set.
    pub fn n_constraints(&self, n_active: usize) -> usize {
        self.conservation.n_rows() + self.pins.len() + n_active
    }

    /// `x` clipped to the bounds and with pins substituted.
    pub fn admissible_start(&self, x0: &StateVector) -> StateVector {
        let mut x = x0.clone();
        for v in x.iter_mut() {
            if !(*v > 0.0) {
                *v = 0.0;
            }
        }
        for (&i, &v) in self.pins.indices.iter().zip(&self.pins.values) {
            x[i] = v;
        }
        x
    }
}

/// Bound-constrained species held at zero and their multipliers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActiveSetState {
    pub active: Vec<usize>,
    pub mu: Vec<f64>,
}

impl ActiveSetState {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.active.contains(&i)
    }
}

/// Residual pair at a point: objective residual `F1 = J_S S` and the stacked
/// constraints `F2 = [C x − b; x_pinned − r; x_active]`, with Jacobians.
#[derive(Clone, Debug)]
pub struct Residuals {
    pub f1: DVector<f64>,
    pub j1: DMatrix<f64>,
    pub f2: DVector<f64>,
    pub j2: DMatrix<f64>,
}

impl Residuals {
    /// Constraint violation `‖F2‖₁`.
    pub fn theta(&self) -> f64 {
        self.f2.abs().sum()
    }

    /// `½‖F1‖²`.
    pub fn f(&self) -> f64 {
        0.5 * self.f1.norm_squared()
    }
}

/// Evaluates `F1, J1, F2, J2` at `x`.
pub fn assemble(problem: &NlpProblem, x: &StateVector, active: &ActiveSetState) -> Residuals {
    let (f1, j1) = objective::residual_and_jacobian(problem.mechanism, x);
    let (f2, j2) = constraint_rows(problem, x, &active.active);
    Residuals { f1, j1, f2, j2 }
}

pub(crate) fn constraint_rows(
    problem: &NlpProblem,
    x: &DVector<f64>,
    active: &[usize],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = problem.n();
    let cons = problem.conservation;
    let m = problem.n_constraints(active.len());
    let mut f2 = DVector::zeros(m);
    let mut j2 = DMatrix::zeros(m, n);
    let mc = cons.n_rows();
    f2.rows_mut(0, mc).copy_from(&cons.residual(x));
    j2.view_mut((0, 0), (mc, n)).copy_from(&cons.matrix);
    let mut row = mc;
    for (&i, &v) in problem.pins.indices.iter().zip(&problem.pins.values) {
        f2[row] = x[i] - v;
        j2[(row, i)] = 1.0;
        row += 1;
    }
    for &i in active {
        f2[row] = x[i];
        j2[(row, i)] = 1.0;
        row += 1;
    }
    (f2, j2)
}

/// Completes a state from `n − rank(C)` fixed components by solving `C z = b`
/// for the rest. Negative completed components are returned as computed;
/// callers decide how to treat them.
pub fn complete_state(cons: &ConservationSystem, fixed: &[(usize, f64)]) -> Result<StateVector> {
    let n = cons.matrix.ncols();
    let m = cons.n_rows();
    if fixed.len() + m != n {
        return Err(Error::InvalidProblem(format!(
            "completion needs {} fixed components, got {}",
            n - m,
            fixed.len()
        )));
    }
    let mut z = StateVector::zeros(n);
    let mut is_fixed = vec![false; n];
    for &(i, v) in fixed {
        if i >= n || is_fixed[i] {
            return Err(Error::InvalidProblem(format!("bad or repeated fixed index {i}")));
        }
        is_fixed[i] = true;
        z[i] = v;
    }
    let free: Vec<usize> = (0..n).filter(|&i| !is_fixed[i]).collect();
    let a = cons.matrix.select_columns(&free);
    let rhs = &cons.totals - &cons.matrix * &z.0;
    let lu = a.lu();
    let cond_ok = lu.u().diagonal().iter().all(|d| d.abs() > 1e-12);
    let sol = if cond_ok { lu.solve(&rhs) } else { None };
    let sol = sol.ok_or(Error::Singular { cond: f64::INFINITY })?;
    for (k, &i) in free.iter().enumerate() {
        z[i] = sol[k];
    }
    Ok(z)
}
