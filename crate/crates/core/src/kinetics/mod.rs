//! Reaction mechanism, mass-action source term and its derivatives.
//!
//! The state is the vector of specific moles `z` (mol/kg). Rates are
//! evaluated in (cm, mol, s) units at fixed temperature and pressure:
//! concentrations follow the ideal-gas law `c_i = z_i p / (R T Σ z)` and the
//! production rates are mapped back with `dz/dt = ω R T Σz / p`.

mod parse;
pub(crate) mod rates;
pub mod thermo;

use std::ops::{Deref, DerefMut};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
pub use thermo::{Nasa7, GAS_CONSTANT, STANDARD_PRESSURE};

/// The bundled simplified hydrogen mechanism.
pub const BUNDLED_H2: &str = include_str!("../../data/h2_ren2006.mech");
/// File name of the bundled mechanism.
pub const BUNDLED_H2_NAME: &str = "h2_ren2006.mech";

/// Components in `[-NEGATIVE_SLACK, 0)` are treated as zero by rate evaluation.
pub const NEGATIVE_SLACK: f64 = 1e-12;

/// Specific moles (mol/kg) per species, in mechanism order.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(pub DVector<f64>);

impl StateVector {
    pub fn from_slice(z: &[f64]) -> Self {
        Self(DVector::from_column_slice(z))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    /// Total specific moles.
    pub fn total(&self) -> f64 {
        self.0.sum()
    }

    pub fn is_nonnegative(&self, slack: f64) -> bool {
        self.0.iter().all(|&v| v >= -slack)
    }
}

impl Deref for StateVector {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut DVector<f64> {
        &mut self.0
    }
}

impl From<DVector<f64>> for StateVector {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}

/// A reversible elementary reaction.
#[derive(Clone, Debug, PartialEq)]
pub struct Reaction {
    pub equation: String,
    /// `(species index, stoichiometric coefficient)` on the left-hand side.
    pub reactants: Vec<(usize, u32)>,
    /// `(species index, stoichiometric coefficient)` on the right-hand side.
    pub products: Vec<(usize, u32)>,
    /// Pre-exponential factor in (cm, mol, s) units.
    pub a: f64,
    /// Temperature exponent.
    pub b: f64,
    /// Activation energy, kJ/mol.
    pub ea: f64,
    /// Collision efficiency per species when a third body participates.
    pub third_body: Option<Vec<f64>>,
}

impl Reaction {
    /// Net stoichiometric coefficients (products minus reactants).
    pub fn net_stoich(&self, n_species: usize) -> Vec<i64> {
        let mut nu = vec![0i64; n_species];
        for &(k, v) in &self.reactants {
            nu[k] -= v as i64;
        }
        for &(k, v) in &self.products {
            nu[k] += v as i64;
        }
        nu
    }

    /// Change in gas moles across the reaction.
    pub fn delta_moles(&self) -> i64 {
        let p: i64 = self.products.iter().map(|&(_, v)| v as i64).sum();
        let r: i64 = self.reactants.iter().map(|&(_, v)| v as i64).sum();
        p - r
    }

    /// The same reaction written in the opposite direction.
    pub fn reversed(&self) -> Reaction {
        let mut r = self.clone();
        std::mem::swap(&mut r.reactants, &mut r.products);
        r.equation = match self.equation.split_once("<=>") {
            Some((lhs, rhs)) => format!("{} <=> {}", rhs.trim(), lhs.trim()),
            None => self.equation.clone(),
        };
        r
    }

    /// Arrhenius forward rate constant at temperature `t`.
    pub fn forward_rate_constant(&self, t: f64) -> f64 {
        self.a * t.powf(self.b) * (-self.ea * 1e3 / (GAS_CONSTANT * t)).exp()
    }
}

/// A reaction mechanism at fixed temperature and pressure.
#[derive(Clone, Debug)]
pub struct Mechanism {
    pub elements: Vec<String>,
    /// kg/mol per element.
    pub atomic_masses: Vec<f64>,
    pub species: Vec<String>,
    /// kg/mol per species.
    pub molar_masses: Vec<f64>,
    /// `element_matrix[e][k]`: atoms of element `e` in species `k`.
    pub element_matrix: Vec<Vec<u32>>,
    pub reactions: Vec<Reaction>,
    pub thermo: Vec<Option<Nasa7>>,
    /// K.
    pub temperature: f64,
    /// Pa.
    pub pressure: f64,
    /// Starting composition declared in the mechanism file, if any.
    pub anchor: Option<StateVector>,
    pub(crate) kf: Vec<f64>,
    pub(crate) kr: Vec<f64>,
}

impl Mechanism {
    /// Validates the parts and precomputes the rate constants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        elements: Vec<String>,
        atomic_masses: Vec<f64>,
        species: Vec<String>,
        element_matrix: Vec<Vec<u32>>,
        molar_masses: Option<Vec<f64>>,
        reactions: Vec<Reaction>,
        thermo: Vec<Option<Nasa7>>,
        temperature: f64,
        pressure: f64,
        anchor: Option<StateVector>,
    ) -> Result<Self> {
        let n = species.len();
        if n == 0 {
            return Err(Error::InvalidMechanism("no species".into()));
        }
        for (i, s) in species.iter().enumerate() {
            if species[..i].contains(s) {
                return Err(Error::InvalidMechanism(format!("duplicate species `{s}`")));
            }
        }
        if atomic_masses.len() != elements.len() || element_matrix.len() != elements.len() {
            return Err(Error::InvalidMechanism("element table size mismatch".into()));
        }
        if element_matrix.iter().any(|row| row.len() != n) || thermo.len() != n {
            return Err(Error::InvalidMechanism("species table size mismatch".into()));
        }
        if !(temperature > 0.0 && pressure > 0.0) {
            return Err(Error::InvalidMechanism(format!(
                "temperature and pressure must be positive (T = {temperature}, p = {pressure})"
            )));
        }
        let molar_masses = match molar_masses {
            Some(m) if m.len() == n => m,
            Some(_) => return Err(Error::InvalidMechanism("molar mass count mismatch".into())),
            None => (0..n)
                .map(|k| {
                    element_matrix
                        .iter()
                        .zip(&atomic_masses)
                        .map(|(row, &am)| row[k] as f64 * am)
                        .sum()
                })
                .collect(),
        };
        if let Some(a) = &anchor {
            if a.len() != n {
                return Err(Error::InvalidMechanism("anchor length mismatch".into()));
            }
        }

        let mut kf = Vec::with_capacity(reactions.len());
        let mut kr = Vec::with_capacity(reactions.len());
        for (idx, rx) in reactions.iter().enumerate() {
            if !(rx.a > 0.0) {
                return Err(Error::InvalidMechanism(format!(
                    "reaction {} ({}): pre-exponential factor must be positive",
                    idx + 1,
                    rx.equation
                )));
            }
            if rx
                .reactants
                .iter()
                .chain(&rx.products)
                .any(|&(k, _)| k >= n)
            {
                return Err(Error::InvalidMechanism(format!(
                    "reaction {} references an unknown species",
                    idx + 1
                )));
            }
            if let Some(eff) = &rx.third_body {
                if eff.len() != n || eff.iter().any(|&a| !(a >= 0.0)) {
                    return Err(Error::InvalidMechanism(format!(
                        "reaction {}: invalid third-body efficiencies",
                        idx + 1
                    )));
                }
            }
            let nu = rx.net_stoich(n);
            for (e, row) in element_matrix.iter().enumerate() {
                let bal: i64 = nu.iter().zip(row).map(|(&v, &c)| v * c as i64).sum();
                if bal != 0 {
                    return Err(Error::Unbalanced {
                        index: idx + 1,
                        equation: rx.equation.clone(),
                        element: elements[e].clone(),
                    });
                }
            }
            let k = rx.forward_rate_constant(temperature);
            let kc = equilibrium_constant_of(rx, &species, &thermo, temperature)?;
            kf.push(k);
            kr.push(k / kc);
        }

        Ok(Self {
            elements,
            atomic_masses,
            species,
            molar_masses,
            element_matrix,
            reactions,
            thermo,
            temperature,
            pressure,
            anchor,
            kf,
            kr,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        parse::parse(&text, path)
    }

    /// Parses mechanism text; `origin` only labels error messages.
    pub fn parse_str(text: &str, origin: impl AsRef<Path>) -> Result<Self> {
        parse::parse(text, origin.as_ref())
    }

    /// The bundled hydrogen mechanism.
    pub fn bundled_h2() -> Self {
        parse::parse(BUNDLED_H2, Path::new(BUNDLED_H2_NAME)).expect("bundled mechanism is valid")
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn species_index(&self, name: &str) -> Result<usize> {
        self.species
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::UnknownSpecies(name.to_string()))
    }

    /// `R T / p · 1e6`: converts mol/cm³ rates to specific-mole rates per unit total moles.
    pub(crate) fn volume_factor(&self) -> f64 {
        GAS_CONSTANT * self.temperature / self.pressure * 1e6
    }

    /// Molar concentrations in mol/cm³.
    pub fn concentrations(&self, z: &StateVector) -> Result<DVector<f64>> {
        let total = z.total();
        if !(total > 0.0) {
            return Err(Error::NonPositiveTotal(total));
        }
        let scale = 1.0 / (self.volume_factor() * total);
        Ok(z.map(|v| v * scale))
    }

    /// Right-hand side `S(z)` of the kinetic ODE, mol/(kg s).
    pub fn source_term(&self, z: &StateVector) -> DVector<f64> {
        let (s, _) = rates::evaluate::<f64>(self, z.as_slice(), false);
        DVector::from_vec(s)
    }

    /// Analytic Jacobian `∂S/∂z`, 1/s.
    pub fn jacobian(&self, z: &StateVector) -> DMatrix<f64> {
        let (_, j) = rates::evaluate::<f64>(self, z.as_slice(), true);
        let n = self.n_species();
        DMatrix::from_row_slice(n, n, &j.expect("jacobian requested"))
    }

    /// `S(z)` and `J_S(z)` from one evaluation.
    pub fn source_and_jacobian(&self, z: &StateVector) -> (DVector<f64>, DMatrix<f64>) {
        let (s, j) = rates::evaluate::<f64>(self, z.as_slice(), true);
        let n = self.n_species();
        (
            DVector::from_vec(s),
            DMatrix::from_row_slice(n, n, &j.expect("jacobian requested")),
        )
    }

    /// Directional derivative of the Jacobian, `d/dε J_S(z + ε v)` at `ε = 0`.
    pub fn jacobian_directional(&self, z: &StateVector, v: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n_species();
        let m = rates::jacobian_directional(self, z.as_slice(), v.as_slice());
        DMatrix::from_row_slice(n, n, &m)
    }

    /// Forward and reverse rates of progress (including the third-body
    /// factor), mol/(cm³ s).
    pub fn rates_of_progress(&self, z: &StateVector) -> Vec<(f64, f64)> {
        rates::rates_of_progress(self, z.as_slice())
    }

    /// Equilibrium constant in concentration units ((mol/cm³)^Δν).
    pub fn equilibrium_constant(&self, index: usize) -> Result<f64> {
        let rx = self
            .reactions
            .get(index)
            .ok_or_else(|| Error::InvalidMechanism(format!("no reaction {index}")))?;
        equilibrium_constant_of(rx, &self.species, &self.thermo, self.temperature)
    }

    /// Mixture mass per unit of the state basis, `Σ z_i M_i` (kg/kg).
    pub fn mass(&self, z: &StateVector) -> f64 {
        z.iter().zip(&self.molar_masses).map(|(a, b)| a * b).sum()
    }
}

/// `K_c` of `rx` from NASA-7 Gibbs energies at temperature `t`.
pub fn equilibrium_constant_of(
    rx: &Reaction,
    species: &[String],
    thermo: &[Option<Nasa7>],
    t: f64,
) -> Result<f64> {
    let mut dg = 0.0;
    let mut terms = rx
        .reactants
        .iter()
        .map(|&(k, v)| (k, -(v as f64)))
        .chain(rx.products.iter().map(|&(k, v)| (k, v as f64)));
    terms.try_for_each(|(k, nu)| {
        let th = thermo[k]
            .as_ref()
            .ok_or_else(|| Error::MissingThermo(species[k].clone()))?;
        dg += nu * th.g_rt(t);
        Ok::<(), Error>(())
    })?;
    let kp = (-dg).exp();
    // p°/(RT) in mol/cm³
    let c_ref = STANDARD_PRESSURE / (GAS_CONSTANT * t) * 1e-6;
    Ok(kp * c_ref.powi(rx.delta_moles() as i32))
}

/// Element-conservation relations `C z = b` with totals taken from an anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct ConservationSystem {
    /// Rows are linearly independent element combinations.
    pub matrix: DMatrix<f64>,
    pub totals: DVector<f64>,
    /// Element name per row.
    pub labels: Vec<String>,
    pub anchor: StateVector,
}

impl ConservationSystem {
    /// One row per element present in the mechanism; rows that are zero or
    /// linearly dependent on earlier rows are dropped.
    pub fn from_anchor(mech: &Mechanism, anchor: &StateVector) -> Result<Self> {
        let n = mech.n_species();
        if anchor.len() != n {
            return Err(Error::InvalidProblem(format!(
                "anchor has {} entries, mechanism has {n} species",
                anchor.len()
            )));
        }
        if !anchor.is_nonnegative(0.0) {
            return Err(Error::InvalidProblem("anchor must be nonnegative".into()));
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels = Vec::new();
        for (e, row) in mech.element_matrix.iter().enumerate() {
            if row.iter().all(|&c| c == 0) {
                continue;
            }
            let cand: Vec<f64> = row.iter().map(|&c| c as f64).collect();
            let mut trial = rows.clone();
            trial.push(cand.clone());
            let m = DMatrix::from_fn(trial.len(), n, |i, j| trial[i][j]);
            if m.rank(1e-10) == trial.len() {
                rows.push(cand);
                labels.push(mech.elements[e].clone());
            }
        }
        let matrix = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        let totals = &matrix * &anchor.0;
        Ok(Self {
            matrix,
            totals,
            labels,
            anchor: anchor.clone(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// `C z − b`.
    pub fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.matrix * z - &self.totals
    }
}
