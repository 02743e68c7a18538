//! CSV artifacts. Floats are written with 17 significant digits, which
//! round-trips every finite `f64` exactly; undefined values are empty fields.

use std::path::Path;

use crate::continuation::SweepResult;
use crate::error::{Error, Result};
use crate::kinetics::{ConservationSystem, Mechanism, StateVector};
use crate::nlp::{KktSolution, LandscapePoint};
use crate::odeint::Trajectory;
use crate::sensitivity::SensitivityMatrix;

pub const STATE_UNIT: &str = "mol/kg";

/// `{:.16e}`: one digit before the point and sixteen after.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Parses a field written by [`fmt_opt`]; empty means undefined.
pub fn parse_opt(s: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::InvalidProblem(format!("not a number: `{s}`")))
}

/// Column header for a species state value.
pub fn species_column(name: &str) -> String {
    format!("{name} [{STATE_UNIT}]")
}

/// Column header for `∂z_species/∂r_pin`.
pub fn tangent_column(species: &str, pin: &str) -> String {
    format!("d{species}/d{pin}")
}

/// A header plus string rows, as read from or written to disk.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write_to<W: std::io::Write>(&self, mut w: csv::Writer<W>) -> Result<W> {
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    fn read_from<R: std::io::Read>(mut r: csv::Reader<R>) -> Result<Self> {
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { header, rows })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(csv::Writer::from_path(path)?)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let bytes = self
            .write_to(csv::Writer::from_writer(Vec::new()))
            .expect("writing to memory cannot fail");
        String::from_utf8(bytes).expect("fields are UTF-8")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(csv::Reader::from_path(path)?)
    }

    pub fn read_str(text: &str) -> Result<Self> {
        Self::read_from(csv::Reader::from_reader(text.as_bytes()))
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric column; undefined fields are `None`.
    pub fn values(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let c = self
            .column(name)
            .ok_or_else(|| Error::InvalidProblem(format!("missing column `{name}`")))?;
        self.rows.iter().map(|r| parse_opt(&r[c])).collect()
    }

    /// The species columns of row `row` as a state.
    pub fn state(&self, mech: &Mechanism, row: usize) -> Result<StateVector> {
        let r = self
            .rows
            .get(row)
            .ok_or_else(|| Error::InvalidProblem(format!("table has no row {row}")))?;
        let mut z = StateVector::zeros(mech.n_species());
        for (k, s) in mech.species.iter().enumerate() {
            let name = species_column(s);
            let c = self
                .column(&name)
                .ok_or_else(|| Error::InvalidProblem(format!("missing column `{name}`")))?;
            z[k] = parse_opt(&r[c])?.ok_or_else(|| Error::InvalidProblem(format!("undefined `{name}` in row {row}")))?;
        }
        Ok(z)
    }
}

/// One row: status, iterations, state, `Φ`, conservation and pin
/// multipliers, bound multipliers (zero when inactive) and tangents.
pub fn point_table(
    mech: &Mechanism,
    cons: &ConservationSystem,
    pins: &[usize],
    sol: &KktSolution,
    sens: Option<&SensitivityMatrix>,
) -> Table {
    let mut header = vec!["status".to_string(), "iterations".to_string()];
    header.extend(mech.species.iter().map(|s| species_column(s)));
    header.push("phi".into());
    header.extend(cons.labels.iter().map(|l| format!("lambda_{l}")));
    header.extend(pins.iter().map(|&p| format!("lambda_pin_{}", mech.species[p])));
    header.extend(mech.species.iter().map(|s| format!("mu_{s}")));
    for &p in pins {
        header.extend(mech.species.iter().map(|s| tangent_column(s, &mech.species[p])));
    }

    let mut row = vec![sol.status.as_str().to_string(), sol.iterations.to_string()];
    row.extend(sol.x.iter().map(|&v| fmt_f64(v)));
    row.push(fmt_f64(sol.phi));
    let mc = cons.n_rows() + pins.len();
    row.extend((0..mc).map(|k| fmt_opt(sol.lambda.get(k).copied())));
    row.extend((0..mech.n_species()).map(|i| {
        let mu = sol.active.active.iter().position(|&a| a == i).map_or(0.0, |k| sol.active.mu[k]);
        fmt_f64(mu)
    }));
    for k in 0..pins.len() {
        row.extend((0..mech.n_species()).map(|i| fmt_opt(sens.map(|s| s.dx_dr[(i, k)]))));
    }
    let mut t = Table::new(header);
    t.push(row);
    t
}

/// Grid indices, parameter values, state, `Φ`, status, iterations and the
/// `n × n_r` tangent matrix column-major; one row per grid point.
pub fn sweep_table(mech: &Mechanism, res: &SweepResult) -> Table {
    let dims = res.grid.axes.len();
    let pin_names: Vec<&str> = res.pins.iter().map(|&p| mech.species[p].as_str()).collect();
    let mut header: Vec<String> = ["i", "j"][..dims].iter().map(|s| s.to_string()).collect();
    header.extend(pin_names.iter().map(|p| format!("r_{p}")));
    header.extend(mech.species.iter().map(|s| species_column(s)));
    header.extend(["phi", "status", "iterations"].map(String::from));
    for p in &pin_names {
        header.extend(mech.species.iter().map(|s| tangent_column(s, p)));
    }

    let n = mech.n_species();
    let mut t = Table::new(header);
    for pt in &res.points {
        let mut row: Vec<String> = pt.index.iter().map(usize::to_string).collect();
        row.extend(pt.r.iter().map(|&v| fmt_f64(v)));
        row.extend((0..n).map(|i| fmt_opt(pt.z.as_ref().map(|z| z[i]))));
        row.push(fmt_opt(pt.phi));
        row.push(pt.outcome.as_str().into());
        row.push(pt.iterations.to_string());
        for k in 0..dims {
            row.extend((0..n).map(|i| fmt_opt(pt.tangents.as_ref().map(|d| d[(i, k)]))));
        }
        t.push(row);
    }
    t
}

/// Run totals; only the `*_time_s` lines vary between identical runs.
pub fn sweep_summary(res: &SweepResult, predictor: &str, corrector: &str, mode: &str) -> String {
    format!(
        "points {}\nattempted {}\nconverged {}\nfailures {}\ntotal_iterations {}\nanchor_iterations {}\n\
         failed_iterations {}\npredictor {predictor}\ncorrector {corrector}\nmode {mode}\n\
         wall_time_s {:.6}\npredictor_time_s {:.6}\ncorrector_time_s {:.6}\n",
        res.points.len(),
        res.attempted(),
        res.converged(),
        res.failures(),
        res.total_iterations(),
        res.anchor_iterations,
        res.failed_iterations(),
        res.wall_time.as_secs_f64(),
        res.predictor_time.as_secs_f64(),
        res.corrector_time.as_secs_f64(),
    )
}

/// Scanned coordinates, `Φ` (empty when not evaluated) and a validity flag
/// (`1` for a nonnegative completion).
pub fn landscape_table(mech: &Mechanism, axes: &[usize], points: &[LandscapePoint]) -> Table {
    let mut header: Vec<String> = axes.iter().map(|&a| species_column(&mech.species[a])).collect();
    header.extend(["phi", "valid"].map(String::from));
    let mut t = Table::new(header);
    for p in points {
        let mut row: Vec<String> = p.coords.iter().map(|&v| fmt_f64(v)).collect();
        row.push(fmt_opt(p.phi));
        row.push(u8::from(p.physical).to_string());
        t.push(row);
    }
    t
}

/// Time plus one column per species.
pub fn trajectory_table(mech: &Mechanism, traj: &Trajectory) -> Table {
    let mut header = vec!["t [s]".to_string()];
    header.extend(mech.species.iter().map(|s| species_column(s)));
    let mut t = Table::new(header);
    for (time, z) in traj.times.iter().zip(&traj.states) {
        let mut row = vec![fmt_f64(*time)];
        row.extend(z.iter().map(|&v| fmt_f64(v)));
        t.push(row);
    }
    t
}

/// A single state with its `Φ`.
pub fn state_table(mech: &Mechanism, z: &StateVector, phi: f64) -> Table {
    let mut header: Vec<String> = mech.species.iter().map(|s| species_column(s)).collect();
    header.push("phi".into());
    let mut row: Vec<String> = z.iter().map(|&v| fmt_f64(v)).collect();
    row.push(fmt_f64(phi));
    let mut t = Table::new(header);
    t.push(row);
    t
}
