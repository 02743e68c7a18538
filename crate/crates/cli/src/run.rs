//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{debug, info, warn};
use simtrack::continuation::{sweep_grid, ContinuationConfig, GridSpec, Mode, PathPoint, Predictor};
use simtrack::io::{self, Table};
use simtrack::kinetics::BUNDLED_H2_NAME;
use simtrack::nlp::{landscape_scan, local_minima, objective, KktSolution, LandscapeSpec, Method, NlpProblem, ProgressVariableSpec, SolverOptions, UnphysicalPolicy};
use simtrack::odeint::{integrate, relax_to_equilibrium};
use simtrack::sensitivity::kkt_sensitivities;
use simtrack::{ConservationSystem, Error, Mechanism, StateVector};

use crate::args::{parse_assignment, value_name, Command, Corrector, Global, ModeArg, PredictorArg, Values};

/// Why a command stopped; maps onto the exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Usage or configuration problem (exit 2).
    Config(String),
    /// Solver or integrator failure (exit 1).
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Singular { .. }
            | Error::Restoration(_)
            | Error::SensitivityUnavailable(_)
            | Error::Integration { .. }
            | Error::Equilibrium(_)
            | Error::PathFailure { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn config_err(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

struct Setup {
    mech: Mechanism,
    anchor: StateVector,
    cons: ConservationSystem,
}

fn load_mechanism(path: Option<&Path>) -> Result<Mechanism, Failure> {
    match path {
        None => Ok(Mechanism::bundled_h2()),
        Some(p) if !p.exists() && p.file_name().is_some_and(|f| f == BUNDLED_H2_NAME) => {
            info!("{} not found on disk; using the bundled copy", p.display());
            Ok(Mechanism::bundled_h2())
        }
        Some(p) => Ok(Mechanism::from_file(p)?),
    }
}

fn read_state(mech: &Mechanism, path: &Path, row: usize) -> Result<StateVector, Failure> {
    let t = Table::read(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    t.state(mech, row).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn setup(g: &Global) -> Result<Setup, Failure> {
    let mech = load_mechanism(g.mechanism.as_deref())?;
    let anchor = match &g.anchor {
        Some(p) => read_state(&mech, p, 0)?,
        None => mech
            .anchor
            .clone()
            .ok_or_else(|| config_err("mechanism has no [state] anchor; pass --anchor"))?,
    };
    let cons = ConservationSystem::from_anchor(&mech, &anchor)?;
    Ok(Setup { mech, anchor, cons })
}

fn solver_options(g: &Global, anchor: &StateVector) -> Result<SolverOptions, Failure> {
    if !(g.tol_abs > 0.0 && g.tol_rel > 0.0) {
        return Err(config_err("tolerances must be positive"));
    }
    let opts = SolverOptions {
        tol_abs: g.tol_abs,
        tol_rel: g.tol_rel,
        ..Default::default()
    };
    Ok(if g.scale { opts.scaled_by(anchor) } else { opts })
}

fn method(g: &Global) -> Method {
    match g.corrector {
        Corrector::Ggn => Method::Ggn,
        Corrector::Newton => Method::Newton,
    }
}

fn continuation_config(g: &Global, anchor: &StateVector) -> Result<ContinuationConfig, Failure> {
    let config = ContinuationConfig {
        mode: match g.mode {
            ModeArg::Full => Mode::FullStep,
            ModeArg::Adaptive => Mode::Adaptive,
            ModeArg::Linear => Mode::LinearStep,
        },
        predictor: match g.predictor {
            PredictorArg::Euler => Predictor::Euler,
            PredictorArg::Constant => Predictor::Constant,
        },
        corrector: method(g),
        eps_tol: g.eps_tol,
        h_init: g.h_init,
        k_desired: g.k_desired,
        solver: solver_options(g, anchor)?,
        ..Default::default()
    };
    config.validate()?;
    Ok(config)
}

/// Parsed `NAME=…` list with species resolved and duplicates rejected.
fn assignments(mech: &Mechanism, raw: &[String], what: &str) -> Result<Vec<(usize, Values)>, Failure> {
    let mut out: Vec<(usize, Values)> = Vec::new();
    for s in raw {
        let (name, v) = parse_assignment(s).map_err(config_err)?;
        let i = mech.species_index(&name)?;
        if out.iter().any(|(j, _)| *j == i) {
            return Err(config_err(format!("duplicate {what} `{name}`")));
        }
        out.push((i, v));
    }
    Ok(out)
}

fn scalars(a: &[(usize, Values)], what: &str) -> Result<Vec<(usize, f64)>, Failure> {
    a.iter()
        .map(|(i, v)| match v {
            Values::Scalar(x) => Ok((*i, *x)),
            Values::Grid(_) => Err(config_err(format!("{what} takes scalar values"))),
        })
        .collect()
}

fn out_path(g: &Global, name: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(&g.out_dir).map_err(|e| config_err(format!("{}: {e}", g.out_dir.display())))?;
    Ok(g.out_dir.join(name))
}

fn write(t: &Table, path: &Path) -> Outcome {
    t.write(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn log_iterations(sol: &KktSolution) {
    for l in &sol.log {
        debug!(
            "iter {:3}  theta {:.3e}  f {:.6e}  |d| {:.3e}  t {:.3e}  active {:?}{}{}{}",
            l.iteration,
            l.theta,
            l.f,
            l.d_norm,
            l.step,
            l.active,
            if l.soc { "  soc" } else { "" },
            if l.restoration { "  restoration" } else { "" },
            if l.hessian_fallback { "  ggn-fallback" } else { "" },
        );
    }
}

pub fn run(g: &Global, cmd: &Command) -> Outcome {
    match cmd {
        Command::Solve { pins } => solve(g, pins),
        Command::Sweep { pins } => sweep(g, pins),
        Command::Landscape {
            fixed,
            scans,
            evaluate_unphysical,
        } => landscape(g, fixed, scans, *evaluate_unphysical),
        Command::Trajectory { from, row, horizon, tol } => trajectory(g, from.as_deref(), *row, *horizon, *tol),
        Command::Equilibrium { from, row } => equilibrium(g, from.as_deref(), *row),
    }
}

fn solve(g: &Global, raw: &[String]) -> Outcome {
    let s = setup(g)?;
    let pins = scalars(&assignments(&s.mech, raw, "pin")?, "solve --pin")?;
    let spec = ProgressVariableSpec::new(pins.iter().map(|p| p.0).collect(), pins.iter().map(|p| p.1).collect())?;
    let problem = NlpProblem::new(&s.mech, &s.cons, spec)?;
    let opts = solver_options(g, &s.anchor)?;
    let start = Instant::now();
    let sol = simtrack::nlp::solve(&problem, &s.anchor, &opts, method(g))?;
    let elapsed = start.elapsed();
    log_iterations(&sol);
    println!("status {}", sol.status);
    println!("iterations {}", sol.iterations);
    println!("phi {}", io::fmt_f64(sol.phi));
    println!("kkt_residual {:.3e}", sol.kkt_residual);
    println!("feasibility {:.3e}", sol.feasibility);
    println!("time_s {:.6}", elapsed.as_secs_f64());
    if !sol.converged() {
        return Err(Failure::Numerical(format!("solver stopped with status {}", sol.status)));
    }
    let sens = match kkt_sensitivities(&problem, &sol) {
        Ok(s) => Some(s),
        Err(e) => {
            warn!("{e}; tangents left empty");
            None
        }
    };
    let t = io::point_table(&s.mech, &s.cons, &problem.pins.indices, &sol, sens.as_ref());
    write(&t, &out_path(g, "point.csv")?)
}

fn sweep(g: &Global, raw: &[String]) -> Outcome {
    let s = setup(g)?;
    let a = assignments(&s.mech, raw, "pin")?;
    if a.is_empty() || a.len() > 2 {
        return Err(config_err(format!("sweep needs one or two pins, got {}", a.len())));
    }
    let idx: Vec<usize> = a.iter().map(|p| p.0).collect();
    let grid = GridSpec::new(a.iter().map(|p| p.1.to_vec()).collect())?;
    let config = continuation_config(g, &s.anchor)?;
    // the anchor point pins the swept species at their anchor values
    let spec = ProgressVariableSpec::new(idx.clone(), idx.iter().map(|&i| s.anchor[i]).collect())?;
    let problem = NlpProblem::new(&s.mech, &s.cons, spec)?;
    let anchor = PathPoint::solve(&problem, &s.anchor, &config)?;
    log_iterations(&anchor.solution);
    if !anchor.solution.converged() {
        return Err(Failure::Numerical(format!("anchor solve stopped with status {}", anchor.solution.status)));
    }
    let res = sweep_grid(&problem, &anchor, &grid, &config, g.jobs)?;
    let summary = io::sweep_summary(
        &res,
        &value_name(&g.predictor),
        &value_name(&g.corrector),
        &value_name(&g.mode),
    );
    print!("{summary}");
    write(&io::sweep_table(&s.mech, &res), &out_path(g, "sweep.csv")?)?;
    let path = out_path(g, "summary.txt")?;
    fs::write(&path, summary).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn landscape(g: &Global, fixed: &[String], scans: &[String], evaluate: bool) -> Outcome {
    let s = setup(g)?;
    let mut all: Vec<String> = fixed.to_vec();
    all.extend(scans.iter().cloned());
    // resolves names and rejects a species that is both fixed and scanned
    assignments(&s.mech, &all, "component")?;
    let fixed = scalars(&assignments(&s.mech, fixed, "component")?, "--fix")?;
    let axes: Vec<(usize, Vec<f64>)> = assignments(&s.mech, scans, "component")?
        .into_iter()
        .map(|(i, v)| (i, v.to_vec()))
        .collect();
    let spec = LandscapeSpec {
        fixed,
        axes: axes.clone(),
        policy: if evaluate { UnphysicalPolicy::Evaluate } else { UnphysicalPolicy::Skip },
    };
    let points = landscape_scan(&s.mech, &s.cons, &spec, g.jobs)?;
    let valid = points.iter().filter(|p| p.physical).count();
    println!("cells {}", points.len());
    println!("valid {valid}");
    if axes.len() == 1 {
        for k in local_minima(&points) {
            println!("local_minimum {} phi {}", io::fmt_f64(points[k].coords[0]), io::fmt_opt(points[k].phi));
        }
    }
    let names: Vec<usize> = axes.iter().map(|a| a.0).collect();
    write(&io::landscape_table(&s.mech, &names, &points), &out_path(g, "landscape.csv")?)
}

fn start_state(g: &Global, mech: &Mechanism, from: Option<&Path>, row: usize) -> Result<StateVector, Failure> {
    match from {
        Some(p) => read_state(mech, p, row),
        None => Ok(setup(g)?.anchor),
    }
}

fn trajectory(g: &Global, from: Option<&Path>, row: usize, horizon: f64, tol: f64) -> Outcome {
    let mech = load_mechanism(g.mechanism.as_deref())?;
    let z0 = start_state(g, &mech, from, row)?;
    let traj = integrate(&mech, &z0, (0.0, horizon), tol)?;
    println!("steps {}", traj.steps);
    println!("rejected {}", traj.rejected);
    println!("final_phi {}", io::fmt_f64(objective::phi(&mech, traj.last())));
    write(&io::trajectory_table(&mech, &traj), &out_path(g, "trajectory.csv")?)
}

fn equilibrium(g: &Global, from: Option<&Path>, row: usize) -> Outcome {
    let mech = load_mechanism(g.mechanism.as_deref())?;
    let z0 = start_state(g, &mech, from, row)?;
    let cons = ConservationSystem::from_anchor(&mech, &z0)?;
    let z = relax_to_equilibrium(&mech, &cons, &z0)?;
    for (name, v) in mech.species.iter().zip(z.iter()) {
        println!("{name} {}", io::fmt_f64(*v));
    }
    let t = io::state_table(&mech, &z, objective::phi(&mech, &z));
    write(&t, &out_path(g, "equilibrium.csv")?)
}
