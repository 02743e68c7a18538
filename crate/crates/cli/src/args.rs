//! Command-line definitions and `NAME=…` assignment parsing.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Lower-case name as accepted on the command line.
pub fn value_name<T: ValueEnum>(v: &T) -> String {
    v.to_possible_value().map(|p| p.get_name().to_string()).unwrap_or_default()
}

#[derive(Debug, Parser)]
#[command(name = "simtrack", version, about = "Slow invariant manifold points and their continuation")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Mechanism file; the bundled hydrogen mechanism if omitted.
    #[arg(short = 'm', long, global = true)]
    pub mechanism: Option<PathBuf>,
    /// Directory for the CSV artifacts (created if missing).
    #[arg(short = 'o', long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// CSV whose first row replaces the mechanism's anchor composition.
    #[arg(long, global = true)]
    pub anchor: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Corrector::Ggn)]
    pub corrector: Corrector,
    #[arg(long, global = true, value_enum, default_value_t = PredictorArg::Euler)]
    pub predictor: PredictorArg,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Full)]
    pub mode: ModeArg,
    /// Linear-step radius in mol/kg.
    #[arg(long, global = true, default_value_t = 1.1)]
    pub eps_tol: f64,
    /// Initial step as a fraction of each segment.
    #[arg(long, global = true, default_value_t = 0.4)]
    pub h_init: f64,
    /// Desired corrector iterations per step.
    #[arg(long, global = true, default_value_t = 10)]
    pub k_desired: usize,
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol_abs: f64,
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol_rel: f64,
    /// Scale variables by the anchor magnitudes.
    #[arg(long, global = true)]
    pub scale: bool,
    /// Worker threads for row-parallel sweeps and landscapes.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Corrector {
    Ggn,
    Newton,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PredictorArg {
    Euler,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Full,
    Adaptive,
    Linear,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for one manifold point and write `point.csv`.
    Solve {
        /// `NAME=VALUE`, repeatable.
        #[arg(long = "pin", required = true)]
        pins: Vec<String>,
    },
    /// Continue over a 1-D or 2-D grid; writes `sweep.csv` and `summary.txt`.
    Sweep {
        /// `NAME=start:step:count`, `NAME=[v1,v2,…]` or `NAME=VALUE`; one or two.
        #[arg(long = "pin", required = true)]
        pins: Vec<String>,
    },
    /// Evaluate the objective on conservation-completed states; writes `landscape.csv`.
    Landscape {
        /// Components held fixed, `NAME=VALUE`.
        #[arg(long = "fix")]
        fixed: Vec<String>,
        /// One or two scanned components, grid syntax as for `sweep`.
        #[arg(long = "scan", required = true)]
        scans: Vec<String>,
        /// Also evaluate cells whose completion has negative components.
        #[arg(long)]
        evaluate_unphysical: bool,
    },
    /// Integrate the kinetics from a start state; writes `trajectory.csv`.
    Trajectory {
        /// CSV with species columns (e.g. a prior `point.csv`); the anchor if omitted.
        #[arg(long)]
        from: Option<PathBuf>,
        /// Row of `--from` to start at.
        #[arg(long, default_value_t = 0)]
        row: usize,
        /// Integration horizon in seconds.
        #[arg(long, default_value_t = 1e-2)]
        horizon: f64,
        /// Local error tolerance.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Relax a state to chemical equilibrium; writes `equilibrium.csv`.
    Equilibrium {
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        row: usize,
    },
}

/// Right-hand side of a `NAME=…` assignment.
#[derive(Clone, Debug, PartialEq)]
pub enum Values {
    Scalar(f64),
    Grid(Vec<f64>),
}

impl Values {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Values::Scalar(v) => vec![*v],
            Values::Grid(g) => g.clone(),
        }
    }
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("not a number: `{}`", s.trim()))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("not a finite number: `{}`", s.trim()))
    }
}

/// Parses `NAME=VALUE`, `NAME=start:step:count` or `NAME=[v1,v2,…]`.
pub fn parse_assignment(s: &str) -> Result<(String, Values), String> {
    let (name, rhs) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let name = name.trim();
    if name.is_empty() {
        return Err(format!("missing species name in `{s}`"));
    }
    let rhs = rhs.trim();
    let values = if let Some(list) = rhs.strip_prefix('[') {
        let list = list
            .strip_suffix(']')
            .ok_or_else(|| format!("unterminated list in `{s}`"))?;
        let v = list.split(',').map(number).collect::<Result<Vec<_>, _>>()?;
        Values::Grid(v)
    } else if rhs.contains(':') {
        let parts: Vec<&str> = rhs.split(':').collect();
        let [start, step, count] = parts[..] else {
            return Err(format!("expected start:step:count, got `{rhs}`"));
        };
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| format!("grid count must be a positive integer, got `{}`", count.trim()))?;
        if count == 0 {
            return Err("grid count must be positive".into());
        }
        let (start, step) = (number(start)?, number(step)?);
        Values::Grid(simtrack::continuation::GridSpec::range(start, step, count))
    } else {
        Values::Scalar(number(rhs)?)
    };
    Ok((name.to_string(), values))
}
