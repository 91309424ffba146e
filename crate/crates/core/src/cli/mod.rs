//! Configuration, built-in problems, runs, sweeps and verification reports.

mod args;
mod config;
mod expr;
mod output;
mod problems;

use std::path::PathBuf;

use thiserror::Error;

use crate::grid::GridError;
use crate::oracle::OracleError;
use crate::solver::SolverError;

pub use args::{Cli, Command, ConfigArgs};
pub use config::{
    parse_config, parse_pairs, BuiltinProblem, ConfigError, DeltaSpec, InitialGuess,
    ProblemSource, RunConfig, Sweep, SweepAxis, KEYS,
};
pub use expr::{eval_in_h, CompiledExpr};
pub use output::{
    grad_check, oracle_compare, run_case, run_sweep, CaseReport, OracleReport, OracleRow,
    SweepRow, GRAD_CHECK_FORCE,
};
pub use problems::{builtin_problem, initial_iterate, problem_data, sample_expression};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("expression for `{key}`: {message}")]
    Expression { key: String, message: String },
    #[error("problem `{problem}` is {expected}D but the grid is {got}D")]
    DimensionMismatch {
        problem: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("`{0}` needs a sweep (set sweep_axis and sweep_values)")]
    MissingSweep(&'static str),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}
