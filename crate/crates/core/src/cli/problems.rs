use std::f64::consts::PI;

use super::config::{BuiltinProblem, ProblemSource, RunConfig};
use super::expr::CompiledExpr;
use super::CliError;
use crate::grid::{Field, GridSpec};
use crate::solver::{Iterate, ProblemData};

/// Built-in data, sampled at interior nodes.
///
/// * `test1d`: `f = 100 x cos(3πx)`, `z = cos(4πx²)`
/// * `test2d`: `f = x³ sin(2πx²) y cos(2πy²)`, `z = sin(2πx²) cos(2πy²)`
pub fn builtin_problem(id: BuiltinProblem, grid: GridSpec) -> Result<ProblemData, CliError> {
    if id.dim() != grid.dim() {
        return Err(CliError::DimensionMismatch {
            problem: id.id(),
            expected: id.dim(),
            got: grid.dim(),
        });
    }
    let (f, z) = match id {
        BuiltinProblem::Test1d => (
            Field::sample(grid, |x, _| 100.0 * x * (3.0 * PI * x).cos())?,
            Field::sample(grid, |x, _| (4.0 * PI * x * x).cos())?,
        ),
        BuiltinProblem::Test2d => (
            Field::sample(grid, |x, y| {
                x.powi(3) * (2.0 * PI * x * x).sin() * y * (2.0 * PI * y * y).cos()
            })?,
            Field::sample(grid, |x, y| (2.0 * PI * x * x).sin() * (2.0 * PI * y * y).cos())?,
        ),
    };
    Ok(ProblemData::new(f, z)?)
}

/// Sample an expression on the grid; in 1D `y` is bound to 0.
pub fn sample_expression(key: &str, text: &str, grid: GridSpec) -> Result<Field, CliError> {
    let expr = CompiledExpr::parse(text).map_err(|message| CliError::Expression {
        key: key.to_string(),
        message,
    })?;
    Field::sample(grid, |x, y| expr.eval(x, y)).map_err(|e| CliError::Expression {
        key: key.to_string(),
        message: e.to_string(),
    })
}

pub fn problem_data(cfg: &RunConfig) -> Result<ProblemData, CliError> {
    let grid = cfg.grid();
    match &cfg.problem {
        ProblemSource::Builtin(id) => builtin_problem(*id, grid),
        ProblemSource::Expressions { f, z } => Ok(ProblemData::new(
            sample_expression("f", f, grid)?,
            sample_expression("z", z, grid)?,
        )?),
    }
}

pub fn initial_iterate(cfg: &RunConfig) -> Result<Iterate, CliError> {
    let grid = cfg.grid();
    let mut init = Iterate::zeros(grid);
    if let Some(text) = &cfg.init.y {
        init.y = sample_expression("y0", text, grid)?;
    }
    if let Some(text) = &cfg.init.phi {
        init.phi = sample_expression("phi0", text, grid)?;
    }
    if let Some(text) = &cfg.init.psi {
        init.psi = sample_expression("psi0", text, grid)?;
    }
    Ok(init)
}
