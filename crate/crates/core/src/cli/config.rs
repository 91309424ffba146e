//! Flat `key = value` run configuration.
//!
//! Values from a file are read first; flag overrides are applied on top.
//! Defaults depend on the dimension: 1D uses `N = 200, δ = h², ω = 0.75`,
//! 2D uses `N = 40, δ = h⁴, ω = 0.5`; `ν = 1`, `ε = 1e-8` and
//! `max_iter = 10000` in both.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use super::expr::{eval_in_h, CompiledExpr};
use crate::grid::{GridError, GridSpec};
use crate::linsolve;
use crate::solver::SolverConfig;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid value for `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

/// Every recognized key, in the order they are documented.
pub const KEYS: &[&str] = &[
    "dim",
    "n",
    "delta",
    "nu",
    "omega",
    "omega_y",
    "omega_phi",
    "omega_psi",
    "eps",
    "max_iter",
    "inner_newton",
    "lin_tol",
    "lin_max_iter",
    "problem",
    "f",
    "z",
    "y0",
    "phi0",
    "psi0",
    "output",
    "contact_tol",
    "sweep_axis",
    "sweep_values",
    "seed",
    "oracle_deltas",
    "oracle_force",
    "grad_step",
    "grad_samples",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinProblem {
    Test1d,
    Test2d,
}

impl BuiltinProblem {
    pub fn dim(&self) -> usize {
        match self {
            BuiltinProblem::Test1d => 1,
            BuiltinProblem::Test2d => 2,
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            BuiltinProblem::Test1d => "test1d",
            BuiltinProblem::Test2d => "test2d",
        }
    }

    pub fn parse(id: &str) -> Option<Self> {
        match id {
            "test1d" => Some(BuiltinProblem::Test1d),
            "test2d" => Some(BuiltinProblem::Test2d),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    Builtin(BuiltinProblem),
    Expressions { f: String, z: String },
}

/// Penalty parameter, either fixed or an expression in the mesh size `h`.
#[derive(Debug, Clone, PartialEq)]
pub enum DeltaSpec {
    Fixed(f64),
    InH(String),
}

impl DeltaSpec {
    pub fn value(&self, h: f64) -> Result<f64, ConfigError> {
        let v = match self {
            DeltaSpec::Fixed(v) => *v,
            DeltaSpec::InH(text) => eval_in_h(text, h).map_err(|e| ConfigError::new("delta", e))?,
        };
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(ConfigError::new("delta", format!("must be > 0, got {v}")))
        }
    }
}

impl fmt::Display for DeltaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaSpec::Fixed(v) => write!(f, "{v}"),
            DeltaSpec::InH(text) => f.write_str(text),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Omega,
    N,
    Nu,
    Delta,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Omega => "omega",
            SweepAxis::N => "n",
            SweepAxis::Nu => "nu",
            SweepAxis::Delta => "delta",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// Optional initial guesses as expressions; unset fields start at zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InitialGuess {
    pub y: Option<String>,
    pub phi: Option<String>,
    pub psi: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub n: usize,
    pub delta: DeltaSpec,
    pub nu: f64,
    pub omega_y: f64,
    pub omega_phi: f64,
    pub omega_psi: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub inner_newton: usize,
    pub lin_tol: f64,
    pub lin_max_iter: Option<usize>,
    pub problem: ProblemSource,
    pub init: InitialGuess,
    pub output_dir: PathBuf,
    /// `None` means `√δ`.
    pub contact_tol: Option<f64>,
    pub sweep: Option<Sweep>,
    pub seed: u64,
    pub oracle_deltas: Vec<f64>,
    pub oracle_force: f64,
    pub grad_step: f64,
    pub grad_samples: usize,
}

impl RunConfig {
    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.dim, self.n).expect("validated grid")
    }

    pub fn delta_value(&self) -> f64 {
        self.delta.value(self.grid().h()).expect("validated delta")
    }

    pub fn contact_tolerance(&self) -> f64 {
        self.contact_tol.unwrap_or_else(|| self.delta_value().sqrt())
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            delta: self.delta_value(),
            nu: self.nu,
            omega_y: self.omega_y,
            omega_phi: self.omega_phi,
            omega_psi: self.omega_psi,
            eps: self.eps,
            max_iter: self.max_iter,
            inner_newton: self.inner_newton,
            lin_tol: self.lin_tol,
            lin_max_iter: self.lin_max_iter,
        }
    }

    /// Copy with one swept parameter replaced; the sweep itself is dropped.
    pub fn with_axis_value(&self, axis: SweepAxis, value: f64) -> RunConfig {
        let mut cfg = self.clone();
        cfg.sweep = None;
        match axis {
            SweepAxis::Omega => {
                cfg.omega_y = value;
                cfg.omega_phi = value;
                cfg.omega_psi = value;
            }
            SweepAxis::N => cfg.n = value as usize,
            SweepAxis::Nu => cfg.nu = value,
            SweepAxis::Delta => cfg.delta = DeltaSpec::Fixed(value),
        }
        cfg
    }
}

/// Parse the `key = value` lines of a config file. `#` starts a comment;
/// a later line for the same key wins.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::new(
                line,
                format!("line {}: expected `key = value`", lineno + 1),
            ));
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Build a validated configuration from an optional config file body and
/// flag overrides (applied after the file).
pub fn parse_config(
    file: Option<&str>,
    overrides: &[(String, String)],
) -> Result<RunConfig, ConfigError> {
    let mut map = BTreeMap::new();
    let file_pairs = match file {
        Some(text) => parse_pairs(text)?,
        None => Vec::new(),
    };
    for (key, value) in file_pairs.iter().chain(overrides) {
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::new(key, "unknown key"));
        }
        map.insert(key.clone(), value.clone());
    }
    build(&map)
}

fn num<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|e| ConfigError::new(key, format!("`{v}`: {e}"))))
        .transpose()
}

fn list(map: &BTreeMap<String, String>, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
    let Some(text) = map.get(key) else {
        return Ok(None);
    };
    let values = text
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| ConfigError::new(key, format!("`{s}`: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(ConfigError::new(key, "list must not be empty"));
    }
    Ok(Some(values))
}

fn check_omega(key: &str, w: f64) -> Result<f64, ConfigError> {
    if w > 0.0 && w <= 1.0 {
        Ok(w)
    } else {
        Err(ConfigError::new(key, format!("must lie in (0, 1], got {w}")))
    }
}

fn check_positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(key, format!("must be > 0, got {v}")))
    }
}

fn expression(map: &BTreeMap<String, String>, key: &str) -> Result<Option<String>, ConfigError> {
    let Some(text) = map.get(key) else {
        return Ok(None);
    };
    CompiledExpr::parse(text).map_err(|e| ConfigError::new(key, e))?;
    Ok(Some(text.clone()))
}

fn build(map: &BTreeMap<String, String>) -> Result<RunConfig, ConfigError> {
    let builtin = match map.get("problem") {
        Some(id) => Some(
            BuiltinProblem::parse(id)
                .ok_or_else(|| ConfigError::new("problem", format!("unknown problem `{id}`")))?,
        ),
        None => None,
    };
    let dim = match num::<usize>(map, "dim")? {
        Some(d @ (1 | 2)) => d,
        Some(d) => return Err(ConfigError::new("dim", format!("must be 1 or 2, got {d}"))),
        None => builtin.map_or(1, |b| b.dim()),
    };

    let f = expression(map, "f")?;
    let z = expression(map, "z")?;
    let problem = match (builtin, f, z) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            return Err(ConfigError::new(
                "problem",
                "give either a built-in problem or f/z expressions, not both",
            ))
        }
        (Some(b), None, None) => {
            if b.dim() != dim {
                return Err(ConfigError::new(
                    "problem",
                    format!("`{}` is {}D but dim = {dim}", b.id(), b.dim()),
                ));
            }
            ProblemSource::Builtin(b)
        }
        (None, Some(f), Some(z)) => ProblemSource::Expressions { f, z },
        (None, Some(_), None) => return Err(ConfigError::new("z", "required together with `f`")),
        (None, None, Some(_)) => return Err(ConfigError::new("f", "required together with `z`")),
        (None, None, None) => ProblemSource::Builtin(if dim == 1 {
            BuiltinProblem::Test1d
        } else {
            BuiltinProblem::Test2d
        }),
    };

    let (default_n, default_delta, default_omega) = match dim {
        1 => (200, "h^2", 0.75),
        _ => (40, "h^4", 0.5),
    };
    let n = num::<usize>(map, "n")?.unwrap_or(default_n);
    let grid = GridSpec::new(dim, n).map_err(|e: GridError| ConfigError::new("n", e.to_string()))?;

    let delta = match map.get("delta") {
        Some(text) => match text.parse::<f64>() {
            Ok(v) => DeltaSpec::Fixed(v),
            Err(_) => DeltaSpec::InH(text.clone()),
        },
        None => DeltaSpec::InH(default_delta.to_string()),
    };
    delta.value(grid.h())?;

    let omega = check_omega("omega", num(map, "omega")?.unwrap_or(default_omega))?;
    let omega_y = check_omega("omega_y", num(map, "omega_y")?.unwrap_or(omega))?;
    let omega_phi = check_omega("omega_phi", num(map, "omega_phi")?.unwrap_or(omega))?;
    let omega_psi = check_omega("omega_psi", num(map, "omega_psi")?.unwrap_or(omega))?;

    let nu = check_positive("nu", num(map, "nu")?.unwrap_or(1.0))?;
    let eps = check_positive("eps", num(map, "eps")?.unwrap_or(1e-8))?;
    let max_iter = num(map, "max_iter")?.unwrap_or(10_000);
    let inner_newton = num(map, "inner_newton")?.unwrap_or(1);
    if inner_newton == 0 {
        return Err(ConfigError::new("inner_newton", "must be >= 1"));
    }
    let lin_tol = check_positive("lin_tol", num(map, "lin_tol")?.unwrap_or(linsolve::DEFAULT_TOL))?;
    let lin_max_iter = num::<usize>(map, "lin_max_iter")?;
    if lin_max_iter == Some(0) {
        return Err(ConfigError::new("lin_max_iter", "must be >= 1"));
    }

    let init = InitialGuess {
        y: expression(map, "y0")?,
        phi: expression(map, "phi0")?,
        psi: expression(map, "psi0")?,
    };
    let output_dir = PathBuf::from(map.get("output").map_or("out", |s| s.as_str()));
    let contact_tol = num::<f64>(map, "contact_tol")?
        .map(|v| check_positive("contact_tol", v))
        .transpose()?;

    let sweep = match (map.get("sweep_axis"), list(map, "sweep_values")?) {
        (None, None) => None,
        (None, Some(_)) => return Err(ConfigError::new("sweep_axis", "required with `sweep_values`")),
        (Some(_), None) => return Err(ConfigError::new("sweep_values", "required with `sweep_axis`")),
        (Some(axis), Some(values)) => {
            let axis = match axis.as_str() {
                "omega" => SweepAxis::Omega,
                "n" => SweepAxis::N,
                "nu" => SweepAxis::Nu,
                "delta" => SweepAxis::Delta,
                other => {
                    return Err(ConfigError::new(
                        "sweep_axis",
                        format!("expected omega, n, nu or delta, got `{other}`"),
                    ))
                }
            };
            for &v in &values {
                match axis {
                    SweepAxis::Omega => {
                        check_omega("sweep_values", v)?;
                    }
                    SweepAxis::N => {
                        if !(v >= 1.0 && v.fract() == 0.0) {
                            return Err(ConfigError::new(
                                "sweep_values",
                                format!("grid sizes must be positive integers, got {v}"),
                            ));
                        }
                        delta.value(1.0 / (v + 1.0))?;
                    }
                    SweepAxis::Nu | SweepAxis::Delta => {
                        check_positive("sweep_values", v)?;
                    }
                }
            }
            Some(Sweep { axis, values })
        }
    };

    let seed = num(map, "seed")?.unwrap_or(42);
    let oracle_deltas =
        list(map, "oracle_deltas")?.unwrap_or_else(|| vec![1e-2, 5e-3, 2.5e-3, 1.25e-3, 6.25e-4]);
    for &d in &oracle_deltas {
        check_positive("oracle_deltas", d)?;
    }
    let oracle_force = num::<f64>(map, "oracle_force")?.unwrap_or(100.0);
    if !oracle_force.is_finite() {
        return Err(ConfigError::new("oracle_force", "must be finite"));
    }
    let grad_step = check_positive("grad_step", num(map, "grad_step")?.unwrap_or(1e-5))?;
    let grad_samples = num(map, "grad_samples")?.unwrap_or(1);
    if grad_samples == 0 {
        return Err(ConfigError::new("grad_samples", "must be >= 1"));
    }

    Ok(RunConfig {
        dim,
        n,
        delta,
        nu,
        omega_y,
        omega_phi,
        omega_psi,
        eps,
        max_iter,
        inner_newton,
        lin_tol,
        lin_max_iter,
        problem,
        init,
        output_dir,
        contact_tol,
        sweep,
        seed,
        oracle_deltas,
        oracle_force,
        grad_step,
        grad_samples,
    })
}
