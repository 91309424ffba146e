use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{RunConfig, SweepAxis};
use super::problems::{initial_iterate, problem_data, sample_expression};
use super::CliError;
use crate::grid::{Field, LinearOperator};
use crate::oracle::{self, GradientCheck};
use crate::penalty::PenaltyParams;
use crate::solver::{self, ProblemData, RunOutcome};

/// Contact force of the default obstacles used by `grad_check`: negative,
/// so the lower obstacle is the one in contact and `β'(y-φ)` is active.
pub const GRAD_CHECK_FORCE: f64 = -10.0;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_key_values(path: &Path, pairs: &[(&str, String)]) -> Result<(), CliError> {
    let mut body = String::new();
    for (k, v) in pairs {
        body.push_str(k);
        body.push_str(" = ");
        body.push_str(v);
        body.push('\n');
    }
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(body.as_bytes()).map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn coordinate_columns(grid: &crate::grid::GridSpec) -> &'static [&'static str] {
    if grid.dim() == 1 {
        &["x1"]
    } else {
        &["x1", "x2"]
    }
}

/// `sqrt(h^d Σ (A u)²)`, a discrete `|u|_{H²}` proxy.
fn laplacian_norm(u: &Field) -> f64 {
    let a = LinearOperator::neg_laplacian(*u.grid());
    a.apply(u).l2_norm()
}

#[derive(Debug, Clone)]
pub struct CaseReport {
    pub problem: ProblemData,
    pub outcome: RunOutcome,
    pub wall_time: Duration,
}

impl CaseReport {
    pub fn final_cost(&self) -> f64 {
        self.outcome
            .log
            .last()
            .map_or(self.outcome.initial_cost, |r| r.cost)
    }

    pub fn final_eps_n(&self) -> f64 {
        self.outcome.log.last().map_or(f64::NAN, |r| r.eps_n)
    }
}

/// Run one configuration and write `iterations.csv`, `fields.csv` and
/// `summary.txt` into `dir`. A singular linearization is a recorded outcome,
/// not an error.
pub fn run_case(cfg: &RunConfig, dir: &Path) -> Result<CaseReport, CliError> {
    let problem = problem_data(cfg)?;
    let init = initial_iterate(cfg)?;
    let scfg = cfg.solver_config();
    let start = Instant::now();
    let outcome = solver::run(&scfg, &problem, &init)?;
    let wall_time = start.elapsed();
    let report = CaseReport {
        problem,
        outcome,
        wall_time,
    };

    ensure_dir(dir)?;
    let log_rows: Vec<Vec<String>> = report
        .outcome
        .log
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                num(r.cost),
                num(r.eps_n),
                num(r.res_state),
                num(r.res_psi),
                num(r.res_phi),
                num(r.mu1_norm),
                num(r.mu2_norm),
            ]
        })
        .collect();
    write_csv(
        &dir.join("iterations.csv"),
        &[
            "n", "J", "eps_n", "res_state", "res_psi", "res_phi", "mu1_norm", "mu2_norm",
        ],
        &log_rows,
    )?;

    let grid = cfg.grid();
    let it = &report.outcome.iterate;
    let contact = solver::contact_region(&it.y, &it.phi, &it.psi, cfg.contact_tolerance());
    let mut header: Vec<&str> = coordinate_columns(&grid).to_vec();
    header.extend(["y", "phi", "psi", "p", "lambda", "f", "z", "contact"]);
    let field_rows: Vec<Vec<String>> = (0..grid.len())
        .map(|i| {
            let (x1, x2) = grid.coords(i);
            let mut row = vec![num(x1)];
            if grid.dim() == 2 {
                row.push(num(x2));
            }
            for field in [&it.y, &it.phi, &it.psi, &it.p, &it.lambda, &report.problem.f, &report.problem.z] {
                row.push(num(field.values()[i]));
            }
            row.push(contact[i].code().to_string());
            row
        })
        .collect();
    write_csv(&dir.join("fields.csv"), &header, &field_rows)?;

    let count = |code: char| contact.iter().filter(|c| c.code() == code).count().to_string();
    let mut summary = vec![
        ("termination", report.outcome.termination.to_string()),
        ("iterations", report.outcome.log.len().to_string()),
        ("final_J", num(report.final_cost())),
        ("initial_J", num(report.outcome.initial_cost)),
        ("final_eps_n", num(report.final_eps_n())),
        ("max_violation", num(solver::obstacle_violation(&it.y, &it.phi, &it.psi))),
        ("order_violation", num(solver::order_violation(&it.phi, &it.psi))),
        ("laplacian_l2_phi", num(laplacian_norm(&it.phi))),
        ("laplacian_l2_psi", num(laplacian_norm(&it.psi))),
        ("contact_lower", count('L')),
        ("contact_upper", count('U')),
        ("contact_tol", num(cfg.contact_tolerance())),
        ("dim", cfg.dim.to_string()),
        ("n", cfg.n.to_string()),
        ("delta", num(scfg.delta)),
        ("nu", num(scfg.nu)),
        ("omega_y", num(scfg.omega_y)),
        ("omega_phi", num(scfg.omega_phi)),
        ("omega_psi", num(scfg.omega_psi)),
        ("eps", num(scfg.eps)),
        ("max_iter", scfg.max_iter.to_string()),
        ("wall_time_s", format!("{:.6}", wall_time.as_secs_f64())),
    ];
    if let Some(reason) = &report.outcome.singular_reason {
        summary.insert(1, ("singular_reason", reason.clone()));
    }
    write_key_values(&dir.join("summary.txt"), &summary)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub report: CaseReport,
}

fn sweep_dir_name(axis: SweepAxis, value: f64) -> String {
    format!("{}_{}", axis.name(), value)
}

/// Run every sweep value (in parallel) into its own subdirectory of `dir`,
/// then write `sweep.csv` in the order the values were given.
pub fn run_sweep(cfg: &RunConfig, dir: &Path) -> Result<Vec<SweepRow>, CliError> {
    let sweep = cfg.sweep.as_ref().ok_or(CliError::MissingSweep("sweep"))?;
    ensure_dir(dir)?;
    let rows = sweep
        .values
        .par_iter()
        .map(|&value| {
            let sub = cfg.with_axis_value(sweep.axis, value);
            let path: PathBuf = dir.join(sweep_dir_name(sweep.axis, value));
            run_case(&sub, &path).map(|report| SweepRow { value, report })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.value),
                r.report.outcome.log.len().to_string(),
                num(r.report.final_cost()),
                num(r.report.final_eps_n()),
                r.report.outcome.termination.to_string(),
            ]
        })
        .collect();
    write_csv(
        &dir.join("sweep.csv"),
        &[sweep.axis.name(), "iterations", "final_J", "final_eps_n", "termination"],
        &body,
    )?;
    Ok(rows)
}

/// Fixed obstacles from `phi0`/`psi0` when given, otherwise the
/// constant-force pair with the given force.
fn fixed_obstacles(
    cfg: &RunConfig,
    problem: &ProblemData,
    force: f64,
) -> Result<(Field, Field, String), CliError> {
    let grid = cfg.grid();
    let a = LinearOperator::neg_laplacian(grid);
    let (mut phi, mut psi) = oracle::constant_force_obstacles(&a, &problem.f, force)?;
    let mut label = format!("constant_force({force})");
    if let Some(text) = &cfg.init.phi {
        phi = sample_expression("phi0", text, grid)?;
        label = "expressions".into();
    }
    if let Some(text) = &cfg.init.psi {
        psi = sample_expression("psi0", text, grid)?;
        label = "expressions".into();
    }
    Ok((phi, psi, label))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRow {
    pub delta: f64,
    pub err_sup: f64,
    pub violation: f64,
    pub newton_steps: usize,
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub rows: Vec<OracleRow>,
    pub psor_residual: f64,
}

fn nonincreasing(v: impl Iterator<Item = f64> + Clone) -> bool {
    v.clone().zip(v.skip(1)).all(|(a, b)| b <= a)
}

impl OracleReport {
    pub fn error_nonincreasing(&self) -> bool {
        nonincreasing(self.rows.iter().map(|r| r.err_sup))
    }

    pub fn violation_nonincreasing(&self) -> bool {
        nonincreasing(self.rows.iter().map(|r| r.violation))
    }

    /// Violation at the first δ over violation at the last.
    pub fn violation_ratio(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => a.violation / b.violation,
            _ => f64::NAN,
        }
    }
}

/// Solve the penalized state equation at fixed obstacles for every δ in
/// `oracle_deltas` and compare with the PSOR solution of the obstacle
/// problem. Writes `oracle_compare.csv` and `oracle_summary.txt`.
pub fn oracle_compare(cfg: &RunConfig, dir: &Path) -> Result<OracleReport, CliError> {
    let problem = problem_data(cfg)?;
    let (phi, psi, label) = fixed_obstacles(cfg, &problem, cfg.oracle_force)?;
    let a = LinearOperator::neg_laplacian(cfg.grid());
    let y_psor = oracle::psor_default(&a, &problem.f, &phi, &psi)?;
    let psor_residual =
        oracle::complementarity_residual(&a, &problem.f, &phi, &psi, &y_psor, oracle::DEFAULT_TOL);

    let rows = cfg
        .oracle_deltas
        .iter()
        .map(|&delta| {
            let pen = PenaltyParams::new(delta).map_err(|e| {
                CliError::Config(super::ConfigError::new("oracle_deltas", e.to_string()))
            })?;
            let state = solver::solve_state(&pen, &problem.f, &phi, &psi, 1e-13, 200)?;
            Ok(OracleRow {
                delta,
                err_sup: (&state.y - &y_psor).sup_norm(),
                violation: solver::obstacle_violation(&state.y, &phi, &psi),
                newton_steps: state.newton_steps,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = OracleReport {
        rows,
        psor_residual,
    };

    ensure_dir(dir)?;
    let body: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                num(r.delta),
                num(r.err_sup),
                num(r.violation),
                r.newton_steps.to_string(),
            ]
        })
        .collect();
    write_csv(
        &dir.join("oracle_compare.csv"),
        &["delta", "err_sup", "violation", "newton_steps"],
        &body,
    )?;
    write_key_values(
        &dir.join("oracle_summary.txt"),
        &[
            ("obstacles", label),
            ("psor_residual", num(report.psor_residual)),
            ("error_nonincreasing", report.error_nonincreasing().to_string()),
            ("violation_nonincreasing", report.violation_nonincreasing().to_string()),
            ("violation_ratio", num(report.violation_ratio())),
        ],
    )?;
    Ok(report)
}

/// Seeded directions with entries uniform in `[-1, 1]`.
pub(crate) fn random_directions(grid: crate::grid::GridSpec, seed: u64, count: usize) -> Vec<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let values = (0..grid.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            Field::new(grid, values).expect("finite direction")
        })
        .collect()
}

/// Compare adjoint and finite-difference directional derivatives with
/// respect to the lower obstacle along `grad_samples` seeded directions.
/// Writes `grad_check.csv`.
pub fn grad_check(cfg: &RunConfig, dir: &Path) -> Result<Vec<GradientCheck>, CliError> {
    let problem = problem_data(cfg)?;
    let (phi, psi, _) = fixed_obstacles(cfg, &problem, GRAD_CHECK_FORCE)?;
    let scfg = cfg.solver_config();
    let checks = random_directions(cfg.grid(), cfg.seed, cfg.grad_samples)
        .iter()
        .map(|v| oracle::fd_gradient_check(&scfg, &problem, &phi, &psi, v, cfg.grad_step))
        .collect::<Result<Vec<_>, _>>()?;

    ensure_dir(dir)?;
    let body: Vec<Vec<String>> = checks
        .iter()
        .enumerate()
        .map(|(k, c)| {
            vec![
                k.to_string(),
                cfg.seed.to_string(),
                num(cfg.grad_step),
                num(c.adjoint_value),
                num(c.fd_value),
                num(c.rel_err),
            ]
        })
        .collect();
    write_csv(
        &dir.join("grad_check.csv"),
        &["sample", "seed", "step", "adjoint", "finite_difference", "rel_err"],
        &body,
    )?;
    Ok(checks)
}
