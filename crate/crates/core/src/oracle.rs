//! Independent checks: a projected SOR solver and a brute-force active-set
//! enumerator for the discrete bilateral obstacle problem
//!
//! ```text
//! φ <= y <= ψ,   g = A y - f,   g >= 0 where y = φ,  g <= 0 where y = ψ,  g = 0 elsewhere
//! ```
//!
//! and a finite-difference check of the adjoint gradient with respect to the
//! lower obstacle.

use thiserror::Error;

use crate::grid::{Field, LinearOperator};
use crate::linsolve;
use crate::solver::{self, ProblemData, SolverConfig, SolverError};

/// Largest system the enumerator accepts (3^12 = 531441 patterns).
pub const MAX_ENUMERATION_NODES: usize = 12;

pub const DEFAULT_RELAX: f64 = 1.5;
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("lower obstacle exceeds upper obstacle at node {index}")]
    InfeasibleObstacles { index: usize },
    #[error("PSOR did not converge: complementarity residual {residual:.3e} after {sweeps} sweeps")]
    MaxIterExceeded { residual: f64, sweeps: usize },
    #[error("relaxation factor {0} outside (0, 2)")]
    InvalidRelaxation(f64),
    #[error("operator diagonal is not positive at row {0}")]
    NonPositiveDiagonal(usize),
    #[error("enumeration limited to {MAX_ENUMERATION_NODES} nodes, got {0}")]
    TooLarge(usize),
    #[error("no activity pattern satisfies the complementarity conditions")]
    NoSolution,
    #[error("fields do not share the operator's grid")]
    GridMismatch,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn check_obstacles(
    op: &LinearOperator,
    f: &Field,
    phi: &Field,
    psi: &Field,
) -> Result<(), OracleError> {
    let grid = op.grid();
    if f.grid() != grid || phi.grid() != grid || psi.grid() != grid {
        return Err(OracleError::GridMismatch);
    }
    if let Some(index) = (0..phi.len()).find(|&i| phi.values()[i] > psi.values()[i]) {
        return Err(OracleError::InfeasibleObstacles { index });
    }
    Ok(())
}

/// Worst violation of the discrete complementarity system. Contact is
/// detected with the absolute tolerance `tol` on `y - φ` and `ψ - y`.
pub fn complementarity_residual(
    op: &LinearOperator,
    f: &Field,
    phi: &Field,
    psi: &Field,
    y: &Field,
    tol: f64,
) -> f64 {
    let g = &op.apply(y) - f;
    (0..y.len())
        .map(|i| {
            let (yi, lo, hi, gi) = (y.values()[i], phi.values()[i], psi.values()[i], g.values()[i]);
            let infeasible = (lo - yi).max(yi - hi).max(0.0);
            let at_lower = yi - lo <= tol;
            let at_upper = hi - yi <= tol;
            let sign = match (at_lower, at_upper) {
                (true, true) => 0.0,
                (true, false) => (-gi).max(0.0),
                (false, true) => gi.max(0.0),
                (false, false) => gi.abs(),
            };
            infeasible.max(sign)
        })
        .fold(0.0, f64::max)
}

/// Projected successive over-relaxation from the projection of zero.
///
/// `max_iter` counts full sweeps. Convergence is declared when
/// [`complementarity_residual`] drops to `tol · max(1, ‖f‖∞)`, or to the
/// rounding level of `A y` if that is larger.
pub fn psor_solve(
    op: &LinearOperator,
    f: &Field,
    phi: &Field,
    psi: &Field,
    relax: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Field, OracleError> {
    check_obstacles(op, f, phi, psi)?;
    if !(relax > 0.0 && relax < 2.0) {
        return Err(OracleError::InvalidRelaxation(relax));
    }
    let diag = op.diagonal();
    if let Some(i) = diag.iter().position(|d| !(*d > 0.0)) {
        return Err(OracleError::NonPositiveDiagonal(i));
    }
    let (lo, hi, rhs) = (phi.values(), psi.values(), f.values());
    let mut y: Vec<f64> = (0..lo.len()).map(|i| 0.0f64.clamp(lo[i], hi[i])).collect();

    const CHECK_EVERY: usize = 10;
    let mut residual = f64::INFINITY;
    for sweep in 1..=max_iter {
        for i in 0..y.len() {
            let gs = (rhs[i] - op.offdiag_dot(i, &y)) / diag[i];
            y[i] = (y[i] + relax * (gs - y[i])).clamp(lo[i], hi[i]);
        }
        if sweep % CHECK_EVERY == 0 || sweep == max_iter {
            let field = Field::new(*f.grid(), y.clone()).expect("finite PSOR iterate");
            residual = complementarity_residual(op, f, phi, psi, &field, tol);
            if residual <= stopping_bound(op, f, &y, tol) {
                return Ok(field);
            }
        }
    }
    Err(OracleError::MaxIterExceeded {
        residual,
        sweeps: max_iter,
    })
}

/// `tol · max(1, ‖f‖∞)`, raised to the rounding level of `A y` when the
/// operator is large (fine grids).
fn stopping_bound(op: &LinearOperator, f: &Field, y: &[f64], tol: f64) -> f64 {
    let y_max = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 64.0 * f64::EPSILON * op.norm_inf() * y_max;
    (tol * f.sup_norm().max(1.0)).max(floor)
}

/// PSOR with the default relaxation 1.5, tolerance 1e-10 and `10⁵ N` sweeps.
pub fn psor_default(
    op: &LinearOperator,
    f: &Field,
    phi: &Field,
    psi: &Field,
) -> Result<Field, OracleError> {
    let max_iter = 100_000 * op.grid().n();
    psor_solve(op, f, phi, psi, DEFAULT_RELAX, DEFAULT_TOL, max_iter)
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn dense_solve(a: &mut [[f64; MAX_ENUMERATION_NODES]], b: &mut [f64], m: usize) -> bool {
    for k in 0..m {
        let piv = (k..m)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        if a[piv][k].abs() < 1e-300 {
            return false;
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..m {
            let c = a[i][k] / a[k][k];
            for j in k..m {
                a[i][j] -= c * a[k][j];
            }
            b[i] -= c * b[k];
        }
    }
    for k in (0..m).rev() {
        let mut s = b[k];
        for j in k + 1..m {
            s -= a[k][j] * b[j];
        }
        b[k] = s / a[k][k];
    }
    true
}

/// Exact solution by trying every lower/upper/inactive pattern (3^m of them)
/// and returning the first one that is feasible with correctly signed
/// multipliers.
pub fn active_set_enumerate(
    op: &LinearOperator,
    f: &Field,
    phi: &Field,
    psi: &Field,
) -> Result<Field, OracleError> {
    let m = op.grid().len();
    if m > MAX_ENUMERATION_NODES {
        return Err(OracleError::TooLarge(m));
    }
    check_obstacles(op, f, phi, psi)?;
    let dense = op.to_dense();
    let (lo, hi, rhs) = (phi.values(), psi.values(), f.values());

    let obstacle_scale = lo.iter().chain(hi).fold(1.0f64, |s, v| s.max(v.abs()));
    let feas_tol = 1e-10 * obstacle_scale;
    let op_scale = op.norm_inf();
    let rhs_scale = rhs.iter().fold(1.0f64, |s, v| s.max(v.abs()));

    let total = 3usize.pow(m as u32);
    let mut pattern = vec![0u8; m];
    let mut y = vec![0.0; m];
    let mut free = Vec::with_capacity(m);
    let mut a = [[0.0; MAX_ENUMERATION_NODES]; MAX_ENUMERATION_NODES];
    let mut b = [0.0; MAX_ENUMERATION_NODES];

    for code in 0..total {
        let mut c = code;
        for p in pattern.iter_mut() {
            *p = (c % 3) as u8;
            c /= 3;
        }
        free.clear();
        for i in 0..m {
            match pattern[i] {
                1 => y[i] = lo[i],
                2 => y[i] = hi[i],
                _ => free.push(i),
            }
        }
        for (r, &i) in free.iter().enumerate() {
            b[r] = rhs[i];
            for (col, yj) in y.iter().enumerate() {
                if pattern[col] != 0 {
                    b[r] -= dense[i][col] * yj;
                }
            }
            for (s, &j) in free.iter().enumerate() {
                a[r][s] = dense[i][j];
            }
        }
        if !dense_solve(&mut a, &mut b, free.len()) {
            continue;
        }
        for (r, &i) in free.iter().enumerate() {
            y[i] = b[r];
        }
        if (0..m).any(|i| y[i] < lo[i] - feas_tol || y[i] > hi[i] + feas_tol) {
            continue;
        }
        let y_scale = y.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        let mult_tol = 1e-9 * (rhs_scale + op_scale * y_scale);
        let signs_ok = (0..m).all(|i| {
            let g: f64 = dense[i].iter().zip(&y).map(|(a, v)| a * v).sum::<f64>() - rhs[i];
            match pattern[i] {
                1 => g >= -mult_tol,
                2 => g <= mult_tol,
                _ => true,
            }
        });
        if signs_ok {
            return Ok(Field::new(*f.grid(), y).expect("finite enumeration solution"));
        }
    }
    Err(OracleError::NoSolution)
}

/// Obstacles pressing on the state with the uniform contact force `force`:
/// `ψ = A⁻¹f - force·w` and `φ = ψ - force·w` with `w = A⁻¹1`, so
/// `f - Aψ = force` at every node and the exact solution is `y = ψ`.
///
/// `w` is the sampled `x(1-x)/2` in 1D (exact for the 3-point stencil) and a
/// linear solve otherwise.
pub fn constant_force_obstacles(
    op: &LinearOperator,
    f: &Field,
    force: f64,
) -> Result<(Field, Field), OracleError> {
    let grid = *op.grid();
    if f.grid() != &grid {
        return Err(OracleError::GridMismatch);
    }
    let max_iter = linsolve::default_max_iter(op);
    let solve = |rhs: &Field| {
        linsolve::solve(op, rhs, 1e-13, max_iter).map_err(|e| OracleError::Solver(e.into()))
    };
    let w = if grid.dim() == 1 && op.shift().is_none() && op.scale() == 1.0 {
        Field::sample(grid, |x, _| 0.5 * x * (1.0 - x)).expect("finite quadratic")
    } else {
        solve(&Field::constant(grid, 1.0))?
    };
    let mut psi = solve(f)?;
    psi.axpy(-force, &w);
    let mut phi = psi.clone();
    phi.axpy(-force, &w);
    Ok((phi, psi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub adjoint_value: f64,
    pub fd_value: f64,
    pub rel_err: f64,
}

fn tracking_at(
    cfg: &SolverConfig,
    prob: &ProblemData,
    phi: &Field,
    psi: &Field,
) -> Result<(Field, f64), OracleError> {
    let state = solver::solve_state(&cfg.penalty(), &prob.f, phi, psi, 1e-13, 200)?;
    let j = solver::tracking_cost(&state.y, &prob.z);
    Ok((state.y, j))
}

/// Compare the adjoint directional derivative of `φ ↦ ½‖y(φ, ψ) - z‖²`,
/// `h^d Σ β'(y-φ) p v`, with a central difference of step `step` along `v`.
/// State solves are run to full Newton convergence.
pub fn fd_gradient_check(
    cfg: &SolverConfig,
    prob: &ProblemData,
    phi: &Field,
    psi: &Field,
    direction: &Field,
    step: f64,
) -> Result<GradientCheck, OracleError> {
    cfg.validate()?;
    let grid = prob.grid;
    if phi.grid() != &grid || psi.grid() != &grid || direction.grid() != &grid {
        return Err(OracleError::GridMismatch);
    }
    let pen = cfg.penalty();
    let (y, _) = tracking_at(cfg, prob, phi, psi)?;
    let jac = solver::state_jacobian(&pen, &y, phi, psi);
    let max_iter = linsolve::default_max_iter(&jac).max(10 * grid.len());
    let p = linsolve::solve(&jac, &(&y - &prob.z), 1e-14, max_iter)
        .map_err(SolverError::from)?;
    let mu1 = y.zip_map(phi, |a, b| pen.beta_prime(a - b)).hadamard(&p);
    let adjoint_value = grid.cell_volume() * mu1.dot(direction);

    let mut plus = phi.clone();
    plus.axpy(step, direction);
    let mut minus = phi.clone();
    minus.axpy(-step, direction);
    let (_, j_plus) = tracking_at(cfg, prob, &plus, psi)?;
    let (_, j_minus) = tracking_at(cfg, prob, &minus, psi)?;
    let fd_value = (j_plus - j_minus) / (2.0 * step);

    let denom = adjoint_value.abs().max(fd_value.abs());
    let rel_err = if denom == 0.0 {
        0.0
    } else {
        (adjoint_value - fd_value).abs() / denom
    };
    Ok(GradientCheck {
        adjoint_value,
        fd_value,
        rel_err,
    })
}
