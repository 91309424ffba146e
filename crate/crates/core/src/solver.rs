//! Damped-Newton Gauss–Seidel iteration for the discrete penalized
//! optimality system.
//!
//! One outer iteration updates, in order,
//!
//! 1. the state `y` (damped Newton on `A y + β(y-φ) - β(ψ-y) = f`),
//! 2. the adjoint `p` from `(A + β'(y-φ) + β'(ψ-y)) p = y - z`,
//! 3. the multiplier `λ = ν A φ + β'(y-φ) p`,
//! 4. the upper control `ψ` (damped Newton on `ν A ψ + β'(ψ-y) p + λ = 0`),
//! 5. the lower control `φ` (damped Newton on `ν A φ + β'(y-φ) p - λ = 0`),
//!
//! always using the freshest available values, and stops once the cost
//! stabilizes, `|J_n - J_{n-1}| <= eps`. `A` is the positive-definite
//! negative Laplacian throughout.

use thiserror::Error;

use crate::grid::{dirichlet_energy, Field, GridSpec, LinearOperator};
use crate::linsolve::{self, SolveError};
use crate::penalty::PenaltyParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("fields do not share one grid")]
    GridMismatch,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("state Newton iteration did not converge: residual {residual:.3e} after {steps} steps")]
    StateNotConverged { residual: f64, steps: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub delta: f64,
    pub nu: f64,
    pub omega_y: f64,
    pub omega_phi: f64,
    pub omega_psi: f64,
    /// Stop once `|J_n - J_{n-1}| <= eps`.
    pub eps: f64,
    pub max_iter: usize,
    /// Damped Newton repetitions per sub-equation and outer iteration.
    pub inner_newton: usize,
    pub lin_tol: f64,
    /// CG iteration cap; `None` means `20 N²`.
    pub lin_max_iter: Option<usize>,
}

impl SolverConfig {
    pub fn new(delta: f64, nu: f64, omega: f64) -> Self {
        Self {
            delta,
            nu,
            omega_y: omega,
            omega_phi: omega,
            omega_psi: omega,
            eps: 1e-8,
            max_iter: 10_000,
            inner_newton: 1,
            lin_tol: linsolve::DEFAULT_TOL,
            lin_max_iter: None,
        }
    }

    /// Reference settings: `δ = h², ω = 0.75` in 1D and `δ = h⁴, ω = 0.5` in 2D, `ν = 1`.
    pub fn reference(grid: &GridSpec) -> Self {
        let h = grid.h();
        match grid.dim() {
            1 => Self::new(h * h, 1.0, 0.75),
            _ => Self::new(h.powi(4), 1.0, 0.5),
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::InvalidConfig(msg));
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be > 0, got {}", self.delta));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be > 0, got {}", self.nu));
        }
        for (name, w) in [
            ("omega_y", self.omega_y),
            ("omega_phi", self.omega_phi),
            ("omega_psi", self.omega_psi),
        ] {
            if !(w > 0.0 && w <= 1.0) {
                return bad(format!("{name} must lie in (0, 1], got {w}"));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be > 0, got {}", self.eps));
        }
        if self.inner_newton == 0 {
            return bad("inner_newton must be >= 1".into());
        }
        if !(self.lin_tol > 0.0 && self.lin_tol.is_finite()) {
            return bad(format!("lin_tol must be > 0, got {}", self.lin_tol));
        }
        Ok(())
    }

    pub fn penalty(&self) -> PenaltyParams {
        PenaltyParams::new(self.delta).expect("validated delta")
    }

    fn linear_solve(&self, op: &LinearOperator, rhs: &Field) -> Result<Field, SolveError> {
        let max_iter = self
            .lin_max_iter
            .unwrap_or_else(|| linsolve::default_max_iter(op));
        linsolve::solve(op, rhs, self.lin_tol, max_iter)
    }
}

/// Source `f` and target `z` on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    pub grid: GridSpec,
    pub f: Field,
    pub z: Field,
}

impl ProblemData {
    pub fn new(f: Field, z: Field) -> Result<Self, SolverError> {
        if !f.same_grid(&z) {
            return Err(SolverError::GridMismatch);
        }
        Ok(Self { grid: *f.grid(), f, z })
    }
}

/// State, adjoint, lower control, upper control and multiplier of one outer step.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub y: Field,
    pub p: Field,
    pub phi: Field,
    pub psi: Field,
    pub lambda: Field,
}

impl Iterate {
    pub fn zeros(grid: GridSpec) -> Self {
        let z = Field::zeros(grid);
        Self {
            y: z.clone(),
            p: z.clone(),
            phi: z.clone(),
            psi: z.clone(),
            lambda: z,
        }
    }

    fn on_grid(&self, grid: &GridSpec) -> bool {
        [&self.y, &self.p, &self.phi, &self.psi, &self.lambda]
            .iter()
            .all(|f| f.grid() == grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub n: usize,
    pub cost: f64,
    /// `max(‖y_n - y_{n-1}‖∞, ‖φ_n - φ_{n-1}‖∞)`
    pub eps_n: f64,
    pub res_state: f64,
    pub res_psi: f64,
    pub res_phi: f64,
    /// `‖β'(y-φ) p‖∞` at the end of the iteration.
    pub mu1_norm: f64,
    /// `‖β'(ψ-y) p‖∞` at the end of the iteration.
    pub mu2_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIter,
    Singular,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Termination::Converged => "Converged",
            Termination::MaxIter => "MaxIter",
            Termination::Singular => "Singular",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub iterate: Iterate,
    pub log: Vec<IterationRecord>,
    pub termination: Termination,
    /// Cost of the initial iterate.
    pub initial_cost: f64,
    /// Why the run stopped on a singular (or non-finite) step.
    pub singular_reason: Option<String>,
}

fn check_grid(grid: &GridSpec, fields: &[&Field]) -> Result<(), SolverError> {
    if fields.iter().all(|f| f.grid() == grid) {
        Ok(())
    } else {
        Err(SolverError::GridMismatch)
    }
}

/// `A y + β(y-φ) - β(ψ-y) - f`
pub fn state_residual(
    pen: &PenaltyParams,
    f: &Field,
    y: &Field,
    phi: &Field,
    psi: &Field,
) -> Field {
    let a = LinearOperator::neg_laplacian(*y.grid());
    let mut r = a.apply(y);
    for (i, ri) in r.values_mut().iter_mut().enumerate() {
        let (yi, lo, hi) = (y.values()[i], phi.values()[i], psi.values()[i]);
        *ri += pen.beta(yi - lo) - pen.beta(hi - yi) - f.values()[i];
    }
    r
}

/// `A + diag(β'(y-φ) + β'(ψ-y))`, the state Jacobian and the adjoint operator.
pub fn state_jacobian(pen: &PenaltyParams, y: &Field, phi: &Field, psi: &Field) -> LinearOperator {
    let shift = Field::new(
        *y.grid(),
        (0..y.len())
            .map(|i| {
                let (yi, lo, hi) = (y.values()[i], phi.values()[i], psi.values()[i]);
                pen.beta_prime(yi - lo) + pen.beta_prime(hi - yi)
            })
            .collect(),
    )
    .expect("finite shift");
    LinearOperator::neg_laplacian(*y.grid()).with_shift(&shift)
}

/// Damped Newton update of the state at fixed obstacles `(prev.phi, prev.psi)`.
/// Returns the new state and the final residual `‖A y + β(y-φ) - β(ψ-y) - f‖₂`.
pub fn state_step(
    cfg: &SolverConfig,
    prob: &ProblemData,
    prev: &Iterate,
) -> Result<(Field, f64), SolverError> {
    cfg.validate()?;
    check_grid(&prob.grid, &[&prev.y, &prev.phi, &prev.psi])?;
    let pen = cfg.penalty();
    let mut y = prev.y.clone();
    for _ in 0..cfg.inner_newton {
        let res = state_residual(&pen, &prob.f, &y, &prev.phi, &prev.psi);
        let op = state_jacobian(&pen, &y, &prev.phi, &prev.psi);
        let r = cfg.linear_solve(&op, &(-cfg.omega_y * &res))?;
        y.axpy(1.0, &r);
    }
    let res = state_residual(&pen, &prob.f, &y, &prev.phi, &prev.psi).euclid_norm();
    Ok((y, res))
}

/// Solve `(A + β'(y-φ) + β'(ψ-y)) p = y - z`.
pub fn adjoint_solve(
    cfg: &SolverConfig,
    prob: &ProblemData,
    y: &Field,
    phi_prev: &Field,
    psi_prev: &Field,
) -> Result<Field, SolverError> {
    check_grid(&prob.grid, &[y, phi_prev, psi_prev])?;
    let op = state_jacobian(&cfg.penalty(), y, phi_prev, psi_prev);
    Ok(cfg.linear_solve(&op, &(y - &prob.z))?)
}

/// `λ = ν A φ + β'(y-φ) ⊙ p`
pub fn multiplier_lambda(cfg: &SolverConfig, y: &Field, phi_prev: &Field, p: &Field) -> Field {
    let pen = cfg.penalty();
    let mut lambda = cfg.nu * &LinearOperator::neg_laplacian(*y.grid()).apply(phi_prev);
    for (i, l) in lambda.values_mut().iter_mut().enumerate() {
        *l += pen.beta_prime(y.values()[i] - phi_prev.values()[i]) * p.values()[i];
    }
    lambda
}

fn psi_residual(cfg: &SolverConfig, y: &Field, p: &Field, psi: &Field, lambda: &Field) -> Field {
    let pen = cfg.penalty();
    let mut r = cfg.nu * &LinearOperator::neg_laplacian(*y.grid()).apply(psi);
    for (i, ri) in r.values_mut().iter_mut().enumerate() {
        *ri += pen.beta_prime(psi.values()[i] - y.values()[i]) * p.values()[i] + lambda.values()[i];
    }
    r
}

fn phi_residual(cfg: &SolverConfig, y: &Field, p: &Field, phi: &Field, lambda: &Field) -> Field {
    let pen = cfg.penalty();
    let mut r = cfg.nu * &LinearOperator::neg_laplacian(*y.grid()).apply(phi);
    for (i, ri) in r.values_mut().iter_mut().enumerate() {
        *ri += pen.beta_prime(y.values()[i] - phi.values()[i]) * p.values()[i] - lambda.values()[i];
    }
    r
}

/// Damped Newton update of the upper control on `ν A ψ + β'(ψ-y) p + λ = 0`,
/// linearized with `ν A + diag(β''(ψ-y) p)`.
pub fn psi_step(
    cfg: &SolverConfig,
    prob: &ProblemData,
    y: &Field,
    p: &Field,
    psi_prev: &Field,
    lambda: &Field,
) -> Result<(Field, f64), SolverError> {
    check_grid(&prob.grid, &[y, p, psi_prev, lambda])?;
    let pen = cfg.penalty();
    let mut psi = psi_prev.clone();
    for _ in 0..cfg.inner_newton {
        let res = psi_residual(cfg, y, p, &psi, lambda);
        let shift = psi.zip_map(y, |s, yi| pen.beta_second(s - yi)).hadamard(p);
        let op = LinearOperator::neg_laplacian(prob.grid)
            .scaled(cfg.nu)
            .with_shift(&shift);
        let r = cfg.linear_solve(&op, &(-cfg.omega_psi * &res))?;
        psi.axpy(1.0, &r);
    }
    let res = psi_residual(cfg, y, p, &psi, lambda).euclid_norm();
    Ok((psi, res))
}

/// Damped Newton update of the lower control on `ν A φ + β'(y-φ) p - λ = 0`,
/// linearized with `ν A - diag(β''(y-φ) p)`.
pub fn phi_step(
    cfg: &SolverConfig,
    prob: &ProblemData,
    y: &Field,
    p: &Field,
    phi_prev: &Field,
    lambda: &Field,
) -> Result<(Field, f64), SolverError> {
    check_grid(&prob.grid, &[y, p, phi_prev, lambda])?;
    let pen = cfg.penalty();
    let mut phi = phi_prev.clone();
    for _ in 0..cfg.inner_newton {
        let res = phi_residual(cfg, y, p, &phi, lambda);
        let shift = y.zip_map(&phi, |yi, f| -pen.beta_second(yi - f)).hadamard(p);
        let op = LinearOperator::neg_laplacian(prob.grid)
            .scaled(cfg.nu)
            .with_shift(&shift);
        let r = cfg.linear_solve(&op, &(-cfg.omega_phi * &res))?;
        phi.axpy(1.0, &r);
    }
    let res = phi_residual(cfg, y, p, &phi, lambda).euclid_norm();
    Ok((phi, res))
}

/// `½ h^d Σ (y - z)²`
pub fn tracking_cost(y: &Field, z: &Field) -> f64 {
    let d = y - z;
    0.5 * y.grid().cell_volume() * d.dot(&d)
}

/// `J = ½ h^d Σ (y - z)² + ν/2 (h^d φᵀAφ + h^d ψᵀAψ)`
pub fn cost(cfg: &SolverConfig, prob: &ProblemData, y: &Field, phi: &Field, psi: &Field) -> f64 {
    let a = LinearOperator::neg_laplacian(prob.grid);
    tracking_cost(y, &prob.z)
        + 0.5 * cfg.nu * (dirichlet_energy(&a, phi) + dirichlet_energy(&a, psi))
}

/// Largest pointwise violation `max(φ - y, y - ψ, 0)`.
pub fn obstacle_violation(y: &Field, phi: &Field, psi: &Field) -> f64 {
    (0..y.len())
        .map(|i| {
            let (yi, lo, hi) = (y.values()[i], phi.values()[i], psi.values()[i]);
            (lo - yi).max(yi - hi).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// Largest `max(φ - ψ, 0)`; the ordering is monitored, never enforced.
pub fn order_violation(phi: &Field, psi: &Field) -> f64 {
    phi.zip_map(psi, |a, b| (a - b).max(0.0)).sup_norm()
}

/// Run the outer loop from `init`. Singular linearizations end the run with
/// [`Termination::Singular`]; `init.p` and `init.lambda` are never read.
pub fn run(
    cfg: &SolverConfig,
    prob: &ProblemData,
    init: &Iterate,
) -> Result<RunOutcome, SolverError> {
    cfg.validate()?;
    if !init.on_grid(&prob.grid) || !prob.f.same_grid(&prob.z) {
        return Err(SolverError::GridMismatch);
    }
    let pen = cfg.penalty();
    let mut current = init.clone();
    let initial_cost = cost(cfg, prob, &current.y, &current.phi, &current.psi);
    let mut prev_cost = initial_cost;
    let mut log = Vec::new();

    let singular = |iterate: Iterate, log: Vec<IterationRecord>, reason: String| RunOutcome {
        iterate,
        log,
        termination: Termination::Singular,
        initial_cost,
        singular_reason: Some(reason),
    };

    for n in 1..=cfg.max_iter {
        let step = (|| -> Result<(Iterate, IterationRecord), SolverError> {
            let (y, res_state) = state_step(cfg, prob, &current)?;
            let p = adjoint_solve(cfg, prob, &y, &current.phi, &current.psi)?;
            let lambda = multiplier_lambda(cfg, &y, &current.phi, &p);
            let (psi, res_psi) = psi_step(cfg, prob, &y, &p, &current.psi, &lambda)?;
            let (phi, res_phi) = phi_step(cfg, prob, &y, &p, &current.phi, &lambda)?;
            let j = cost(cfg, prob, &y, &phi, &psi);
            let eps_n = (&y - &current.y).sup_norm().max((&phi - &current.phi).sup_norm());
            let mu1 = y.zip_map(&phi, |a, b| pen.beta_prime(a - b)).hadamard(&p);
            let mu2 = psi.zip_map(&y, |a, b| pen.beta_prime(a - b)).hadamard(&p);
            let record = IterationRecord {
                n,
                cost: j,
                eps_n,
                res_state,
                res_psi,
                res_phi,
                mu1_norm: mu1.sup_norm(),
                mu2_norm: mu2.sup_norm(),
            };
            Ok((Iterate { y, p, phi, psi, lambda }, record))
        })();

        let (next, record) = match step {
            Ok(v) => v,
            Err(SolverError::Solve(e)) => return Ok(singular(current, log, e.to_string())),
            Err(e) => return Err(e),
        };
        if !record.cost.is_finite() || !next.on_grid(&prob.grid) || !all_finite(&next) {
            return Ok(singular(current, log, format!("non-finite iterate at n = {n}")));
        }
        log.push(record);
        current = next;
        if (record.cost - prev_cost).abs() <= cfg.eps {
            return Ok(RunOutcome {
                iterate: current,
                log,
                termination: Termination::Converged,
                initial_cost,
                singular_reason: None,
            });
        }
        prev_cost = record.cost;
    }

    Ok(RunOutcome {
        iterate: current,
        log,
        termination: Termination::MaxIter,
        initial_cost,
        singular_reason: None,
    })
}

fn all_finite(it: &Iterate) -> bool {
    [&it.y, &it.p, &it.phi, &it.psi, &it.lambda]
        .iter()
        .all(|f| f.is_finite())
}

/// Result of a fully converged state solve at fixed obstacles.
#[derive(Debug, Clone)]
pub struct StateSolution {
    pub y: Field,
    pub residual: f64,
    pub newton_steps: usize,
}

/// Solve `A y + β(y-φ) - β(ψ-y) = f` with undamped Newton from `y = 0` until
/// `‖residual‖₂ <= tol · max(1, ‖f‖₂)` or the update drops to rounding level.
pub fn solve_state(
    pen: &PenaltyParams,
    f: &Field,
    phi: &Field,
    psi: &Field,
    tol: f64,
    max_newton: usize,
) -> Result<StateSolution, SolverError> {
    check_grid(f.grid(), &[phi, psi])?;
    let grid = *f.grid();
    let bound = tol * f.euclid_norm().max(1.0);
    let mut y = Field::zeros(grid);
    let mut res = state_residual(pen, f, &y, phi, psi);
    let mut res_norm = res.euclid_norm();
    for step in 0..max_newton {
        if res_norm <= bound {
            return Ok(StateSolution {
                y,
                residual: res_norm,
                newton_steps: step,
            });
        }
        let op = state_jacobian(pen, &y, phi, psi);
        let max_iter = linsolve::default_max_iter(&op).max(10 * grid.len());
        let r = linsolve::solve(&op, &(-1.0 * &res), 1e-14, max_iter)?;
        y.axpy(1.0, &r);
        res = state_residual(pen, f, &y, phi, psi);
        res_norm = res.euclid_norm();
        if r.sup_norm() <= 1e3 * f64::EPSILON * y.sup_norm().max(1.0) {
            return Ok(StateSolution {
                y,
                residual: res_norm,
                newton_steps: step + 1,
            });
        }
    }
    if res_norm <= bound {
        return Ok(StateSolution {
            y,
            residual: res_norm,
            newton_steps: max_newton,
        });
    }
    Err(SolverError::StateNotConverged {
        residual: res_norm,
        steps: max_newton,
    })
}

/// Per-node relation between the state and the obstacles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contact {
    LowerActive,
    UpperActive,
    Inactive,
}

impl Contact {
    pub fn code(&self) -> char {
        match self {
            Contact::LowerActive => 'L',
            Contact::UpperActive => 'U',
            Contact::Inactive => 'I',
        }
    }
}

/// Classify nodes: lower contact if `y - φ <= tol`, else upper contact if
/// `ψ - y <= tol`, else inactive. The lower obstacle wins ties.
pub fn contact_region(y: &Field, phi: &Field, psi: &Field, tol: f64) -> Vec<Contact> {
    (0..y.len())
        .map(|i| {
            let (yi, lo, hi) = (y.values()[i], phi.values()[i], psi.values()[i]);
            if yi - lo <= tol {
                Contact::LowerActive
            } else if hi - yi <= tol {
                Contact::UpperActive
            } else {
                Contact::Inactive
            }
        })
        .collect()
}
