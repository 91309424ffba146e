//! Solvers for `(s A_h + D) x = b` with a diagonal shift `D` of either sign.
//!
//! 1D operators are tridiagonal and go through a forward/backward sweep;
//! 2D operators use Jacobi-preconditioned conjugate gradients; when CG meets
//! an indefinite operator they fall back to a band `L D Lᵀ` factorization,
//! and to a pivoted band LU if that is unstable. Every path reports loss of
//! invertibility as [`SolveError::Singular`].

use thiserror::Error;

use crate::grid::{Field, LinearOperator};

/// Relative pivot threshold of the banded elimination.
pub const PIVOT_TOL: f64 = 1e-12;
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("singular operator: {0}")]
    Singular(String),
    #[error("operator and right-hand side live on different grids")]
    GridMismatch,
    #[error("invalid solver tolerance {0}")]
    InvalidTolerance(f64),
}

/// Default CG iteration budget, `20 N²`.
pub fn default_max_iter(op: &LinearOperator) -> usize {
    let n = op.grid().n();
    (20 * n * n).max(100)
}

/// Solve `op x = rhs`. `max_iter` only applies to the iterative (2D) path.
pub fn solve(
    op: &LinearOperator,
    rhs: &Field,
    tol: f64,
    max_iter: usize,
) -> Result<Field, SolveError> {
    match op.grid().dim() {
        1 => solve_banded(op, rhs, tol),
        _ => match solve_cg(op, rhs, tol, max_iter) {
            Err(SolveError::Singular(why)) if why.starts_with(INDEFINITE) => {
                solve_band_ldlt(op, rhs, tol).or_else(|_| solve_band_lu(op, rhs, tol))
            }
            other => other,
        },
    }
}

const INDEFINITE: &str = "indefinite:";

fn check_inputs(op: &LinearOperator, rhs: &Field, tol: f64) -> Result<(), SolveError> {
    if op.grid() != rhs.grid() {
        return Err(SolveError::GridMismatch);
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(SolveError::InvalidTolerance(tol));
    }
    Ok(())
}

/// Call `$kernel` through a copy compiled with AVX2 when the CPU has it.
/// Only the vector width changes (no contraction or reassociation), so both
/// paths give bit-identical results.
macro_rules! wide {
    ($kernel:ident($($arg:ident: $ty:ty),*)) => {{
        #[cfg(target_arch = "x86_64")]
        {
            #[target_feature(enable = "avx2")]
            unsafe fn avx2($($arg: $ty),*) -> Result<Field, SolveError> {
                $kernel($($arg),*)
            }
            if std::is_x86_feature_detected!("avx2") {
                // SAFETY: the feature was detected at runtime.
                return unsafe { avx2($($arg),*) };
            }
        }
        $kernel($($arg),*)
    }};
}

#[inline(always)]
fn residual(op: &LinearOperator, x: &[f64], b: &[f64], r: &mut [f64]) -> f64 {
    op.apply_into(x, r);
    let mut sq = 0.0;
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
        sq += *ri * *ri;
    }
    sq.sqrt()
}

#[inline(always)]
fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Tridiagonal elimination without pivoting (1D operators only), followed
/// by up to two steps of iterative refinement.
pub fn solve_banded(op: &LinearOperator, rhs: &Field, tol: f64) -> Result<Field, SolveError> {
    check_inputs(op, rhs, tol)?;
    assert_eq!(op.grid().dim(), 1, "banded path needs a 1D operator");
    let n = op.grid().len();
    let diag = op.diagonal();
    let off = if n > 1 { op.offdiag_entry() } else { 0.0 };
    let scale = diag.iter().fold(off.abs(), |m, d| m.max(d.abs()));
    if scale == 0.0 {
        return Err(SolveError::Singular("zero operator".into()));
    }

    // factor: modified diagonal of U and multipliers of L
    let mut u = vec![0.0; n];
    let mut l = vec![0.0; n];
    u[0] = diag[0];
    for i in 1..n {
        if u[i - 1].abs() < PIVOT_TOL * scale {
            return Err(SolveError::Singular(format!(
                "pivot {:.3e} at row {} below threshold",
                u[i - 1],
                i - 1
            )));
        }
        l[i] = off / u[i - 1];
        u[i] = diag[i] - l[i] * off;
    }
    if u[n - 1].abs() < PIVOT_TOL * scale {
        return Err(SolveError::Singular(format!(
            "pivot {:.3e} at row {} below threshold",
            u[n - 1],
            n - 1
        )));
    }

    let sweep = |b: &[f64], x: &mut [f64]| {
        x[0] = b[0];
        for i in 1..n {
            x[i] = b[i] - l[i] * x[i - 1];
        }
        x[n - 1] /= u[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (x[i] - off * x[i + 1]) / u[i];
        }
    };

    let b = rhs.values();
    let mut x = vec![0.0; n];
    sweep(b, &mut x);
    let bound = tol * euclid(b).max(1.0);
    let mut r = vec![0.0; n];
    let mut dx = vec![0.0; n];
    let mut res = residual(op, &x, b, &mut r);
    for _ in 0..2 {
        if res <= bound {
            break;
        }
        sweep(&r, &mut dx);
        x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
        res = residual(op, &x, b, &mut r);
    }
    // a backward-stable solve cannot beat rounding in `A x`
    let floor = 64.0 * f64::EPSILON * (op.norm_inf() * euclid(&x) + euclid(b));
    if !(res <= bound.max(floor)) {
        return Err(SolveError::Singular(format!(
            "residual {res:.3e} above {bound:.3e} after refinement (ill-conditioned)"
        )));
    }
    Field::new(*rhs.grid(), x).map_err(|_| SolveError::Singular("non-finite solution".into()))
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
///
/// A nonpositive diagonal entry or a direction of nonpositive curvature means
/// the operator is not positive definite; both are reported as singular, as
/// is failure to reach the tolerance within `max_iter` iterations.
pub fn solve_cg(
    op: &LinearOperator,
    rhs: &Field,
    tol: f64,
    max_iter: usize,
) -> Result<Field, SolveError> {
    wide!(cg(op: &LinearOperator, rhs: &Field, tol: f64, max_iter: usize))
}

#[inline(always)]
fn cg(op: &LinearOperator, rhs: &Field, tol: f64, max_iter: usize) -> Result<Field, SolveError> {
    check_inputs(op, rhs, tol)?;
    let n = op.grid().len();
    let diag = op.diagonal();
    if let Some(i) = diag.iter().position(|d| !(*d > 0.0)) {
        return Err(SolveError::Singular(format!(
            "{INDEFINITE} nonpositive diagonal {:.3e} at row {i}",
            diag[i]
        )));
    }
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();

    let b = rhs.values();
    let bound = tol * euclid(b).max(1.0);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut rnorm = euclid(&r);
    if rnorm <= bound {
        return Ok(Field::zeros(*rhs.grid()));
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let op_norm = op.norm_inf().max(f64::MIN_POSITIVE);

    for _ in 0..max_iter {
        op.apply_into(&p, &mut ap);
        let (curvature, pnorm2) = p
            .iter()
            .zip(&ap)
            .fold((0.0, 0.0), |(c, q), (a, b)| (c + a * b, q + a * a));
        if !(curvature > 1e-14 * pnorm2 * op_norm) {
            return Err(SolveError::Singular(format!(
                "{INDEFINITE} nonpositive curvature {curvature:.3e} during CG"
            )));
        }
        let alpha = rz / curvature;
        let mut rr = 0.0;
        for (((xi, ri), pi), api) in x.iter_mut().zip(r.iter_mut()).zip(&p).zip(&ap) {
            *xi += alpha * pi;
            *ri -= alpha * api;
            rr += *ri * *ri;
        }
        rnorm = rr.sqrt();
        if rnorm <= bound {
            // recompute the true residual to guard against drift
            let mut tmp = vec![0.0; n];
            let true_res = residual(op, &x, b, &mut tmp);
            if true_res <= bound {
                return Field::new(*rhs.grid(), x)
                    .map_err(|_| SolveError::Singular("non-finite solution".into()));
            }
            r.copy_from_slice(&tmp);
        }
        let mut rz_new = 0.0;
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&inv_diag) {
            *zi = ri * di;
            rz_new += ri * *zi;
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(SolveError::Singular(format!(
        "CG stagnated: residual {rnorm:.3e} above {bound:.3e} after {max_iter} iterations"
    )))
}

/// Symmetric `L D Lᵀ` factorization in band storage without pivoting, for
/// symmetric operators of either definiteness. Half the work of
/// [`solve_band_lu`], but it gives up (reports singular) on a pivot below
/// `PIVOT_TOL` times the operator scale or when refinement cannot reach the
/// tolerance, so callers fall back to the pivoted factorization.
pub fn solve_band_ldlt(op: &LinearOperator, rhs: &Field, tol: f64) -> Result<Field, SolveError> {
    wide!(band_ldlt(op: &LinearOperator, rhs: &Field, tol: f64))
}

#[inline(always)]
fn band_ldlt(op: &LinearOperator, rhs: &Field, tol: f64) -> Result<Field, SolveError> {
    check_inputs(op, rhs, tol)?;
    let grid = *op.grid();
    let m = grid.len();
    let kl = if grid.dim() == 1 { 1 } else { grid.n() };
    // row i stores columns i-kl ..= i
    let width = kl + 1;
    let at = |i: usize, j: usize| i * width + (j + kl - i);
    let mut ab = vec![0.0; m * width];
    for i in 0..m {
        ab[at(i, i)] = op.diag_entry(i);
        op.for_each_offdiag(i, |j, v| {
            if j < i {
                ab[at(i, j)] = v
            }
        });
    }
    let scale = op.norm_inf();
    if scale == 0.0 {
        return Err(SolveError::Singular("zero operator".into()));
    }

    let mut col = vec![0.0; kl];
    for k in 0..m {
        let d = ab[at(k, k)];
        if !(d.abs() >= PIVOT_TOL * scale) {
            return Err(SolveError::Singular(format!(
                "pivot {d:.3e} at row {k} below threshold"
            )));
        }
        let last = (k + kl).min(m - 1);
        for j in k + 1..=last {
            col[j - k - 1] = ab[at(j, k)];
            ab[at(j, k)] /= d;
        }
        for i in k + 1..=last {
            let l = ab[at(i, k)];
            if l != 0.0 {
                let row = &mut ab[at(i, k + 1)..=at(i, i)];
                for (a, c) in row.iter_mut().zip(&col[..i - k]) {
                    *a -= l * c;
                }
            }
        }
    }

    let sweep = |b: &[f64], x: &mut [f64]| {
        for i in 0..m {
            let first = i.saturating_sub(kl);
            let row = &ab[at(i, first)..at(i, i)];
            let dot: f64 = row.iter().zip(&x[first..i]).map(|(a, v)| a * v).sum();
            x[i] = b[i] - dot;
        }
        for i in 0..m {
            x[i] /= ab[at(i, i)];
        }
        for i in (0..m).rev() {
            let first = i.saturating_sub(kl);
            let xi = x[i];
            let row = &ab[at(i, first)..at(i, i)];
            for (v, a) in x[first..i].iter_mut().zip(row) {
                *v -= a * xi;
            }
        }
    };

    let b = rhs.values();
    let bound = tol * euclid(b).max(1.0);
    let mut x = vec![0.0; m];
    sweep(b, &mut x);
    let mut r = vec![0.0; m];
    let mut dx = vec![0.0; m];
    let mut res = residual(op, &x, b, &mut r);
    for _ in 0..2 {
        if res <= bound {
            break;
        }
        sweep(&r, &mut dx);
        x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
        res = residual(op, &x, b, &mut r);
    }
    let floor = 64.0 * f64::EPSILON * (scale * euclid(&x) + euclid(b));
    if !(res <= bound.max(floor)) {
        return Err(SolveError::Singular(format!(
            "residual {res:.3e} above {bound:.3e} after refinement (unstable without pivoting)"
        )));
    }
    Field::new(grid, x).map_err(|_| SolveError::Singular("non-finite solution".into()))
}

/// Gaussian elimination with partial pivoting in band storage, for any
/// dimension: the bandwidth is 1 in 1D and `N` in 2D, so a 2D solve costs
/// `O(N⁴)`. Handles indefinite operators; a pivot below `PIVOT_TOL` times
/// the operator scale is reported as singular. Up to two steps of iterative
/// refinement follow.
pub fn solve_band_lu(op: &LinearOperator, rhs: &Field, tol: f64) -> Result<Field, SolveError> {
    check_inputs(op, rhs, tol)?;
    let grid = *op.grid();
    let m = grid.len();
    let kl = if grid.dim() == 1 { 1 } else { grid.n() };
    // row i stores columns i-kl ..= i+2kl (fill-in from row swaps)
    let width = 3 * kl + 1;
    let at = |i: usize, j: usize| i * width + (j + kl - i);
    let mut ab = vec![0.0; m * width];
    for i in 0..m {
        ab[at(i, i)] = op.diag_entry(i);
        op.for_each_offdiag(i, |j, v| ab[at(i, j)] = v);
    }
    let scale = op.norm_inf();
    if scale == 0.0 {
        return Err(SolveError::Singular("zero operator".into()));
    }

    let mut piv = vec![0usize; m];
    // last nonzero column per row; grows past i+kl only through row swaps
    let mut end: Vec<usize> = (0..m).map(|i| (i + kl).min(m - 1)).collect();
    for k in 0..m {
        let last_row = (k + kl).min(m - 1);
        let p = (k..=last_row)
            .max_by(|&a, &b| ab[at(a, k)].abs().total_cmp(&ab[at(b, k)].abs()))
            .unwrap();
        piv[k] = p;
        if !(ab[at(p, k)].abs() >= PIVOT_TOL * scale) {
            return Err(SolveError::Singular(format!(
                "pivot {:.3e} at row {k} below threshold",
                ab[at(p, k)]
            )));
        }
        if p != k {
            for j in k..=end[k].max(end[p]) {
                ab.swap(at(k, j), at(p, j));
            }
            end.swap(k, p);
        }
        let pivot = ab[at(k, k)];
        let span = end[k] - k;
        for i in k + 1..=last_row {
            let l = ab[at(i, k)] / pivot;
            ab[at(i, k)] = l;
            if l != 0.0 {
                let (upper, lower) = ab.split_at_mut(i * width);
                let src = &upper[at(k, k + 1)..at(k, k + 1) + span];
                let start = at(i, k + 1) - i * width;
                for (a, b) in lower[start..start + span].iter_mut().zip(src) {
                    *a -= l * b;
                }
                end[i] = end[i].max(end[k]);
            }
        }
    }

    let sweep = |b: &[f64], x: &mut [f64]| {
        x.copy_from_slice(b);
        for k in 0..m {
            x.swap(k, piv[k]);
            let xk = x[k];
            for i in k + 1..=(k + kl).min(m - 1) {
                x[i] -= ab[at(i, k)] * xk;
            }
        }
        for k in (0..m).rev() {
            let span = end[k] - k;
            let row = &ab[at(k, k + 1)..at(k, k + 1) + span];
            let dot: f64 = row.iter().zip(&x[k + 1..k + 1 + span]).map(|(a, b)| a * b).sum();
            x[k] = (x[k] - dot) / ab[at(k, k)];
        }
    };

    let b = rhs.values();
    let bound = tol * euclid(b).max(1.0);
    let mut x = vec![0.0; m];
    sweep(b, &mut x);
    let mut r = vec![0.0; m];
    let mut dx = vec![0.0; m];
    let mut res = residual(op, &x, b, &mut r);
    for _ in 0..2 {
        if res <= bound {
            break;
        }
        sweep(&r, &mut dx);
        x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
        res = residual(op, &x, b, &mut r);
    }
    let floor = 64.0 * f64::EPSILON * (scale * euclid(&x) + euclid(b));
    if !(res <= bound.max(floor)) {
        return Err(SolveError::Singular(format!(
            "residual {res:.3e} above {bound:.3e} after refinement (ill-conditioned)"
        )));
    }
    Field::new(grid, x).map_err(|_| SolveError::Singular("non-finite solution".into()))
}
