//! Uniform Cartesian grids on the unit interval / unit square with homogeneous
//! Dirichlet boundary, grid functions, and the negative-Laplacian stencil.
//!
//! Only interior nodes are stored. For `dim = 2` the nodes are ordered
//! lexicographically with the first coordinate running fastest:
//!
//! ```text
//! idx = i + j * n      x = (i + 1) h,  y = (j + 1) h
//! ```

use std::ops::{Add, Mul, Sub};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid: dim = {dim}, n = {n} (need dim in {{1, 2}} and n >= 1)")]
    InvalidGrid { dim: usize, n: usize },
    #[error("sampled function is not finite at node {index} (value {value})")]
    SampleError { index: usize, value: f64 },
    #[error("field length {got} does not match grid with {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("field value at node {index} is not finite")]
    NonFinite { index: usize },
}

/// Shape of a uniform grid on `[0, 1]^dim` with `n` interior points per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    n: usize,
    h: f64,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize) -> Result<Self, GridError> {
        if n == 0 || !(1..=2).contains(&dim) {
            return Err(GridError::InvalidGrid { dim, n });
        }
        Ok(Self {
            dim,
            n,
            h: 1.0 / (n as f64 + 1.0),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Interior points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Total number of interior nodes, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h^dim` of one node.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Axis indices (1-based, boundary is 0 and n+1) of a node.
    pub fn multi_index(&self, idx: usize) -> (usize, usize) {
        match self.dim {
            1 => (idx + 1, 0),
            _ => (idx % self.n + 1, idx / self.n + 1),
        }
    }

    /// Coordinates of a node. In 1D the second coordinate is 0.
    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let (i, j) = self.multi_index(idx);
        let x = i as f64 * self.h;
        match self.dim {
            1 => (x, 0.0),
            _ => (x, j as f64 * self.h),
        }
    }
}

pub fn make_grid(dim: usize, n: usize) -> Result<GridSpec, GridError> {
    GridSpec::new(dim, n)
}

/// A grid function on interior nodes. Boundary values are zero and never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Evaluate `func(x, y)` at every interior node (`y` is 0 in 1D).
    pub fn sample<F>(grid: GridSpec, func: F) -> Result<Self, GridError>
    where
        F: Fn(f64, f64) -> f64,
    {
        let mut values = Vec::with_capacity(grid.len());
        for index in 0..grid.len() {
            let (x, y) = grid.coords(index);
            let value = func(x, y);
            if !value.is_finite() {
                return Err(GridError::SampleError { index, value });
            }
            values.push(value);
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        self.grid == other.grid
    }

    pub fn map<F: Fn(f64) -> f64>(&self, func: F) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| func(v)).collect(),
        }
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, other: &Field, func: F) -> Field {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| func(a, b))
                .collect(),
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Field) {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn hadamard(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a * b)
    }

    /// Plain Euclidean inner product of the node vectors (no quadrature weight).
    pub fn dot(&self, other: &Field) -> f64 {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    /// Plain Euclidean norm of the node vector.
    pub fn euclid_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(self)
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(self)
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<&Field> for f64 {
    type Output = Field;
    fn mul(self, rhs: &Field) -> Field {
        rhs.map(|v| self * v)
    }
}

/// `max_i |u_i|`
pub fn sup_norm(u: &Field) -> f64 {
    u.values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Discrete L² norm, `sqrt(h^d Σ u_i²)`.
pub fn l2_norm(u: &Field) -> f64 {
    (u.grid.cell_volume() * u.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// `h^d uᵀ A u`, the discrete analogue of `∫|∇u|²` when `A` is the negative Laplacian.
pub fn dirichlet_energy(op: &LinearOperator, u: &Field) -> f64 {
    u.grid.cell_volume() * u.dot(&op.apply(u))
}

/// `scale * A_h + diag(shift)` where `A_h` is the 3- or 5-point negative
/// Laplacian on interior nodes. The matrix is never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    grid: GridSpec,
    scale: f64,
    shift: Option<Vec<f64>>,
}

impl LinearOperator {
    pub fn neg_laplacian(grid: GridSpec) -> Self {
        Self {
            grid,
            scale: 1.0,
            shift: None,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shift(&self) -> Option<&[f64]> {
        self.shift.as_deref()
    }

    /// Multiply the stencil part by `factor` (the diagonal shift is left alone).
    pub fn scaled(mut self, factor: f64) -> Self {
        self.scale *= factor;
        self
    }

    /// Add `diag(d)` to the operator.
    pub fn with_shift(mut self, d: &Field) -> Self {
        assert_eq!(self.grid, *d.grid(), "shift lives on a different grid");
        match &mut self.shift {
            Some(s) => s.iter_mut().zip(d.values()).for_each(|(a, b)| *a += b),
            None => self.shift = Some(d.values().to_vec()),
        }
        self
    }

    fn stencil_center(&self) -> f64 {
        self.scale * 2.0 * self.grid.dim() as f64 / (self.grid.h() * self.grid.h())
    }

    /// Value of every nonzero off-diagonal entry, `-scale / h²`.
    pub fn offdiag_entry(&self) -> f64 {
        -self.scale / (self.grid.h() * self.grid.h())
    }

    /// Diagonal entry of row `i`.
    pub fn diag_entry(&self, i: usize) -> f64 {
        self.stencil_center() + self.shift.as_ref().map_or(0.0, |s| s[i])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.diag_entry(i)).collect()
    }

    /// Visit the off-diagonal entries `(j, a_ij)` of row `i`.
    pub fn for_each_offdiag<F: FnMut(usize, f64)>(&self, i: usize, mut visit: F) {
        let n = self.grid.n();
        let off = self.offdiag_entry();
        match self.grid.dim() {
            1 => {
                if i > 0 {
                    visit(i - 1, off);
                }
                if i + 1 < n {
                    visit(i + 1, off);
                }
            }
            _ => {
                let (ix, iy) = (i % n, i / n);
                if ix > 0 {
                    visit(i - 1, off);
                }
                if ix + 1 < n {
                    visit(i + 1, off);
                }
                if iy > 0 {
                    visit(i - n, off);
                }
                if iy + 1 < n {
                    visit(i + n, off);
                }
            }
        }
    }

    /// `Σ_{j≠i} a_ij x_j`
    pub fn offdiag_dot(&self, i: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        self.for_each_offdiag(i, |j, a| acc += a * x[j]);
        acc
    }

    /// `out = (scale A_h + D) x` on raw node vectors.
    #[inline(always)]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let len = self.grid.len();
        assert_eq!(x.len(), len);
        assert_eq!(out.len(), len);
        let center = self.stencil_center();
        let off = self.offdiag_entry();
        let n = self.grid.n();
        // line-by-line stencil; rows of the 2D grid are x-lines of length n
        for (line, (xs, os)) in x.chunks(n).zip(out.chunks_mut(n)).enumerate() {
            if n == 1 {
                os[0] = center * xs[0];
            } else {
                os[0] = center * xs[0] + off * xs[1];
                os[n - 1] = center * xs[n - 1] + off * xs[n - 2];
                let inner = os[1..n - 1].iter_mut().zip(&xs[..n - 2]).zip(&xs[1..n - 1]).zip(&xs[2..]);
                for (((o, l), c), r) in inner {
                    *o = center * c + off * (l + r);
                }
            }
            if self.grid.dim() == 2 {
                if line > 0 {
                    let below = &x[(line - 1) * n..line * n];
                    os.iter_mut().zip(below).for_each(|(o, v)| *o += off * v);
                }
                if line + 1 < n {
                    let above = &x[(line + 1) * n..(line + 2) * n];
                    os.iter_mut().zip(above).for_each(|(o, v)| *o += off * v);
                }
            }
        }
        if let Some(s) = &self.shift {
            for ((o, d), v) in out.iter_mut().zip(s).zip(x) {
                *o += d * v;
            }
        }
    }

    pub fn apply(&self, u: &Field) -> Field {
        assert_eq!(self.grid, *u.grid(), "operand lives on a different grid");
        let mut out = vec![0.0; self.grid.len()];
        self.apply_into(u.values(), &mut out);
        Field {
            grid: self.grid,
            values: out,
        }
    }

    /// Row-sum bound on the infinity norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| {
                let mut row = self.diag_entry(i).abs();
                self.for_each_offdiag(i, |_, a| row += a.abs());
                row
            })
            .fold(0.0, f64::max)
    }

    /// Row-major dense copy. Intended for small grids.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let len = self.grid.len();
        (0..len)
            .map(|i| {
                let mut row = vec![0.0; len];
                row[i] = self.diag_entry(i);
                self.for_each_offdiag(i, |j, a| row[j] = a);
                row
            })
            .collect()
    }
}

pub fn assemble_neg_laplacian(grid: GridSpec) -> LinearOperator {
    LinearOperator::neg_laplacian(grid)
}
