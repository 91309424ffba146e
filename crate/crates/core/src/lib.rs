//! Penalized bilateral obstacle optimal control where both obstacles are the
//! controls, solved with a damped-Newton Gauss–Seidel iteration on uniform
//! finite-difference grids.

pub mod cli;
pub mod grid;
pub mod linsolve;
pub mod oracle;
pub mod penalty;
pub mod solver;
