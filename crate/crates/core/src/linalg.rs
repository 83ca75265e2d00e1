//! Linear solves for the fixed-priority systems
//!
//! ```text
//! values = rhs + beta * P_active * values          (values per start state)
//! occupancy = start + beta * P_active^T * occupancy (occupancy per state)
//! ```
//!
//! where row `i` of `P_active` is the active row `p1[i]` when `active[i]` and
//! the passive row `p0[i]` otherwise. Small systems use a dense LU
//! factorization; large ones a Gauss-Seidel fixed-point sweep, which is a
//! contraction with modulus `beta`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::space::TransitionKernels;

/// Above this many states the solvers switch to fixed-point iteration.
pub const DENSE_LIMIT: usize = 2000;

const FIXED_POINT_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("linear system is singular")]
    Singular,
    #[error("fixed-point iteration did not converge (residual {residual:e})")]
    NonConvergence { residual: f64 },
}

/// Solves `v = rhs + beta * P_active v`.
pub fn solve_values(
    kernels: &TransitionKernels,
    active: &[bool],
    rhs: &[f64],
) -> Result<Vec<f64>, SolverError> {
    if kernels.len() <= DENSE_LIMIT {
        let m = system_matrix(kernels, active, false);
        dense_solve(m, rhs)
    } else {
        values_fixed_point(kernels, active, rhs, None)
    }
}

/// Solves `x = start + beta * P_active^T x`.
pub fn solve_occupancy(
    kernels: &TransitionKernels,
    active: &[bool],
    start: &[f64],
) -> Result<Vec<f64>, SolverError> {
    if kernels.len() <= DENSE_LIMIT {
        let m = system_matrix(kernels, active, true);
        dense_solve(m, start)
    } else {
        occupancy_fixed_point(kernels, active, start)
    }
}

/// `I - beta * P_active` (or its transpose).
pub(crate) fn system_matrix(
    kernels: &TransitionKernels,
    active: &[bool],
    transpose: bool,
) -> DMatrix<f64> {
    let n = kernels.len();
    let beta = kernels.beta();
    let mut m = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        let mut put = |j: usize, v: f64| {
            if transpose {
                m[(j, i)] -= beta * v;
            } else {
                m[(i, j)] -= beta * v;
            }
        };
        if active[i] {
            for &(j, v) in kernels.active_row(i) {
                put(j, v);
            }
        } else {
            put(kernels.passive_target(i), 1.0);
        }
    }
    m
}

pub(crate) fn dense_solve(m: DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
    let b = DVector::from_column_slice(rhs);
    m.lu()
        .solve(&b)
        .map(|x| x.iter().copied().collect())
        .ok_or(SolverError::Singular)
}

/// Gauss-Seidel on `v = rhs + beta * P_active v`, optionally warm-started.
pub(crate) fn values_fixed_point(
    kernels: &TransitionKernels,
    active: &[bool],
    rhs: &[f64],
    warm: Option<&[f64]>,
) -> Result<Vec<f64>, SolverError> {
    let n = kernels.len();
    let beta = kernels.beta();
    let mut v = warm.map_or_else(|| rhs.to_vec(), <[f64]>::to_vec);
    for _ in 0..MAX_SWEEPS {
        let mut change = 0.0f64;
        for i in 0..n {
            let next = if active[i] {
                kernels
                    .active_row(i)
                    .iter()
                    .map(|&(j, p)| p * v[j])
                    .sum::<f64>()
            } else {
                v[kernels.passive_target(i)]
            };
            let updated = rhs[i] + beta * next;
            change = change.max((updated - v[i]).abs());
            v[i] = updated;
        }
        if change <= FIXED_POINT_TOL * (1.0 - beta) {
            return Ok(v);
        }
    }
    Err(SolverError::NonConvergence {
        residual: values_residual(kernels, active, rhs, &v),
    })
}

fn occupancy_fixed_point(
    kernels: &TransitionKernels,
    active: &[bool],
    start: &[f64],
) -> Result<Vec<f64>, SolverError> {
    // Jacobi sweep: the transposed operator scatters mass forward.
    let n = kernels.len();
    let beta = kernels.beta();
    let mut x = start.to_vec();
    let mut next = vec![0.0; n];
    for _ in 0..MAX_SWEEPS {
        next.copy_from_slice(start);
        for i in 0..n {
            if active[i] {
                for &(j, p) in kernels.active_row(i) {
                    next[j] += beta * p * x[i];
                }
            } else {
                next[kernels.passive_target(i)] += beta * x[i];
            }
        }
        let change = x
            .iter()
            .zip(&next)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        std::mem::swap(&mut x, &mut next);
        if change <= FIXED_POINT_TOL * (1.0 - beta) {
            return Ok(x);
        }
    }
    Err(SolverError::NonConvergence { residual: f64::NAN })
}

/// Sup-norm of `rhs + beta * P_active v - v`.
pub fn values_residual(
    kernels: &TransitionKernels,
    active: &[bool],
    rhs: &[f64],
    v: &[f64],
) -> f64 {
    let beta = kernels.beta();
    (0..kernels.len())
        .map(|i| {
            let next = if active[i] {
                kernels
                    .active_row(i)
                    .iter()
                    .map(|&(j, p)| p * v[j])
                    .sum::<f64>()
            } else {
                v[kernels.passive_target(i)]
            };
            (rhs[i] + beta * next - v[i]).abs()
        })
        .fold(0.0, f64::max)
}
