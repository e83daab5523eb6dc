//! Reference solvers from other algorithm families (enumeration and first-order),
//! kept independent of the homotopy engine to cross-check it.

use nalgebra::{DMatrix, DVector};

use crate::error::{input, Error, Result};
use crate::lasso::kkt_residual;
use crate::lcp::LcpSolution;
use crate::linalg::{gather, inf_norm, pinv_solve, principal_submatrix, Spectral};
use crate::problem::QuadraticProblem;

/// Largest dimension accepted by [`brute_force_lcp`].
pub const BRUTE_FORCE_MAX_DIM: usize = 12;

/// Outcome of a first-order oracle. `residual` comes from [`kkt_residual`].
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub method: &'static str,
    pub objective: f64,
    pub iterate: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// First feasible active set in lexicographic (bitmask) order, with the
/// minimal-norm `z` on that set.
pub fn brute_force_lcp(m: &DMatrix<f64>, q: &DVector<f64>) -> Result<LcpSolution> {
    let d = q.len();
    if d == 0 || d > BRUTE_FORCE_MAX_DIM {
        return input(format!(
            "brute force needs 1 ≤ d ≤ {BRUTE_FORCE_MAX_DIM}, got {d}"
        ));
    }
    if m.nrows() != d || m.ncols() != d {
        return input("M and q dimensions differ");
    }
    let tol = 1e-10 * (1.0 + inf_norm(q));
    for mask in 0u32..(1u32 << d) {
        let set: Vec<usize> = (0..d).filter(|i| mask >> i & 1 == 1).collect();
        let mut z = DVector::zeros(d);
        if !set.is_empty() {
            let rhs = -gather(q, &set);
            let ls = pinv_solve(&principal_submatrix(m, &set), &rhs);
            if ls.residual > tol * (1.0 + ls.x.norm()) {
                continue;
            }
            for (k, &i) in set.iter().enumerate() {
                z[i] = ls.x[k];
            }
        }
        if z.min() < -tol {
            continue;
        }
        let w = q + m * &z;
        if (0..d).any(|i| mask >> i & 1 == 0 && w[i] < -tol) {
            continue;
        }
        let z = z.map(|v| v.max(0.0));
        let w = q + m * &z;
        let active_set = (0..d).filter(|&i| z[i] > 0.0).collect();
        return Ok(LcpSolution { w, z, active_set });
    }
    Err(Error::Solver("no feasible active set: the LCP is infeasible".into()))
}

fn first_order(
    p: &QuadraticProblem,
    lambda: f64,
    max_iter: usize,
    tol: f64,
    signed: bool,
) -> Result<OracleReport> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return input(format!("lambda must be finite and positive, got {lambda}"));
    }
    let d = p.dim();
    let lmax = Spectral::new(p.m()).max_eigenvalue();
    let mut x = DVector::zeros(d);
    let mut iterations = 0;
    let mut converged = lmax <= 0.0;
    if !converged {
        let step = 1.0 / lmax;
        let thresh = lambda * step;
        while iterations < max_iter {
            let u = &x - p.grad_unchecked(&x) * step;
            let next = if signed {
                u.map(|v| v.signum() * (v.abs() - thresh).max(0.0))
            } else {
                u.map(|v| (v - thresh).max(0.0))
            };
            iterations += 1;
            let change = inf_norm(&(&next - &x));
            x = next;
            if change <= tol {
                converged = true;
                break;
            }
        }
    }
    Ok(OracleReport {
        method: if signed { "ista" } else { "projected_gradient" },
        objective: p.lasso_unchecked(&x, lambda),
        residual: kkt_residual(p, &x, lambda, signed),
        iterate: x,
        iterations,
        converged,
    })
}

/// Proximal gradient (soft thresholding) with step `1/λ_max(M)`, from `x = 0`.
pub fn ista_lasso(p: &QuadraticProblem, lambda: f64, max_iter: usize, tol: f64) -> Result<OracleReport> {
    first_order(p, lambda, max_iter, tol, true)
}

/// Projected gradient on `x ≥ 0` with step `1/λ_max(M)`, from `x = 0`.
pub fn projected_gradient_positive(
    p: &QuadraticProblem,
    lambda: f64,
    max_iter: usize,
    tol: f64,
) -> Result<OracleReport> {
    first_order(p, lambda, max_iter, tol, false)
}
