//! Positive and signed lasso, their regularization paths in `s = 1/λ`, and
//! the monotonicity functionals of the scaled path `s ↦ s·x(s)`.
//!
//! The signed lasso is always solved through the doubled positive problem
//! on `y = (x₊, x₋)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{input, Result};
use crate::lcp::{solve_lcp, trace_parametric_path, PiecewisePath};
use crate::output::fmt_f64;
use crate::problem::{Design, QuadraticProblem};

/// Slope below which a coordinate of the scaled path counts as decreasing.
pub const MONOTONE_TOL: f64 = 1e-10;

/// `M̃ = [[M, −M], [−M, M]]`, `r̃ = (r, −r)`, design `[X, −X]`, same constant.
pub fn double_problem(p: &QuadraticProblem) -> QuadraticProblem {
    let d = p.dim();
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(p.m());
    m.view_mut((d, d), (d, d)).copy_from(p.m());
    m.view_mut((0, d), (d, d)).copy_from(&(-p.m()));
    m.view_mut((d, 0), (d, d)).copy_from(&(-p.m()));
    let mut r = DVector::zeros(2 * d);
    r.rows_mut(0, d).copy_from(p.r());
    r.rows_mut(d, d).copy_from(&(-p.r()));
    let design = p.design().map(|des| {
        let n = des.x.nrows();
        let mut x = DMatrix::zeros(n, 2 * d);
        x.view_mut((0, 0), (n, d)).copy_from(&des.x);
        x.view_mut((0, d), (n, d)).copy_from(&(-&des.x));
        Design {
            x,
            y: des.y.clone(),
        }
    });
    QuadraticProblem::assemble(m, r, p.constant(), design)
        .expect("the doubled problem inherits symmetry, PSD-ness and the span condition")
}

/// `y ↦ y_pos − y_neg` for a `2d` vector.
pub fn recombine(y: &DVector<f64>) -> DVector<f64> {
    let d = y.len() / 2;
    y.rows(0, d) - y.rows(d, d)
}

/// `x ↦ (x₊, x₋)`.
pub fn split_signed(x: &DVector<f64>) -> DVector<f64> {
    let d = x.len();
    DVector::from_iterator(
        2 * d,
        x.iter().map(|v| v.max(0.0)).chain(x.iter().map(|v| (-v).max(0.0))),
    )
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return input(format!("lambda must be finite and positive, got {lambda}"));
    }
    Ok(())
}

/// Minimizer of `ℓ(x) + λ‖x‖₁` over `x ≥ 0`, from the LCP `(M, −r + λ𝟙)`.
pub fn solve_positive_lasso(p: &QuadraticProblem, lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    let q = DVector::from_element(p.dim(), lambda) - p.r();
    Ok(solve_lcp(p.m(), &q)?.z)
}

/// Minimizer of `ℓ(x) + λ‖x‖₁`.
pub fn solve_lasso(p: &QuadraticProblem, lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    let y = solve_positive_lasso(&double_problem(p), lambda)?;
    Ok(recombine(&y))
}

/// Natural residual of the lasso optimality conditions at `x`.
///
/// Signed: `‖x − soft(x − ∇ℓ(x), λ)‖∞`, which vanishes exactly when
/// `−∇ℓ(x) ∈ λ ∂‖x‖₁`. Positive: `max_i |min(x_i, v_i)|` with
/// `v = ∇ℓ(x) + λ𝟙`, the LCP residual of `(v, x)`.
pub fn kkt_residual(p: &QuadraticProblem, x: &DVector<f64>, lambda: f64, signed: bool) -> f64 {
    let g = p.grad_unchecked(x);
    if signed {
        x.iter()
            .zip(g.iter())
            .map(|(&xi, &gi)| {
                let u = xi - gi;
                let prox = u.signum() * (u.abs() - lambda).max(0.0);
                (xi - prox).abs()
            })
            .fold(0.0, f64::max)
    } else {
        x.iter()
            .zip(g.iter())
            .map(|(&xi, &gi)| xi.min(gi + lambda).abs())
            .fold(0.0, f64::max)
    }
}

/// Regularization path `s ↦ x(s)` with `λ = 1/s`.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoPath {
    base: PiecewisePath,
    signed: bool,
    dim: usize,
}

/// Path of the positive (`signed = false`) or signed lasso on `[0, s_max]`.
pub fn trace_lasso_path(p: &QuadraticProblem, s_max: f64, signed: bool) -> Result<LassoPath> {
    let base = if signed {
        let pp = double_problem(p);
        trace_parametric_path(pp.m(), pp.r(), s_max)?
    } else {
        trace_parametric_path(p.m(), p.r(), s_max)?
    };
    Ok(LassoPath {
        base,
        signed,
        dim: p.dim(),
    })
}

impl LassoPath {
    /// Wraps an existing path over the native (`2d` coordinates when `signed`) problem.
    pub fn from_base(base: PiecewisePath, signed: bool) -> Result<Self> {
        let n = base.dim();
        if signed && !n.is_multiple_of(2) {
            return input("a signed path needs an even number of coordinates");
        }
        let dim = if signed { n / 2 } else { n };
        Ok(LassoPath { base, signed, dim })
    }

    pub fn base(&self) -> &PiecewisePath {
        &self.base
    }

    pub fn signed(&self) -> bool {
        self.signed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn s_max(&self) -> f64 {
        self.base.s_max()
    }

    pub fn first_breakpoint(&self) -> Option<f64> {
        self.base.first_breakpoint()
    }

    fn check_s(&self, s: f64, allow_zero: bool) -> Result<()> {
        let lower_ok = if allow_zero { s >= 0.0 } else { s > 0.0 };
        if !lower_ok || !s.is_finite() || s > self.s_max() {
            return input(format!(
                "s = {s} outside the path range (0, {}]",
                self.s_max()
            ));
        }
        Ok(())
    }

    /// `s·x(s)` in the original coordinates (recombined when signed).
    pub fn scaled_at(&self, s: f64) -> Result<DVector<f64>> {
        self.check_s(s, true)?;
        let z = self.base.z_at(s);
        Ok(if self.signed { recombine(&z) } else { z })
    }

    /// `x(s) = z(s)/s`, a lasso minimizer at `λ = 1/s`.
    pub fn solution_at(&self, s: f64) -> Result<DVector<f64>> {
        self.check_s(s, false)?;
        Ok(self.scaled_at(s)? / s)
    }

    /// `Lasso(x(s), 1/s)` on the original problem.
    pub fn optimal_value(&self, p: &QuadraticProblem, s: f64) -> Result<f64> {
        let x = self.solution_at(s)?;
        p.lasso_objective(&x, 1.0 / s)
    }

    /// `Σ_segments Σ_i φ(slope_i) · |segment ∩ [0, s]|` over the path coordinates.
    fn integrate_slopes(&self, s: f64, phi: impl Fn(f64) -> f64) -> Result<f64> {
        self.check_s(s, true)?;
        let mut total = 0.0;
        for (k, seg) in self.base.segments().iter().enumerate() {
            if seg.start >= s {
                break;
            }
            let len = self.base.segment_end(k).min(s) - seg.start;
            total += seg.z_slope.iter().map(|&v| phi(v)).sum::<f64>() * len;
        }
        Ok(total)
    }

    /// Accumulated decrease of the path coordinates on `[0, s]`.
    pub fn z_down(&self, s: f64) -> Result<f64> {
        self.integrate_slopes(s, |v| (-v).max(0.0))
    }

    /// Accumulated increase of the path coordinates on `[0, s]`.
    pub fn z_up(&self, s: f64) -> Result<f64> {
        self.integrate_slopes(s, |v| v.max(0.0))
    }

    /// `Σ_i TV(z_i; [0, s])`.
    pub fn total_variation(&self, s: f64) -> Result<f64> {
        self.integrate_slopes(s, f64::abs)
    }

    /// Whether every path coordinate is nondecreasing on the segments meeting `(0, s_max]`.
    pub fn is_monotone(&self, s_max: f64) -> bool {
        self.base
            .segments()
            .iter()
            .take_while(|seg| seg.start < s_max)
            .all(|seg| seg.z_slope.iter().all(|&v| v >= -MONOTONE_TOL))
    }

    /// Max of `⟨z_pos, z_neg⟩` at segment midpoints (0 for positive paths).
    pub fn pair_overlap(&self) -> f64 {
        if !self.signed {
            return 0.0;
        }
        let d = self.dim;
        (0..self.base.segments().len())
            .map(|k| {
                let seg = &self.base.segments()[k];
                let end = self.base.segment_end(k);
                let mid = if end.is_finite() {
                    0.5 * (seg.start + end)
                } else {
                    seg.start + 1.0
                };
                let z = seg.z_at(mid);
                z.rows(0, d).dot(&z.rows(d, d))
            })
            .fold(0.0, f64::max)
    }

    /// CSV with columns `s, x_1..x_d, z_down`; `x(0)` is written as 0.
    pub fn write_csv<W: Write>(&self, grid: &[f64], mut out: W) -> Result<()> {
        let mut header = vec!["s".to_string()];
        header.extend((1..=self.dim).map(|i| format!("x_{i}")));
        header.push("z_down".into());
        writeln!(out, "{}", header.join(","))?;
        for &s in grid {
            let x = if s > 0.0 {
                self.solution_at(s)?
            } else {
                DVector::zeros(self.dim)
            };
            let mut row = vec![fmt_f64(s)];
            row.extend(x.iter().map(|&v| fmt_f64(v)));
            row.push(fmt_f64(self.z_down(s)?));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}
