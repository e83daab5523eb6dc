//! Quadratic problems `ℓ(x) = ½⟨x, Mx⟩ − ⟨r, x⟩ + c` and the lasso objective.
//!
//! Random instances use ChaCha20 (`rand_chacha::ChaCha20Rng::seed_from_u64`)
//! and standard normals from `rand_distr::StandardNormal` (ziggurat). The
//! design `X` is drawn first, row by row, then `y`. Versions are pinned by
//! `Cargo.lock`, so a seed always reproduces the same instance bit for bit.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::linalg::{all_finite, Spectral};

pub const SYMMETRY_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-8;
pub const SPAN_TOL: f64 = 1e-8;
pub const DESIGN_TOL: f64 = 1e-12;

/// Least-squares design `(X, y)` behind a problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    m: DMatrix<f64>,
    r: DVector<f64>,
    constant: f64,
    design: Option<Design>,
}

/// Measured values of the structural invariants of a [`QuadraticProblem`].
#[derive(Debug, Clone, Copy)]
pub struct ProblemInvariants {
    /// `max |M_ij − M_ji|`.
    pub asymmetry: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// `‖(I − P_span M) r‖ / ‖r‖` (0 when `r = 0`).
    pub span_residual: f64,
    /// Largest relative mismatch against `XᵀX`, `Xᵀy`, `½‖y‖²`.
    pub design_mismatch: Option<f64>,
}

impl ProblemInvariants {
    /// With a design, `r = Xᵀy ∈ span XᵀX` exactly, and the eigenvalue-cutoff
    /// span test is ill-posed for eigenvalues near the cutoff (the component of
    /// `r` along them is `O(√λ)`), so only the design identities are checked.
    pub fn holds(&self) -> bool {
        let span_ok = match self.design_mismatch {
            Some(e) => e <= DESIGN_TOL,
            None => self.span_residual <= SPAN_TOL,
        };
        self.asymmetry <= SYMMETRY_TOL
            && self.min_eigenvalue >= -PSD_TOL * self.max_eigenvalue.max(0.0)
            && span_ok
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

impl QuadraticProblem {
    /// Builds a problem from `(M, r, c)` and checks symmetry, PSD-ness and `r ∈ span M`.
    pub fn new(m: DMatrix<f64>, r: DVector<f64>, constant: f64) -> Result<Self> {
        Self::assemble(m, r, constant, None)
    }

    /// `M = XᵀX`, `r = Xᵀy`, `c = ½‖y‖²`, so that `ℓ(x) = ½‖Xx − y‖²`.
    pub fn from_design(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return input("design must have n ≥ 1 rows and d ≥ 1 columns");
        }
        if y.len() != x.nrows() {
            return input(format!(
                "y has length {} but X has {} rows",
                y.len(),
                x.nrows()
            ));
        }
        if !all_finite(x.iter().chain(y.iter()).cloned()) {
            return input("design contains non-finite entries");
        }
        let gram = x.tr_mul(&x);
        let m = (&gram + gram.transpose()) * 0.5;
        let r = x.tr_mul(&y);
        let constant = 0.5 * y.norm_squared();
        Self::assemble(m, r, constant, Some(Design { x, y }))
    }

    pub(crate) fn assemble(
        m: DMatrix<f64>,
        r: DVector<f64>,
        constant: f64,
        design: Option<Design>,
    ) -> Result<Self> {
        let d = r.len();
        if d == 0 {
            return input("dimension must be positive");
        }
        if m.nrows() != d || m.ncols() != d {
            return input(format!(
                "M is {}x{} but r has length {}",
                m.nrows(),
                m.ncols(),
                d
            ));
        }
        if !all_finite(m.iter().chain(r.iter()).cloned()) || !constant.is_finite() {
            return input("problem contains non-finite entries");
        }
        if let Some(des) = &design {
            if des.x.ncols() != d || des.y.len() != des.x.nrows() {
                return input("design dimensions do not match the problem");
            }
        }
        let p = QuadraticProblem {
            m,
            r,
            constant,
            design,
        };
        let inv = p.invariants();
        if !inv.holds() {
            return input(format!("problem invariants violated: {inv:?}"));
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.r.len()
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn r(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn design(&self) -> Option<&Design> {
        self.design.as_ref()
    }

    pub fn invariants(&self) -> ProblemInvariants {
        let d = self.dim();
        let mut asymmetry = 0.0_f64;
        for i in 0..d {
            for j in 0..d {
                asymmetry = asymmetry.max((self.m[(i, j)] - self.m[(j, i)]).abs());
            }
        }
        let spec = Spectral::new(&self.m);
        let rn = self.r.norm();
        let span_residual = if rn == 0.0 {
            0.0
        } else {
            spec.kernel_residual(&self.r) / rn
        };
        let design_mismatch = self.design.as_ref().map(|des| {
            let gram = des.x.tr_mul(&des.x);
            let xty = des.x.tr_mul(&des.y);
            let scale_m = gram.amax().max(1.0);
            let scale_r = xty.amax().max(1.0);
            let em = (&gram - &self.m).amax() / scale_m;
            let er = (&xty - &self.r).amax() / scale_r;
            let ec = rel_err(self.constant, 0.5 * des.y.norm_squared());
            em.max(er).max(ec)
        });
        ProblemInvariants {
            asymmetry,
            min_eigenvalue: spec.min_eigenvalue(),
            max_eigenvalue: spec.max_eigenvalue(),
            span_residual,
            design_mismatch,
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return input(format!(
                "vector has length {} but the problem has dimension {}",
                x.len(),
                self.dim()
            ));
        }
        Ok(())
    }

    /// `½⟨x, Mx⟩ − ⟨r, x⟩ + c`.
    pub fn loss(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.loss_unchecked(x))
    }

    pub(crate) fn loss_unchecked(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.m * x)) - self.r.dot(x) + self.constant
    }

    /// `∇ℓ(x) = Mx − r`.
    pub fn loss_grad(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(self.grad_unchecked(x))
    }

    pub(crate) fn grad_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.m * x - &self.r
    }

    /// `ℓ(x) + λ‖x‖₁`.
    pub fn lasso_objective(&self, x: &DVector<f64>, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return input(format!("lambda must be finite and ≥ 0, got {lambda}"));
        }
        self.check_dim(x)?;
        Ok(self.lasso_unchecked(x, lambda))
    }

    pub(crate) fn lasso_unchecked(&self, x: &DVector<f64>, lambda: f64) -> f64 {
        self.loss_unchecked(x) + lambda * x.lp_norm(1)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ProblemRecord::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: ProblemRecord = serde_json::from_str(text)?;
        rec.try_into()
    }
}

/// Draws `X ∈ R^{n×d}` and `y ∈ R^n` with i.i.d. standard normal entries and
/// returns the least-squares problem they define.
pub fn random_instance(seed: u64, n: usize, d: usize) -> Result<QuadraticProblem> {
    if n == 0 || d == 0 {
        return input("n and d must be positive");
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        entries.push(rng.sample::<f64, _>(StandardNormal));
    }
    let x = DMatrix::from_row_slice(n, d, &entries);
    let y = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    QuadraticProblem::from_design(x, y)
}

#[derive(Debug, Serialize, Deserialize)]
struct DesignRecord {
    #[serde(rename = "X")]
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

/// On-disk form: `{dim, M (row-major), r, constant, design?: {X, y}}`.
#[derive(Debug, Serialize, Deserialize)]
struct ProblemRecord {
    dim: usize,
    #[serde(rename = "M")]
    m: Vec<Vec<f64>>,
    r: Vec<f64>,
    constant: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    design: Option<DesignRecord>,
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return input("ragged matrix rows");
    }
    let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

impl From<&QuadraticProblem> for ProblemRecord {
    fn from(p: &QuadraticProblem) -> Self {
        ProblemRecord {
            dim: p.dim(),
            m: matrix_rows(&p.m),
            r: p.r.iter().cloned().collect(),
            constant: p.constant,
            design: p.design.as_ref().map(|d| DesignRecord {
                x: matrix_rows(&d.x),
                y: d.y.iter().cloned().collect(),
            }),
        }
    }
}

impl TryFrom<ProblemRecord> for QuadraticProblem {
    type Error = Error;

    fn try_from(rec: ProblemRecord) -> Result<Self> {
        if rec.r.len() != rec.dim || rec.m.len() != rec.dim {
            return input("record dimensions disagree with `dim`");
        }
        let m = matrix_from_rows(&rec.m, rec.dim)?;
        let r = DVector::from_vec(rec.r);
        let design = match rec.design {
            Some(des) => {
                let x = matrix_from_rows(&des.x, rec.dim)?;
                Some(Design {
                    x,
                    y: DVector::from_vec(des.y),
                })
            }
            None => None,
        };
        QuadraticProblem::assemble(m, r, rec.constant, design)
    }
}
