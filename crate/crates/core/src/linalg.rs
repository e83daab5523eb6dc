//! Small dense linear-algebra helpers: spectral projector onto `span M`,
//! the `M†` seminorm and rank-revealing least-squares solves.

use nalgebra::{DMatrix, DVector};

/// Relative singular/eigen-value cutoff below which a direction is treated as null.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Cutoff for span-membership tests. Vectors like `Xᵀy` carry `O(√λ)` along
/// eigenvalues `λ` just under `RANK_CUTOFF`, so only rounding-level
/// eigenvalues count as null there.
pub const SPAN_CUTOFF: f64 = 1e-13;

/// Eigendecomposition of a symmetric PSD matrix with a relative rank cutoff.
#[derive(Debug, Clone)]
pub struct Spectral {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    /// Eigenvector columns whose eigenvalue exceeds the cutoff.
    range: Vec<usize>,
}

impl Spectral {
    pub fn new(m: &DMatrix<f64>) -> Self {
        Self::with_cutoff(m, RANK_CUTOFF)
    }

    /// Treats eigenvalues at or below `rel_cutoff · λ_max` as null.
    pub fn with_cutoff(m: &DMatrix<f64>, rel_cutoff: f64) -> Self {
        let sym = (m + m.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let lmax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        let cutoff = rel_cutoff * lmax;
        let range = (0..eig.eigenvalues.len())
            .filter(|&k| lmax > 0.0 && eig.eigenvalues[k] > cutoff)
            .collect();
        Spectral {
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            range,
        }
    }

    pub fn rank(&self) -> usize {
        self.range.len()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Orthogonal projection onto `span M`.
    pub fn project_span(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for &k in &self.range {
            let col = self.eigenvectors.column(k);
            out += col * col.dot(v);
        }
        out
    }

    /// Norm of the component of `v` orthogonal to `span M`.
    pub fn kernel_residual(&self, v: &DVector<f64>) -> f64 {
        (v - self.project_span(v)).norm()
    }

    /// `M† v`.
    pub fn pinv_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for &k in &self.range {
            let col = self.eigenvectors.column(k);
            out += col * (col.dot(v) / self.eigenvalues[k]);
        }
        out
    }

    /// Seminorm `‖v‖_{M†} = sqrt(<v, M† v>)`.
    pub fn pinv_seminorm(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.pinv_apply(v)).max(0.0).sqrt()
    }
}

/// Seminorm `‖v‖_M = sqrt(<v, M v>)`.
pub fn seminorm(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v)).max(0.0).sqrt()
}

/// Result of a minimal-norm least-squares solve.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub x: DVector<f64>,
    pub rank: usize,
    /// `‖A x − b‖₂`.
    pub residual: f64,
}

/// Minimal-norm least-squares solution of `A x = b` for symmetric `A`,
/// discarding eigenvalues with `|λ| ≤ RANK_CUTOFF · max |λ|`.
///
/// Uses the symmetric eigendecomposition: nalgebra's SVD loses accuracy
/// (third-digit singular values) on some well-conditioned SPD blocks.
pub fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> LeastSquares {
    let n = a.ncols();
    assert!(a.is_square() && b.len() == n, "pinv_solve needs a square system");
    let empty = LeastSquares {
        x: DVector::zeros(n),
        rank: 0,
        residual: b.norm(),
    };
    if n == 0 {
        return empty;
    }
    let eig = ((a + a.transpose()) * 0.5).symmetric_eigen();
    let lmax = eig.eigenvalues.amax();
    if lmax == 0.0 {
        return empty;
    }
    let keep: Vec<usize> = (0..n)
        .filter(|&k| eig.eigenvalues[k].abs() > RANK_CUTOFF * lmax)
        .collect();
    let solve = |rhs: &DVector<f64>| {
        let mut x = DVector::zeros(n);
        for &k in &keep {
            let v = eig.eigenvectors.column(k);
            x += v * (v.dot(rhs) / eig.eigenvalues[k]);
        }
        x
    };
    let mut x = solve(b);
    x += solve(&(b - a * &x));
    let residual = (a * &x - b).norm();
    LeastSquares {
        x,
        rank: keep.len(),
        residual,
    }
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn all_finite(values: impl IntoIterator<Item = f64>) -> bool {
    values.into_iter().all(f64::is_finite)
}

/// Principal submatrix `A_{I,I}`.
pub fn principal_submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

pub fn gather(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_solve_is_accurate_with_clustered_eigenvalues() {
        // eigenvalues 15.22, 15.11, 2.21; nalgebra's SVD solve leaves a 1e-11 residual
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[
                9.70523023745253,
                -3.7071747568609617,
                -5.233651282918156,
                -3.7071747568609617,
                12.585099748184158,
                -3.5332557332358654,
                -5.233651282918156,
                -3.5332557332358654,
                10.249141541891767,
            ],
        );
        let b = DVector::from_vec(vec![0.9830938763757845, 2.9107689198289632, 2.927528817615375]);
        let ls = pinv_solve(&a, &b);
        assert_eq!(ls.rank, 3);
        assert!(ls.residual <= 1e-14, "{:e}", ls.residual);
    }

    #[test]
    fn projector_on_rank_one() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let sp = Spectral::new(&m);
        assert_eq!(sp.rank(), 1);
        let v = DVector::from_vec(vec![1.0, -1.0]);
        assert!(sp.project_span(&v).norm() < 1e-14);
        let u = DVector::from_vec(vec![2.0, 2.0]);
        assert!(sp.kernel_residual(&u) < 1e-14);
        // M† = M / 4 on the span
        assert!((sp.pinv_seminorm(&u) - (u.dot(&(&m * &u)) / 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pinv_solve_min_norm() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 2.0]);
        let ls = pinv_solve(&a, &b);
        assert_eq!(ls.rank, 1);
        assert!((ls.x[0] - 1.0).abs() < 1e-12 && (ls.x[1] - 1.0).abs() < 1e-12);
        assert!(ls.residual < 1e-12);
    }

    #[test]
    fn empty_solve() {
        let a = DMatrix::<f64>::zeros(0, 0);
        let b = DVector::<f64>::zeros(0);
        let ls = pinv_solve(&a, &b);
        assert_eq!(ls.x.len(), 0);
        assert_eq!(ls.rank, 0);
    }
}
