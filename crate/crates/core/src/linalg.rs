//! Dense helpers: rank-revealing least squares and unitary exponentials.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::pauli::CMatrix;

/// Householder QR with column pivoting on the largest remaining column norm,
/// `A P = Q R`. Built for tall systems (`rows >= cols`).
#[derive(Clone, Debug)]
pub struct PivotedQr {
    /// Householder vectors below the diagonal, `R` on and above it.
    factors: DMatrix<f64>,
    /// Leading entries of the Householder vectors.
    heads: Vec<f64>,
    /// `perm[j]` is the original column stored at position `j`.
    perm: Vec<usize>,
}

impl PivotedQr {
    pub fn factor(a: &DMatrix<f64>) -> Self {
        let (rows, cols) = a.shape();
        assert!(rows >= cols, "PivotedQr expects a tall matrix");
        let mut f = a.clone();
        let mut perm: Vec<usize> = (0..cols).collect();
        let mut heads = vec![0.0; cols];

        for j in 0..cols {
            let pivot = (j..cols)
                .map(|c| (c, f.view((j, c), (rows - j, 1)).norm_squared()))
                .fold((j, -1.0), |best, cand| if cand.1 > best.1 { cand } else { best })
                .0;
            if pivot != j {
                f.swap_columns(j, pivot);
                perm.swap(j, pivot);
            }

            let norm = f.view((j, j), (rows - j, 1)).norm();
            if norm == 0.0 {
                heads[j] = 0.0;
                continue;
            }
            let x0 = f[(j, j)];
            let alpha = if x0 >= 0.0 { -norm } else { norm };
            // v = x - alpha e1, stored unnormalized with head v0.
            let v0 = x0 - alpha;
            let vnorm_sq = v0 * v0 + (norm * norm - x0 * x0);
            heads[j] = v0;
            f[(j, j)] = alpha;
            if vnorm_sq == 0.0 {
                continue;
            }
            let scale = 2.0 / vnorm_sq;
            for c in j + 1..cols {
                let mut dot = v0 * f[(j, c)];
                for r in j + 1..rows {
                    dot += f[(r, j)] * f[(r, c)];
                }
                let s = scale * dot;
                f[(j, c)] -= s * v0;
                for r in j + 1..rows {
                    let vr = f[(r, j)];
                    f[(r, c)] -= s * vr;
                }
            }
        }
        Self {
            factors: f,
            heads,
            perm,
        }
    }

    pub fn cols(&self) -> usize {
        self.factors.ncols()
    }

    pub fn rows(&self) -> usize {
        self.factors.nrows()
    }

    pub fn r_diagonal(&self) -> Vec<f64> {
        (0..self.cols()).map(|j| self.factors[(j, j)].abs()).collect()
    }

    /// Number of diagonal entries of `R` above `rel_tol * |R_00|`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let diag = self.r_diagonal();
        let lead = diag.first().copied().unwrap_or(0.0);
        diag.iter().filter(|&&d| d > rel_tol * lead).count()
    }

    /// `|R_00| / |R_kk|` for the last column, a cheap lower bound on the
    /// 2-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        let diag = self.r_diagonal();
        match (diag.first(), diag.last()) {
            (Some(&a), Some(&b)) if b > 0.0 => a / b,
            _ => f64::INFINITY,
        }
    }

    /// Applies `Q^T` in place.
    fn apply_qt(&self, b: &mut DMatrix<f64>) {
        let (rows, cols) = (self.rows(), self.cols());
        for j in 0..cols {
            let v0 = self.heads[j];
            let mut vnorm_sq = v0 * v0;
            for r in j + 1..rows {
                vnorm_sq += self.factors[(r, j)] * self.factors[(r, j)];
            }
            if vnorm_sq == 0.0 {
                continue;
            }
            let scale = 2.0 / vnorm_sq;
            for c in 0..b.ncols() {
                let mut dot = v0 * b[(j, c)];
                for r in j + 1..rows {
                    dot += self.factors[(r, j)] * b[(r, c)];
                }
                let s = scale * dot;
                b[(j, c)] -= s * v0;
                for r in j + 1..rows {
                    b[(r, c)] -= s * self.factors[(r, j)];
                }
            }
        }
    }

    /// Minimum-residual solution of `A X = B`, one column per right-hand side.
    /// Assumes full column rank.
    pub fn solve_least_squares(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.rows());
        let cols = self.cols();
        let mut qtb = b.clone();
        self.apply_qt(&mut qtb);
        let mut x = DMatrix::zeros(cols, b.ncols());
        for c in 0..b.ncols() {
            let mut y = vec![0.0; cols];
            for i in (0..cols).rev() {
                let mut acc = qtb[(i, c)];
                for k in i + 1..cols {
                    acc -= self.factors[(i, k)] * y[k];
                }
                y[i] = acc / self.factors[(i, i)];
            }
            for (pos, &orig) in self.perm.iter().enumerate() {
                x[(orig, c)] = y[pos];
            }
        }
        x
    }
}

/// `exp(-i h dt)` for Hermitian `h` through its eigendecomposition, unitary
/// to rounding.
pub fn unitary_exp(h: &CMatrix, dt: f64) -> CMatrix {
    let eig = h.clone().symmetric_eigen();
    let phases: DVector<Complex64> = eig.eigenvalues.map(|l| Complex64::from_polar(1.0, -l * dt));
    let scaled = DMatrix::from_fn(h.nrows(), h.ncols(), |r, c| eig.eigenvectors[(r, c)] * phases[c]);
    scaled * eig.eigenvectors.adjoint()
}

/// `max |U^dagger U - I|` over entries.
pub fn unitarity_error(u: &CMatrix) -> f64 {
    let prod = u.adjoint() * u;
    let dim = u.nrows();
    let mut worst = 0.0f64;
    for r in 0..dim {
        for c in 0..dim {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((prod[(r, c)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}
