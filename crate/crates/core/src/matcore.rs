//! Dense symmetric matrix utilities.
//!
//! Everything here is a pure function of its inputs. Eigendecompositions use
//! Householder tridiagonalization followed by implicit symmetric QR (via
//! `nalgebra::SymmetricEigen`), then a fixed ordering and sign convention so
//! results are reproducible bit-for-bit across runs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative PSD tolerance: a matrix passes when its minimum eigenvalue is at
/// least `-PSD_TOL * max(1, ||M||_F)`.
pub const PSD_TOL: f64 = 1e-9;

const EIGEN_MAX_ITER: usize = 10_000;

/// Real symmetric matrix. The upper triangle is authoritative: construction
/// mirrors it into the lower triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Builds a symmetric matrix from `m`, copying the upper triangle down.
    pub fn new(mut m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidArgument("symmetric matrix of order 0".into()));
        }
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                m[(i, j)] = m[(j, i)];
            }
        }
        Ok(Self(m))
    }

    /// Symmetrizes as `(m + mᵀ)/2`. Useful for products that are symmetric
    /// only up to rounding.
    pub fn symmetrize(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "cannot symmetrize a {}x{} matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self((m + m.transpose()) * 0.5))
    }

    pub fn identity(n: usize) -> Self {
        assert!(n > 0, "order must be positive");
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "order must be positive");
        Self(DMatrix::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        assert!(!d.is_empty(), "order must be positive");
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn eigen(&self) -> Result<EigenDecomposition> {
        eigen(self)
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Eigenvalues sorted descending with matching orthonormal eigenvectors in
/// the columns of `eigenvectors`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        &self.eigenvectors * lambda * self.eigenvectors.transpose()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }
}

/// Symmetric eigendecomposition with eigenvalues in descending order.
///
/// Each eigenvector is normalized so that its first component with magnitude
/// above `1e-12` is positive.
pub fn eigen(m: &SymMatrix) -> Result<EigenDecomposition> {
    let n = m.order();
    let se = nalgebra::SymmetricEigen::try_new(m.0.clone(), f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Eigen(format!("QR iteration did not converge (order {n})")))?;
    if se.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[b]
            .partial_cmp(&se.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(se.eigenvalues[src]);
        let mut col = se.eigenvectors.column(src).clone_owned();
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        vectors.set_column(dst, &col);
    }
    Ok(EigenDecomposition {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

pub fn eigenvalues(m: &SymMatrix) -> Result<Vec<f64>> {
    Ok(eigen(m)?.eigenvalues)
}

/// Number of eigenvalues strictly greater than `eps`. Intended for PSD
/// arguments; eigenvalues are used as-is, not in absolute value.
pub fn eps_rank(m: &SymMatrix, eps: f64) -> Result<usize> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be >= 0, got {eps}")));
    }
    Ok(eigenvalues(m)?.iter().filter(|&&l| l > eps).count())
}

/// The `(k+1)`-th largest eigenvalue, i.e. the smallest threshold at which
/// the ε-rank drops to `k` or below.
pub fn empirical_eps(m: &SymMatrix, k: usize) -> Result<f64> {
    if k >= m.order() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be smaller than the order {}",
            m.order()
        )));
    }
    Ok(eigenvalues(m)?[k])
}

/// Sum of the `count` smallest eigenvalues.
pub fn sum_smallest_eigenvalues(m: &SymMatrix, count: usize) -> Result<f64> {
    if count > m.order() {
        return Err(Error::InvalidArgument(format!(
            "count = {count} exceeds order {}",
            m.order()
        )));
    }
    let ev = eigenvalues(m)?;
    Ok(ev[ev.len() - count..].iter().sum())
}

pub fn psd_tolerance(m: &SymMatrix) -> f64 {
    PSD_TOL * m.frobenius_norm().max(1.0)
}

/// Minimum eigenvalue is at least `-PSD_TOL * max(1, ||M||_F)`.
pub fn is_psd(m: &SymMatrix) -> Result<bool> {
    let min = eigen(m)?.min_eigenvalue();
    Ok(min >= -psd_tolerance(m))
}

/// Assembles `[[A, B], [Bᵀ, C]]`.
pub fn block_matrix(a: &SymMatrix, b: &DMatrix<f64>, c: &SymMatrix) -> Result<SymMatrix> {
    let (p, q) = (a.order(), c.order());
    if b.nrows() != p || b.ncols() != q {
        return Err(Error::DimensionMismatch(format!(
            "off-diagonal block is {}x{}, expected {p}x{q}",
            b.nrows(),
            b.ncols()
        )));
    }
    let mut m = DMatrix::zeros(p + q, p + q);
    m.view_mut((0, 0), (p, p)).copy_from(a.as_matrix());
    m.view_mut((0, p), (p, q)).copy_from(b);
    m.view_mut((p, 0), (q, p)).copy_from(&b.transpose());
    m.view_mut((p, p), (q, q)).copy_from(c.as_matrix());
    SymMatrix::new(m)
}

/// Decides whether `[[A, B], [Bᵀ, C]]` is PSD through the Schur complement
/// `C - Bᵀ A⁻¹ B`. Requires `A` positive definite.
pub fn schur_psd_check(a: &SymMatrix, b: &DMatrix<f64>, c: &SymMatrix) -> Result<bool> {
    let (p, q) = (a.order(), c.order());
    if b.nrows() != p || b.ncols() != q {
        return Err(Error::DimensionMismatch(format!(
            "off-diagonal block is {}x{}, expected {p}x{q}",
            b.nrows(),
            b.ncols()
        )));
    }
    let a_min = eigen(a)?.min_eigenvalue();
    let a_tol = 1e-12 * a.frobenius_norm().max(1.0);
    if a_min <= a_tol {
        return Err(Error::Precondition(format!(
            "A must be positive definite (minimum eigenvalue {a_min:e})"
        )));
    }
    let chol = nalgebra::Cholesky::new(a.as_matrix().clone())
        .ok_or_else(|| Error::Precondition("Cholesky factorization of A failed".into()))?;
    let ainv_b = chol.solve(b);
    let complement = c.as_matrix() - b.transpose() * ainv_b;
    let complement = SymMatrix::symmetrize(&complement)?;
    // same scale as a direct test on the assembled block
    let scale = (a.frobenius_norm().powi(2)
        + 2.0 * b.norm_squared()
        + c.frobenius_norm().powi(2))
    .sqrt()
    .max(1.0);
    let min = eigen(&complement)?.min_eigenvalue();
    Ok(min >= -PSD_TOL * scale)
}

/// The three equivalent conditions
/// `[[s I_p, B], [Bᵀ, s I_q]] ⪰ 0`, `s² I_p - B Bᵀ ⪰ 0`, `s² I_q - Bᵀ B ⪰ 0`,
/// each evaluated independently by an eigenvalue test.
pub fn norm_bound_conditions(b: &DMatrix<f64>, s: f64) -> Result<[bool; 3]> {
    let (p, q) = (b.nrows(), b.ncols());
    let block = block_matrix(
        &SymMatrix::new(DMatrix::identity(p, p) * s)?,
        b,
        &SymMatrix::new(DMatrix::identity(q, q) * s)?,
    )?;
    let left = SymMatrix::symmetrize(&(DMatrix::identity(p, p) * (s * s) - b * b.transpose()))?;
    let right = SymMatrix::symmetrize(&(DMatrix::identity(q, q) * (s * s) - b.transpose() * b))?;
    Ok([is_psd(&block)?, is_psd(&left)?, is_psd(&right)?])
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    svd(m).singular_values[0]
}

/// Thin singular value decomposition `M = U diag(σ) Vᵀ`, σ descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

/// One-sided Jacobi SVD. Accurate to working precision even with clustered
/// singular values, which the interior-point scaling relies on.
pub fn svd(m: &DMatrix<f64>) -> Svd {
    if m.nrows() < m.ncols() {
        let t = svd(&m.transpose());
        return Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        };
    }
    let n = m.ncols();
    let mut g = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = g.column(p).norm_squared();
                let beta = g.column(q).norm_squared();
                let gamma = g.column(p).dot(&g.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut g, &mut v] {
                    for i in 0..mat.nrows() {
                        let a = mat[(i, p)];
                        let b = mat[(i, q)];
                        mat[(i, p)] = c * a - s * b;
                        mat[(i, q)] = s * a + c * b;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| g.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let mut u = DMatrix::zeros(m.nrows(), n);
    let mut vs = DMatrix::zeros(n, n);
    let mut sv = DVector::zeros(n);
    for (k, &j) in order.iter().enumerate() {
        sv[k] = norms[j];
        if norms[j] > 0.0 {
            u.set_column(k, &(g.column(j) / norms[j]));
        }
        vs.set_column(k, &v.column(j));
    }
    Svd {
        u,
        singular_values: sv,
        v: vs,
    }
}
