//! Dense symmetric linear algebra.
//!
//! Thin contracts over `nalgebra` factorizations: symmetric eigendecomposition,
//! a Cholesky factor that tolerates PSD-singular input, SPD solves, thin SVD and
//! orthonormal complements. All tolerances are relative to the max-abs entry of
//! the input.

use nalgebra::{DMatrix, DVector, SymmetricEigen, QR, SVD};

use crate::error::{Error, Result};
use crate::rng::Gaussian;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative clipping tolerance for [`chol_psd`].
pub const PSD_TOL: f64 = 1e-10;

/// Square symmetric matrix. Construction symmetrizes the input, so
/// `get(i, j) == get(j, i)` holds bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Accepts a square finite matrix that is symmetric up to
    /// `1e-8 * (1 + max|m|)` and stores its symmetric part.
    pub fn new(m: Matrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::dim(format!(
                "symmetric matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        check_finite(&m, "symmetric matrix")?;
        let scale = 1.0 + max_abs(&m);
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-8 * scale {
                    return Err(Error::param(format!(
                        "matrix is not symmetric at ({i}, {j}): {} vs {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        Ok(Self::symmetrize(m))
    }

    /// Stores `(m + mᵀ)/2` without any tolerance check.
    pub fn symmetrize(m: Matrix) -> Self {
        let n = m.nrows();
        let mut out = m;
        for j in 0..n {
            for i in (j + 1)..n {
                let v = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        SymMatrix(out)
    }

    /// Builds from the lower triangle `f(i, j)` with `i >= j`.
    pub fn from_lower_fn(order: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(order, order);
        for j in 0..order {
            for i in j..order {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn identity(order: usize) -> Self {
        SymMatrix(Matrix::identity(order, order))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(Matrix::from_diagonal(&Vector::from_column_slice(d)))
    }

    /// `aᵀa`.
    pub fn gram(a: &Matrix) -> Self {
        Self::symmetrize(a.tr_mul(a))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.order()).map(|i| self.0[(i, i)]).collect()
    }

    /// Principal submatrix on `idx`.
    pub fn principal(&self, idx: &[usize]) -> SymMatrix {
        SymMatrix::from_lower_fn(idx.len(), |i, j| self.0[(idx[i], idx[j])])
    }

    pub fn scaled(&self, c: f64) -> SymMatrix {
        SymMatrix(&self.0 * c)
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    /// `D m D` for diagonal `D = diag(d)`.
    pub fn congruence_diag(&self, d: &[f64]) -> SymMatrix {
        SymMatrix::from_lower_fn(self.order(), |i, j| d[i] * self.0[(i, j)] * d[j])
    }

    /// Inverse of a positive definite matrix.
    pub fn inverse_spd(&self) -> Result<SymMatrix> {
        let inv = solve_spd(self, &Matrix::identity(self.order(), self.order()))?;
        Ok(SymMatrix::symmetrize(inv))
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(*eig_sym(self)?.values.last().expect("order >= 1"))
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        Ok(eig_sym(self)?.values[0])
    }
}

/// Eigenvalues in descending order with orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl Eigen {
    /// `V diag(values) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(l);
        }
        &scaled * self.vectors.transpose()
    }
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn check_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn eig_sym(m: &SymMatrix) -> Result<Eigen> {
    check_finite(m.as_matrix(), "eig_sym input")?;
    let eig = SymmetricEigen::new(m.as_matrix().clone());
    let n = m.order();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(Eigen { values, vectors })
}

/// Lower-triangular `L` with `L Lᵀ = m` for positive semidefinite `m`.
///
/// A plain Cholesky is tried first. When it breaks down the matrix is
/// eigendecomposed, eigenvalues in `[-tol·λ_max, 0)` are clipped to zero, and
/// `L` is recovered from a QR factorization of `Λ^{1/2} Vᵀ`.
pub fn chol_psd(m: &SymMatrix, tol: f64) -> Result<Matrix> {
    chol_psd_scaled(m, tol, None)
}

/// [`chol_psd`] with the clipping threshold `tol·scale` instead of
/// `tol·λ_max(m)`. Useful when `m` is a difference of larger matrices and may
/// be numerically zero.
pub fn chol_psd_scaled(m: &SymMatrix, tol: f64, scale: Option<f64>) -> Result<Matrix> {
    check_finite(m.as_matrix(), "chol_psd input")?;
    if let Some(ch) = m.as_matrix().clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = eig_sym(m)?;
    let lmax = eig.values[0].max(0.0);
    let lmin = *eig.values.last().expect("order >= 1");
    let threshold = tol * scale.unwrap_or(lmax).max(f64::MIN_POSITIVE);
    if lmin < -threshold {
        return Err(Error::NotPsd {
            min_eigenvalue: lmin,
            tolerance: threshold,
        });
    }
    let n = m.order();
    // rows of Λ^{1/2} Vᵀ
    let mut half = eig.vectors.transpose();
    for (k, &l) in eig.values.iter().enumerate() {
        half.row_mut(k).scale_mut(l.max(0.0).sqrt());
    }
    let mut r = QR::new(half).r();
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            r.row_mut(k).neg_mut();
        }
    }
    Ok(r.transpose())
}

/// Solves `m x = rhs` for positive definite `m`.
pub fn solve_spd(m: &SymMatrix, rhs: &Matrix) -> Result<Matrix> {
    if rhs.nrows() != m.order() {
        return Err(Error::dim(format!(
            "rhs has {} rows, matrix order {}",
            rhs.nrows(),
            m.order()
        )));
    }
    check_finite(m.as_matrix(), "solve_spd matrix")?;
    let factor = SpdFactor::new(m)?;
    Ok(factor.solve(rhs))
}

/// Reusable Cholesky factor of a positive definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl SpdFactor {
    pub fn new(m: &SymMatrix) -> Result<Self> {
        let scale = m.diagonal().iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
        let chol = m.as_matrix().clone().cholesky().ok_or_else(|| {
            Error::Singular("Cholesky factorization failed (matrix not positive definite)".into())
        })?;
        let l = chol.l_dirty();
        let min_pivot = (0..m.order()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if !(min_pivot > 1e-14 * scale) {
            return Err(Error::Singular(format!(
                "smallest Cholesky pivot {min_pivot:e} relative to scale {scale:e}"
            )));
        }
        Ok(Self { chol })
    }

    pub fn solve(&self, rhs: &Matrix) -> Matrix {
        self.chol.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &Vector) -> Vector {
        self.chol.solve(rhs)
    }

    pub fn l(&self) -> Matrix {
        self.chol.l()
    }
}

/// Thin singular value decomposition `a = U diag(d) Vᵀ` with `d` descending.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

pub fn svd_thin(a: &Matrix) -> Result<ThinSvd> {
    check_finite(a, "svd_thin input")?;
    if a.nrows() < a.ncols() {
        return Err(Error::dim(format!(
            "svd_thin needs n >= p, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let p = a.ncols();
    let svd = SVD::new(a.clone(), true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let singular_values = order.iter().map(|&k| svd.singular_values[k]).collect();
    let u_sorted = Matrix::from_fn(a.nrows(), p, |i, j| u[(i, order[j])]);
    let v_sorted = Matrix::from_fn(p, p, |i, j| vt[(order[j], i)]);
    Ok(ThinSvd {
        u: u_sorted,
        singular_values,
        v: v_sorted,
    })
}

/// `n x k` matrix with orthonormal columns annihilated by `aᵀ`.
///
/// Random Gaussian columns from `seed` are projected off the column space of
/// `a` (twice, for numerical orthogonality) and orthonormalized by QR. A draw
/// whose residual is nearly rank deficient is discarded and redrawn.
pub fn orthonormal_complement(a: &Matrix, k: usize, seed: u64) -> Result<Matrix> {
    check_finite(a, "orthonormal_complement input")?;
    let n = a.nrows();
    let basis = column_space_basis(a)?;
    let rank = basis.ncols();
    if rank + k > n {
        return Err(Error::dim(format!(
            "cannot find {k} orthonormal directions orthogonal to a rank-{rank} subspace of R^{n}"
        )));
    }
    if k == 0 {
        return Ok(Matrix::zeros(n, 0));
    }
    for attempt in 0..16u64 {
        let mut gauss = Gaussian::from_path(seed, &[0xC0_4D, attempt]);
        let mut g = Matrix::zeros(n, k);
        gauss.fill(g.as_mut_slice());
        for _ in 0..2 {
            let coef = basis.tr_mul(&g);
            g -= &basis * coef;
        }
        let qr = QR::new(g.clone());
        let r = qr.r();
        let diag_max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        let diag_min = (0..k).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
        if diag_min <= 1e-8 * diag_max {
            continue;
        }
        let mut q = qr.q();
        // one more sweep against the basis, then re-orthonormalize
        let coef = basis.tr_mul(&q);
        q -= &basis * coef;
        let q = QR::new(q).q();
        return Ok(q);
    }
    Err(Error::Singular(
        "orthonormal_complement: random draws repeatedly collinear".into(),
    ))
}

/// Orthonormal basis of the column space of `a` (numerical rank).
fn column_space_basis(a: &Matrix) -> Result<Matrix> {
    let (n, p) = (a.nrows(), a.ncols());
    if p == 0 {
        return Ok(Matrix::zeros(n, 0));
    }
    let (u, s) = if n >= p {
        let svd = svd_thin(a)?;
        (svd.u, svd.singular_values)
    } else {
        let svd = SVD::new(a.clone(), true, false);
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
        let u = svd.u.expect("requested U");
        let s: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
        (Matrix::from_fn(n, s.len(), |i, j| u[(i, order[j])]), s)
    };
    let smax = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|&&v| v > 1e-12 * smax.max(f64::MIN_POSITIVE) * (n.max(p) as f64)).count();
    Ok(u.columns(0, rank).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(n: usize, p: usize, seed: u64) -> Matrix {
        let mut g = Gaussian::from_path(seed, &[1]);
        let mut m = Matrix::zeros(n, p);
        g.fill(m.as_mut_slice());
        m
    }

    fn random_spd(p: usize, seed: u64) -> SymMatrix {
        let a = random_matrix(p + 3, p, seed);
        SymMatrix::gram(&a)
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = eig_sym(&SymMatrix::identity(3)).unwrap();
        assert_eq!(e.values.len(), 3);
        for v in e.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
        let e = eig_sym(&SymMatrix::from_diagonal(&[1.0, 4.0])).unwrap();
        assert!((e.values[0] - 4.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        // eigenvector for 4 is the second axis
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-14);
        assert!(e.vectors[(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn eig_two_by_two() {
        // λ² − 4λ + 3 = 0
        let m = SymMatrix::new(Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let e = eig_sym(&m).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_rejects_non_finite() {
        let m = SymMatrix(Matrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]));
        assert!(matches!(eig_sym(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn eig_reconstruction_and_trace() {
        for seed in 0..100 {
            let m = random_spd(6, seed);
            let e = eig_sym(&m).unwrap();
            let scale = m.max_abs();
            assert!(max_abs(&(e.reconstruct() - m.as_matrix())) <= 1e-10 * scale);
            let vtv = e.vectors.tr_mul(&e.vectors);
            assert!(max_abs(&(vtv - Matrix::identity(6, 6))) <= 1e-10);
            let trace: f64 = m.diagonal().iter().sum();
            let sum: f64 = e.values.iter().sum();
            assert!((trace - sum).abs() <= 1e-8 * trace.abs());
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn chol_examples() {
        let l = chol_psd(&SymMatrix::identity(2), PSD_TOL).unwrap();
        assert!(max_abs(&(l - Matrix::identity(2, 2))) < 1e-15);

        let m = SymMatrix::new(Matrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 2.0])).unwrap();
        let l = chol_psd(&m, PSD_TOL).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]);
        assert!(max_abs(&(l - expected)) < 1e-14);
    }

    #[test]
    fn chol_clips_psd_singular() {
        let m = SymMatrix::new(Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        let l = chol_psd(&m, PSD_TOL).unwrap();
        assert!(l[(0, 1)] == 0.0, "factor must be lower triangular");
        let resid = max_abs(&(&l * l.transpose() - m.as_matrix()));
        assert!(resid <= PSD_TOL * (1.0 + m.max_abs()), "residual {resid}");
    }

    #[test]
    fn chol_rejects_indefinite() {
        let m = SymMatrix::from_diagonal(&[1.0, -0.5]);
        match chol_psd(&m, PSD_TOL) {
            Err(Error::NotPsd { min_eigenvalue, .. }) => assert!((min_eigenvalue + 0.5).abs() < 1e-12),
            other => panic!("expected NotPsd, got {other:?}"),
        }
    }

    #[test]
    fn solve_examples() {
        let rhs = Matrix::from_column_slice(2, 1, &[2.0, 4.0]);
        let x = solve_spd(&SymMatrix::identity(2), &rhs).unwrap();
        assert_eq!(x, rhs);
        let x = solve_spd(&SymMatrix::from_diagonal(&[2.0, 4.0]), &rhs).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn solve_construct_then_solve() {
        for seed in 0..100 {
            let m = random_spd(5, seed);
            let x0 = random_matrix(5, 1, seed + 1000);
            let rhs = m.as_matrix() * &x0;
            let x = solve_spd(&m, &rhs).unwrap();
            let resid = (m.as_matrix() * &x - &rhs).norm();
            assert!(resid <= 1e-8 * rhs.norm());
            assert!(max_abs(&(x - x0)) < 1e-8);
        }
    }

    #[test]
    fn solve_rejects_singular() {
        let m = SymMatrix::new(Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert!(matches!(
            solve_spd(&m, &Matrix::identity(2, 2)),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn svd_examples() {
        let q = orthonormal_complement(&Matrix::zeros(6, 0), 3, 5).unwrap();
        let svd = svd_thin(&q).unwrap();
        for d in &svd.singular_values {
            assert!((d - 1.0).abs() < 1e-12);
        }
        let mut scaled = q.columns(0, 2).into_owned();
        scaled.column_mut(0).scale_mut(3.0);
        scaled.column_mut(1).scale_mut(2.0);
        let svd = svd_thin(&scaled).unwrap();
        assert!((svd.singular_values[0] - 3.0).abs() < 1e-12);
        assert!((svd.singular_values[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn svd_reconstruction() {
        for seed in 0..100 {
            let a = random_matrix(8, 3, seed);
            let svd = svd_thin(&a).unwrap();
            let d = Matrix::from_diagonal(&Vector::from_vec(svd.singular_values.clone()));
            let rec = &svd.u * d * svd.v.transpose();
            assert!(max_abs(&(rec - &a)) <= 1e-10 * max_abs(&a));
            assert!(max_abs(&(svd.u.tr_mul(&svd.u) - Matrix::identity(3, 3))) <= 1e-10);
            assert!(max_abs(&(svd.v.tr_mul(&svd.v) - Matrix::identity(3, 3))) <= 1e-10);
        }
    }

    #[test]
    fn complement_examples() {
        let mut e1 = Matrix::zeros(3, 1);
        e1[(0, 0)] = 1.0;
        let c = orthonormal_complement(&e1, 2, 1).unwrap();
        assert!(max_abs(&e1.tr_mul(&c)) <= 1e-10);
        assert!(max_abs(&(c.tr_mul(&c) - Matrix::identity(2, 2))) <= 1e-10);

        for seed in 0..100 {
            let a = random_matrix(10, 3, seed);
            let c = orthonormal_complement(&a, 7, seed).unwrap();
            assert!(max_abs(&a.tr_mul(&c)) <= 1e-10);
            assert!(max_abs(&(c.tr_mul(&c) - Matrix::identity(7, 7))) <= 1e-10);
        }

        let full = random_matrix(4, 4, 9);
        assert!(matches!(orthonormal_complement(&full, 1, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn sym_matrix_rejects_asymmetric() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(SymMatrix::new(m).is_err());
    }
}
