//! Small dense helpers. Matrices are nalgebra's; SVD and symmetric
//! eigendecompositions go through faer.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

pub fn frob_sq(m: &Mat) -> f64 {
    m.iter().map(|x| x * x).sum()
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn column_norms(m: &Mat) -> Vec<f64> {
    m.column_iter().map(|c| c.norm()).collect()
}

pub fn row_norms(m: &Mat) -> Vec<f64> {
    m.row_iter().map(|r| r.norm()).collect()
}

/// `log det(DᵀD)` through a Cholesky factorisation of the Gramian.
pub fn gram_logdet(d: &Mat) -> Result<f64> {
    let gram = d.transpose() * d;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::SingularGramian("DᵀD is not positive definite".into()))?;
    let logdet: f64 = chol.l().diagonal().iter().map(|x| 2.0 * x.ln()).sum();
    if logdet.is_finite() {
        Ok(logdet)
    } else {
        Err(Error::SingularGramian("log det(DᵀD) is not finite".into()))
    }
}

/// `D (DᵀD)⁻¹`, the (halved) gradient of `log det(DᵀD)`.
pub fn gram_pseudo_gradient(d: &Mat) -> Result<Mat> {
    let gram = d.transpose() * d;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::SingularGramian("DᵀD is not positive definite".into()))?;
    // D G⁻¹ = (G⁻¹ Dᵀ)ᵀ since G is symmetric.
    let out = chol.solve(&d.transpose()).transpose();
    if all_finite(&out) {
        Ok(out)
    } else {
        Err(Error::SingularGramian("(DᵀD)⁻¹ is not finite".into()))
    }
}

/// Solves `X A = rhs` for symmetric positive definite `A`.
pub fn solve_spd_right(rhs: &Mat, a: &Mat) -> Result<Mat> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularGramian("system matrix is not positive definite".into()))?;
    Ok(chol.solve(&rhs.transpose()).transpose())
}

/// Solves `A X = rhs` for symmetric positive definite `A`.
pub fn solve_spd_left(a: &Mat, rhs: &Mat) -> Result<Mat> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularGramian("system matrix is not positive definite".into()))?;
    Ok(chol.solve(rhs))
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    // Column-major fill keeps the draw order fixed for a given seed.
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of R's diagonal folded into Q.
pub fn haar_orthogonal<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Mat {
    let g = gaussian(rng, d, d);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..d {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

/// `‖QᵀQ − I‖_F`.
pub fn orthogonality_residual(q: &Mat) -> f64 {
    let n = q.ncols();
    (q.transpose() * q - Mat::identity(n, n)).norm()
}

fn to_faer(m: &Mat) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> Mat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Full SVD `M = U diag(σ) Vᵀ` with `σ` in nonincreasing order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub singular_values: Vec<f64>,
    pub v: Mat,
}

pub fn svd(m: &Mat) -> Result<Svd> {
    let dec = to_faer(m)
        .svd()
        .map_err(|e| Error::SingularGramian(format!("SVD failed: {e:?}")))?;
    Ok(Svd {
        u: from_faer(dec.U()),
        singular_values: dec.S().column_vector().iter().copied().collect(),
        v: from_faer(dec.V()),
    })
}

/// Eigenvalues of a symmetric matrix in nondecreasing order.
pub fn symmetric_eigenvalues(m: &Mat) -> Result<Vec<f64>> {
    if m.is_empty() {
        return Ok(Vec::new());
    }
    to_faer(m)
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::SingularGramian(format!("eigendecomposition failed: {e:?}")))
}

/// Largest singular value.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    svd(m).map_or(f64::NAN, |s| s.singular_values.first().copied().unwrap_or(0.0))
}

/// Number of singular values above `tol` times the largest.
pub fn numerical_rank(m: &Mat, tol: f64) -> usize {
    let Ok(s) = svd(m) else { return 0 };
    let max = s.singular_values.first().copied().unwrap_or(0.0);
    s.singular_values.iter().filter(|&&x| x > tol * max && x > 0.0).count()
}
