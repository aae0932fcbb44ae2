//! Dense complex and real matrix substrate.
//!
//! Matrices are plain `nalgebra` dense matrices. The only numerically
//! interesting pieces here are the Gram–Schmidt projector used by the
//! realified Fisher forms and the Hermitian eigen/exp pair used by the ansatz.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{QfimError, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;
pub type RealMatrix = DMatrix<f64>;
pub type RealVector = DVector<f64>;

/// Default residual threshold below which a span vector contributes nothing.
pub const DEFAULT_DROP_TOL: f64 = 1e-12;

/// Tolerance on `‖H − H*‖_max` accepted by the Hermitian routines.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub fn max_abs(m: &RealMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_diff(a: &RealMatrix, b: &RealMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn max_abs_diff_complex(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(0.0_f64, |acc, (x, y)| acc.max((x - y).norm()))
}

pub fn all_finite_real(m: &RealMatrix) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn all_finite_complex(m: &ComplexMatrix) -> bool {
    m.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

/// `max |A − Aᵀ|`, zero for non-square input never happens because callers check shape.
pub fn asymmetry(a: &RealMatrix) -> f64 {
    max_abs_diff(a, &a.transpose())
}

pub fn hermitian_deviation(h: &ComplexMatrix) -> f64 {
    max_abs_diff_complex(h, &h.adjoint())
}

pub fn symmetrize(a: &RealMatrix) -> RealMatrix {
    (a + a.transpose()) * 0.5
}

/// `‖U*U − I‖_max`.
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    let n = u.ncols();
    max_abs_diff_complex(&(u.adjoint() * u), &ComplexMatrix::identity(n, n))
}

fn ensure_square(rows: usize, cols: usize) -> Result<()> {
    if rows != cols {
        return Err(QfimError::NotSquare { rows, cols });
    }
    Ok(())
}

/// Orthonormal basis (as columns) of the span of `vectors`.
///
/// Modified Gram–Schmidt with one re-orthogonalization pass. A vector is
/// dropped when its norm is at most `drop_tol`, or when its residual after
/// projection is at most `drop_tol · max(1, ‖v‖)`.
pub fn orthonormal_basis(vectors: &[RealVector], drop_tol: f64) -> Result<RealMatrix> {
    if !(drop_tol > 0.0) {
        return Err(QfimError::InvalidArgument(format!("drop_tol must be positive, got {drop_tol}")));
    }
    let Some(first) = vectors.first() else {
        return Ok(RealMatrix::zeros(0, 0));
    };
    let dim = first.len();
    let mut basis: Vec<RealVector> = Vec::with_capacity(vectors.len().min(dim));
    for v in vectors {
        if v.len() != dim {
            return Err(QfimError::DimensionMismatch { expected: dim, actual: v.len() });
        }
        let norm = v.norm();
        if norm <= drop_tol {
            continue;
        }
        let mut r = v.clone();
        for _pass in 0..2 {
            for q in &basis {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        let res = r.norm();
        if res <= drop_tol * norm.max(1.0) {
            continue;
        }
        r /= res;
        basis.push(r);
    }
    if basis.is_empty() {
        return Ok(RealMatrix::zeros(dim, 0));
    }
    Ok(RealMatrix::from_columns(&basis))
}

/// Orthogonal projection onto the span of `vectors`.
pub fn project_onto_span(vectors: &[RealVector], drop_tol: f64) -> Result<RealMatrix> {
    let q = orthonormal_basis(vectors, drop_tol)?;
    Ok(&q * q.transpose())
}

/// `(I − QQᵀ) W` for an orthonormal column block `Q`, without forming the projector.
pub fn project_out(q: &RealMatrix, w: &RealMatrix) -> RealMatrix {
    if q.ncols() == 0 {
        return w.clone();
    }
    let coeffs = q.transpose() * w;
    w - q * coeffs
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eig(h: &ComplexMatrix) -> Result<(RealVector, ComplexMatrix)> {
    ensure_square(h.nrows(), h.ncols())?;
    if !all_finite_complex(h) {
        return Err(QfimError::NonFinite("hermitian_eig input"));
    }
    let deviation = hermitian_deviation(h);
    if deviation > HERMITIAN_TOL {
        return Err(QfimError::NotHermitian { deviation });
    }
    // nalgebra only reads the lower triangle; feed it the exact Hermitian part.
    let sym = (h + h.adjoint()) * C64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let order = ascending_order(eig.eigenvalues.as_slice());
    let values = RealVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let columns: Vec<_> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    let vectors = if columns.is_empty() {
        ComplexMatrix::zeros(0, 0)
    } else {
        ComplexMatrix::from_columns(&columns)
    };
    Ok((values, vectors))
}

/// Eigendecomposition of a real symmetric matrix, eigenvalues ascending.
pub fn symmetric_eig(a: &RealMatrix) -> Result<(RealVector, RealMatrix)> {
    ensure_square(a.nrows(), a.ncols())?;
    if !all_finite_real(a) {
        return Err(QfimError::NonFinite("symmetric_eig input"));
    }
    let eig = symmetrize(a).symmetric_eigen();
    let order = ascending_order(eig.eigenvalues.as_slice());
    let values = RealVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let columns: Vec<_> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    let vectors = if columns.is_empty() {
        RealMatrix::zeros(0, 0)
    } else {
        RealMatrix::from_columns(&columns)
    };
    Ok((values, vectors))
}

fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

pub fn min_eigenvalue(a: &RealMatrix) -> Result<f64> {
    let (values, _) = symmetric_eig(a)?;
    Ok(values.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Spectral norm of a symmetric matrix.
pub fn spectral_norm_sym(a: &RealMatrix) -> Result<f64> {
    let (values, _) = symmetric_eig(a)?;
    Ok(values.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())))
}

/// Spectral norm of an arbitrary complex matrix (largest singular value).
pub fn spectral_norm(m: &ComplexMatrix) -> f64 {
    m.singular_values().iter().copied().fold(0.0_f64, f64::max)
}

/// `exp(−i t H)` for Hermitian `H`.
pub fn hermitian_expm(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    let (values, vectors) = hermitian_eig(h)?;
    let phases = values.map(|l| C64::from_polar(1.0, -t * l));
    let mut scaled = vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    Ok(scaled * vectors.adjoint())
}

/// `Σ_k conj(a_k) b_k`.
pub fn inner(a: &ComplexVector, b: &ComplexVector) -> C64 {
    a.dotc(b)
}
