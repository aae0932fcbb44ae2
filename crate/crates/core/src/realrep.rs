//! Realification `Φ: Cᴺ → R²ᴺ`, its matrix homomorphism, the symplectic
//! matrix `J = Φ(iI)`, and the outcome selectors `D_k`.
//!
//! Vectors are laid out as `(x₁…x_N, y₁…y_N)` for `ψ = x + iy`.

use crate::error::{QfimError, Result};
use crate::linalg::{ComplexMatrix, ComplexVector, RealMatrix, RealVector, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct RealifiedVector {
    pub dim_n: usize,
    pub data: RealVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealifiedMatrix {
    pub dim_n: usize,
    pub data: RealMatrix,
}

impl RealifiedVector {
    pub fn new(data: RealVector) -> Result<Self> {
        if !data.len().is_multiple_of(2) || data.is_empty() {
            return Err(QfimError::InvalidArgument(format!(
                "realified vector needs even non-zero length, got {}",
                data.len()
            )));
        }
        Ok(Self { dim_n: data.len() / 2, data })
    }

    /// Inverse of `phi_vector`.
    pub fn to_complex(&self) -> ComplexVector {
        let n = self.dim_n;
        ComplexVector::from_iterator(n, (0..n).map(|k| C64::new(self.data[k], self.data[k + n])))
    }

    /// `J z` computed from coordinates: `(x, y) ↦ (−y, x)`.
    pub fn apply_j(&self) -> RealifiedVector {
        RealifiedVector { dim_n: self.dim_n, data: apply_j(&self.data) }
    }
}

impl RealifiedMatrix {
    /// Checks the `[[A, −B], [B, A]]` block structure to `tol`.
    pub fn has_complex_structure(&self, tol: f64) -> bool {
        let n = self.dim_n;
        let d = &self.data;
        for i in 0..n {
            for j in 0..n {
                if (d[(i, j)] - d[(i + n, j + n)]).abs() > tol {
                    return false;
                }
                if (d[(i, j + n)] + d[(i + n, j)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

pub fn phi_vector(psi: &ComplexVector) -> RealifiedVector {
    let n = psi.len();
    let mut data = RealVector::zeros(2 * n);
    for (k, c) in psi.iter().enumerate() {
        data[k] = c.re;
        data[k + n] = c.im;
    }
    RealifiedVector { dim_n: n, data }
}

/// Column-wise `Φ` of an `N×m` complex matrix, giving `2N×m` (used for Jacobians).
pub fn phi_columns(m: &ComplexMatrix) -> RealMatrix {
    let n = m.nrows();
    let mut out = RealMatrix::zeros(2 * n, m.ncols());
    for j in 0..m.ncols() {
        for k in 0..n {
            let c = m[(k, j)];
            out[(k, j)] = c.re;
            out[(k + n, j)] = c.im;
        }
    }
    out
}

pub fn phi_matrix(z: &ComplexMatrix) -> Result<RealifiedMatrix> {
    if z.nrows() != z.ncols() {
        return Err(QfimError::NotSquare { rows: z.nrows(), cols: z.ncols() });
    }
    let n = z.nrows();
    let mut data = RealMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let c = z[(i, j)];
            data[(i, j)] = c.re;
            data[(i + n, j + n)] = c.re;
            data[(i, j + n)] = -c.im;
            data[(i + n, j)] = c.im;
        }
    }
    Ok(RealifiedMatrix { dim_n: n, data })
}

pub fn symplectic_j(n: usize) -> Result<RealifiedMatrix> {
    if n == 0 {
        return Err(QfimError::InvalidArgument("symplectic_j needs N >= 1".into()));
    }
    let mut data = RealMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        data[(k, k + n)] = -1.0;
        data[(k + n, k)] = 1.0;
    }
    Ok(RealifiedMatrix { dim_n: n, data })
}

/// `J z` on a raw `2N` vector.
pub fn apply_j(z: &RealVector) -> RealVector {
    let n = z.len() / 2;
    let mut out = RealVector::zeros(z.len());
    for k in 0..n {
        out[k] = -z[k + n];
        out[k + n] = z[k];
    }
    out
}

/// Dense `D_k = diag(e_k + e_{k+N})`, with 1-based `k`. Use [`dk_j_vector`] in hot paths.
pub fn dk_selector(k: usize, n: usize) -> Result<RealifiedMatrix> {
    check_k(k, n)?;
    let mut data = RealMatrix::zeros(2 * n, 2 * n);
    data[(k - 1, k - 1)] = 1.0;
    data[(k - 1 + n, k - 1 + n)] = 1.0;
    Ok(RealifiedMatrix { dim_n: n, data })
}

/// `D_k J z` as a dense `2N` vector with only coordinates `k` and `k+N` set (1-based `k`).
pub fn dk_j_vector(k: usize, z: &RealVector) -> Result<RealVector> {
    let n = z.len() / 2;
    check_k(k, n)?;
    let i = k - 1;
    let mut out = RealVector::zeros(2 * n);
    out[i] = -z[i + n];
    out[i + n] = z[i];
    Ok(out)
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(QfimError::IndexOutOfRange { index: k, max: n });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn phi_vector_layout() {
        let psi = ComplexVector::from_vec(vec![c(1.0, 2.0), c(3.0, 0.0)]);
        assert_eq!(phi_vector(&psi).data.as_slice(), &[1.0, 3.0, 2.0, 0.0]);
    }

    #[test]
    fn phi_of_i_times_e1_is_j_phi_e1() {
        let e1 = ComplexVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let ie1 = ComplexVector::from_vec(vec![c(0.0, 1.0), c(0.0, 0.0)]);
        let lhs = phi_vector(&ie1);
        assert_eq!(lhs.data.as_slice(), &[0.0, 0.0, 1.0, 0.0]);
        let j = symplectic_j(2).unwrap();
        assert_eq!(lhs.data, &j.data * phi_vector(&e1).data);
        assert_eq!(lhs.data, apply_j(&phi_vector(&e1).data));
    }

    #[test]
    fn phi_matrix_of_identity_and_i() {
        let n = 3;
        let id = phi_matrix(&ComplexMatrix::identity(n, n)).unwrap();
        assert_eq!(id.data, RealMatrix::identity(2 * n, 2 * n));
        let i_n = ComplexMatrix::identity(n, n) * c(0.0, 1.0);
        assert_eq!(phi_matrix(&i_n).unwrap().data, symplectic_j(n).unwrap().data);
        assert!(phi_matrix(&ComplexMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn j_examples() {
        let j1 = symplectic_j(1).unwrap();
        assert_eq!(j1.data, RealMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        for n in 1..6 {
            let j = symplectic_j(n).unwrap().data;
            assert_eq!(&j * &j, -RealMatrix::identity(2 * n, 2 * n));
            assert_eq!(j.transpose(), -&j);
        }
        assert!(symplectic_j(0).is_err());
    }

    #[test]
    fn dk_examples() {
        let d1 = dk_selector(1, 2).unwrap();
        assert_eq!(d1.data, RealMatrix::from_diagonal(&RealVector::from_vec(vec![1.0, 0.0, 1.0, 0.0])));
        let n = 5;
        let sum = (1..=n).map(|k| dk_selector(k, n).unwrap().data).fold(RealMatrix::zeros(2 * n, 2 * n), |a, b| a + b);
        assert_eq!(sum, RealMatrix::identity(2 * n, 2 * n));
        let j = symplectic_j(n).unwrap().data;
        for k in 1..=n {
            let d = dk_selector(k, n).unwrap().data;
            assert!(max_abs_diff(&(&d * &j), &(&j * &d)) == 0.0);
        }
        assert!(matches!(dk_selector(0, 3), Err(QfimError::IndexOutOfRange { .. })));
        assert!(matches!(dk_selector(4, 3), Err(QfimError::IndexOutOfRange { .. })));
    }

    #[test]
    fn dk_j_vector_matches_dense_product() {
        let psi = ComplexVector::from_vec(vec![c(0.3, -0.1), c(0.2, 0.5), c(-0.7, 0.1)]);
        let z = phi_vector(&psi).data;
        let j = symplectic_j(3).unwrap().data;
        for k in 1..=3 {
            let dense = dk_selector(k, 3).unwrap().data * (&j * &z);
            assert_eq!(dk_j_vector(k, &z).unwrap(), dense);
            assert!((dense.norm_squared() - psi[k - 1].norm_sqr()).abs() < 1e-15);
        }
    }

    #[test]
    fn to_complex_inverts_phi() {
        let psi = ComplexVector::from_vec(vec![c(0.3, -0.1), c(0.2, 0.5)]);
        assert_eq!(phi_vector(&psi).to_complex(), psi);
        assert!(RealifiedVector::new(RealVector::zeros(3)).is_err());
    }
}
