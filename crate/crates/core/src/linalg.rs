use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Largest |m_ij − m_ji| relative to the Frobenius norm (0 for the zero matrix).
pub fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    let scale = frobenius(m);
    if scale == 0.0 {
        worst
    } else {
        worst / scale
    }
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix via full symmetric eigendecomposition.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::Argument(format!(
            "eigenvalue of non-square {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let eig = SymmetricEigen::try_new(symmetrize(m), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    Ok(eig.eigenvalues.min())
}

pub(crate) fn max_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    Ok(-min_eigenvalue(&(-m))?)
}

/// Rows `rows` and columns `cols` of `m`.
pub(crate) fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_diagonal() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -1.5, 2.0]));
        assert_eq!(min_eigenvalue(&m).unwrap(), -1.5);
        assert_eq!(max_eigenvalue(&m).unwrap(), 3.0);
    }

    #[test]
    fn symmetry_defect_detects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.5, 1.0]);
        assert!(symmetry_defect(&m) > 0.1);
        assert_eq!(symmetry_defect(&symmetrize(&m)), 0.0);
    }
}
