//! DtN matrices, the Fréchet derivative of the DtN map and testing operators.
//!
//! Measurement nodes lie outside Ω, so the block `A_{Om,Om}` does not depend
//! on the potential. [`DtnMatrix`] keeps that local block separate from the
//! potential-dependent response `A_{Om,I} A_II^{-1} A_{I,Om}`; differences of
//! two maps on the same grid then cancel the local block exactly instead of
//! losing the (tiny) response change to rounding.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{arg, Error, Result};
use crate::forward::{SolutionOperator, SystemMatrix};
use crate::linalg::{submatrix, symmetrize, symmetry_defect};
use crate::par::{map_indexed, Schedule};

const INPUT_SYMMETRY_TOL: f64 = 1e-8;

/// Symmetric matrix on the measurement nodes, stored as `base + correction`.
#[derive(Clone, Debug)]
pub struct DtnMatrix {
    base: Option<Arc<DMatrix<f64>>>,
    correction: DMatrix<f64>,
    tag: String,
}

impl DtnMatrix {
    /// Wrap an explicit symmetric matrix (asymmetry above 1e-8 relative is
    /// rejected; the stored matrix is the symmetric part).
    pub fn from_matrix(m: DMatrix<f64>, tag: impl Into<String>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return arg(format!("DtN matrix must be square, got {}x{}", m.nrows(), m.ncols()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return arg("DtN matrix has non-finite entries");
        }
        let defect = symmetry_defect(&m);
        if defect > INPUT_SYMMETRY_TOL {
            return arg(format!("matrix is not symmetric (relative defect {defect:e})"));
        }
        Ok(DtnMatrix { base: None, correction: symmetrize(&m), tag: tag.into() })
    }

    pub(crate) fn split(base: Arc<DMatrix<f64>>, correction: DMatrix<f64>, tag: String) -> Self {
        DtnMatrix { base: Some(base), correction, tag }
    }

    pub fn dim(&self) -> usize {
        self.correction.nrows()
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    /// The represented matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        match &self.base {
            Some(b) => b.as_ref() + &self.correction,
            None => self.correction.clone(),
        }
    }

    /// The potential-dependent part (the whole matrix if there is no base).
    pub fn correction(&self) -> &DMatrix<f64> {
        &self.correction
    }

    /// Whether `self` and `other` carry the same local block.
    pub fn shares_base(&self, other: &DtnMatrix) -> bool {
        match (&self.base, &other.base) {
            (Some(a), Some(b)) => Arc::ptr_eq(a, b) || a == b,
            _ => false,
        }
    }

    /// `self − other`. Shared local blocks cancel exactly.
    pub fn difference(&self, other: &DtnMatrix) -> Result<DtnMatrix> {
        if self.dim() != other.dim() {
            return arg(format!("cannot subtract {}x{} and {}x{} matrices", self.dim(), self.dim(), other.dim(), other.dim()));
        }
        let tag = format!("{} - {}", self.tag, other.tag);
        let correction = if self.shares_base(other) {
            &self.correction - &other.correction
        } else {
            self.matrix() - other.matrix()
        };
        Ok(DtnMatrix { base: None, correction, tag })
    }

    pub fn scaled(&self, factor: f64) -> DtnMatrix {
        DtnMatrix {
            base: None,
            correction: self.matrix() * factor,
            tag: format!("{factor}*{}", self.tag),
        }
    }

    pub fn negated(&self) -> DtnMatrix {
        self.scaled(-1.0)
    }

    /// Row-major CSV, full symmetric storage, shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_matrix_csv(&self.matrix(), out)
    }
}

pub(crate) fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, mut out: W) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// PSD operator `T_M = Λ'(q0) χ_M` together with its mask.
#[derive(Clone, Debug)]
pub struct TestOperator {
    matrix: DMatrix<f64>,
    mask: Vec<bool>,
}

impl TestOperator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// `alpha · T_M` as a DtN-shaped matrix.
    pub fn scaled(&self, alpha: f64) -> DtnMatrix {
        DtnMatrix { base: None, correction: &self.matrix * alpha, tag: format!("{alpha}*T") }
    }

    pub fn as_dtn(&self) -> DtnMatrix {
        DtnMatrix { base: None, correction: self.matrix.clone(), tag: "T".into() }
    }
}

fn measurement_columns(sys: &SystemMatrix, positions: &[usize]) -> Vec<usize> {
    let ext = sys.grid().exterior();
    positions.iter().map(|&p| ext[p]).collect()
}

fn schur_on(sys: &SystemMatrix, positions: &[usize], tag: String) -> Result<DtnMatrix> {
    let grid = sys.grid();
    let cols = measurement_columns(sys, positions);
    let local = submatrix(sys.matrix(), &cols, &cols);
    let coupling = submatrix(sys.matrix(), grid.interior(), &cols);
    let y = sys
        .factor()
        .l()
        .solve_lower_triangular(&coupling)
        .ok_or_else(|| Error::Numerical("triangular solve failed in DtN assembly".into()))?;
    let response = symmetrize(&(y.transpose() * &y));
    Ok(DtnMatrix::split(Arc::new(local), -response, tag))
}

/// `Λ(q)` on the measurement nodes: the Om principal block of
/// `A_EE − A_EI A_II^{-1} A_IE`.
pub fn dtn_matrix(sys: &SystemMatrix) -> Result<DtnMatrix> {
    let positions = sys.grid().measurement_in_exterior().to_vec();
    schur_on(sys, &positions, "dtn".into())
}

/// `Λ(q)` on every exterior node (full data).
pub fn dtn_matrix_exterior(sys: &SystemMatrix) -> Result<DtnMatrix> {
    let positions: Vec<usize> = (0..sys.grid().exterior().len()).collect();
    schur_on(sys, &positions, "dtn-full".into())
}

fn weighted_gram(left: &DMatrix<f64>, weights: &[f64], right: &DMatrix<f64>) -> DMatrix<f64> {
    let mut scaled = right.clone();
    for (j, &w) in weights.iter().enumerate() {
        scaled.row_mut(j).scale_mut(w);
    }
    left.transpose() * scaled
}

fn check_weights(s: &SolutionOperator, len: usize) -> Result<()> {
    if len != s.matrix().nrows() {
        return arg(format!("{len} interior weights for {} interior nodes", s.matrix().nrows()));
    }
    Ok(())
}

/// `Λ'(q) r`: entries `h Σ_j r_j S[j,g] S[j,f]`.
pub fn frechet_apply(s: &SolutionOperator, r: &[f64]) -> Result<DtnMatrix> {
    check_weights(s, r.len())?;
    if r.iter().any(|v| !v.is_finite()) {
        return arg("direction must be finite");
    }
    let h = s.spacing();
    let w: Vec<f64> = r.iter().map(|v| h * v).collect();
    let m = symmetrize(&weighted_gram(s.matrix(), &w, s.matrix()));
    Ok(DtnMatrix { base: None, correction: m, tag: "frechet".into() })
}

/// `T_M = Λ'(q0) χ_M`.
pub fn testing_operator(s: &SolutionOperator, mask: &[bool]) -> Result<TestOperator> {
    check_weights(s, mask.len())?;
    let h = s.spacing();
    let w: Vec<f64> = mask.iter().map(|&b| if b { h } else { 0.0 }).collect();
    let m = symmetrize(&weighted_gram(s.matrix(), &w, s.matrix()));
    Ok(TestOperator { matrix: m, mask: mask.to_vec() })
}

/// Testing operators for several masks, collected in input order.
pub fn testing_operators(s: &SolutionOperator, masks: &[Vec<bool>], schedule: Schedule) -> Result<Vec<TestOperator>> {
    map_indexed(masks.len(), schedule, |i| testing_operator(s, &masks[i]))
        .into_iter()
        .collect()
}

/// `Λ(q1) − Λ(q0)` from the identity `A0^{-1} − A1^{-1} = A0^{-1} (hΔq) A1^{-1}`:
/// `h S0ᵀ diag(q1 − q0) S1`, symmetrized.
pub fn response_difference(s0: &SolutionOperator, s1: &SolutionOperator, dq: &[f64]) -> Result<DtnMatrix> {
    check_weights(s0, dq.len())?;
    if s0.matrix().shape() != s1.matrix().shape() {
        return arg("solution operators have different shapes");
    }
    let h = s0.spacing();
    let w: Vec<f64> = dq.iter().map(|v| h * v).collect();
    let m = symmetrize(&weighted_gram(s0.matrix(), &w, s1.matrix()));
    Ok(DtnMatrix { base: None, correction: m, tag: "dtn-change".into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_matrix_rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(DtnMatrix::from_matrix(m, "x").is_err());
        let ok = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert!(DtnMatrix::from_matrix(ok, "x").is_ok());
    }

    #[test]
    fn shared_base_cancels() {
        let base = Arc::new(DMatrix::from_element(2, 2, 1e6));
        let a = DtnMatrix::split(base.clone(), DMatrix::identity(2, 2) * 1e-9, "a".into());
        let b = DtnMatrix::split(base, DMatrix::zeros(2, 2), "b".into());
        let d = a.difference(&b).unwrap();
        assert_eq!(d.matrix(), DMatrix::identity(2, 2) * 1e-9);
    }

    #[test]
    fn csv_is_row_major() {
        let m = DtnMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]), "m").unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1e0,2e0\n2e0,3e0\n");
    }
}
