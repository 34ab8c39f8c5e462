//! Loewner-order tests and the monotonicity / doubling verifiers.

use nalgebra::DVector;
use serde::Serialize;

use crate::dtn::DtnMatrix;
use crate::error::{arg, Result};
use crate::forward::Potential;
use crate::linalg::{frobenius, min_eigenvalue, symmetry_defect};
use crate::pipeline::Model;

const SCALE_FLOOR: f64 = 1e-14;
const INPUT_SYMMETRY_TOL: f64 = 1e-8;

/// Outcome of `A ≤ B`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LoewnerVerdict {
    pub pass: bool,
    /// `λ_min(B − A)`.
    pub lambda_min: f64,
    /// Absolute tolerance: pass iff `lambda_min ≥ −tolerance`.
    pub tolerance: f64,
    pub lhs: String,
    pub rhs: String,
}

/// Test `A ≤ B` in the Loewner order.
///
/// The tolerance is `tol_rel` times the larger Frobenius norm of the two
/// operands (floored at 1e-14). When both operands are DtN maps on the same
/// local block only their responses enter the difference, and the scale is
/// taken from the responses as well.
pub fn loewner_leq(a: &DtnMatrix, b: &DtnMatrix, tol_rel: f64) -> Result<LoewnerVerdict> {
    if a.dim() != b.dim() {
        return arg(format!("shape mismatch: {} vs {}", a.dim(), b.dim()));
    }
    if !(tol_rel >= 0.0) {
        return arg("tolerance must be nonnegative");
    }
    let scale = if a.shares_base(b) {
        for m in [a, b] {
            if symmetry_defect(m.correction()) > INPUT_SYMMETRY_TOL {
                return arg(format!("{} is not symmetric", m.tag()));
            }
        }
        frobenius(a.correction()).max(frobenius(b.correction()))
    } else {
        let (ma, mb) = (a.matrix(), b.matrix());
        for (m, t) in [(&ma, a.tag()), (&mb, b.tag())] {
            if symmetry_defect(m) > INPUT_SYMMETRY_TOL {
                return arg(format!("{t} is not symmetric"));
            }
        }
        frobenius(&ma).max(frobenius(&mb))
    };
    let diff = b.difference(a)?;
    let lambda_min = min_eigenvalue(diff.correction())?;
    let tolerance = tol_rel * scale.max(SCALE_FLOOR);
    Ok(LoewnerVerdict {
        pass: lambda_min >= -tolerance,
        lambda_min,
        tolerance,
        lhs: a.tag().to_string(),
        rhs: b.tag().to_string(),
    })
}

/// Signed slacks of the four monotonicity inequalities; each is nonnegative
/// when its inequality holds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicitySlacks {
    /// `F·(Λ(q1) − Λ(q0))F`.
    pub lhs: f64,
    /// `h Σ (q1−q0) u0² − lhs`.
    pub upper_u0: f64,
    /// `lhs − h Σ (q1−q0) u1²`.
    pub lower_u1: f64,
    /// `lhs − h Σ (q0/q1)(q1−q0) u0²`.
    pub lower_u0: f64,
    /// `h Σ (q1/q0)(q1−q0) u1² − lhs`.
    pub upper_u1: f64,
    /// Largest magnitude among the compared quantities.
    pub scale: f64,
}

impl MonotonicitySlacks {
    pub fn all(&self) -> [f64; 4] {
        [self.upper_u0, self.lower_u1, self.lower_u0, self.upper_u1]
    }

    pub fn min(&self) -> f64 {
        self.all().into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Doubling-estimate data on `D = {q0 ≠ q1}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DoublingData {
    /// `‖u0‖_D / ‖u1‖_D` (NaN when degenerate).
    pub ratio: f64,
    /// `1 + ‖q0 − q1‖_∞ / min(α0, α1)`.
    pub bound: f64,
    /// Discrete coercivity constants `λ_min(A_II(q_j)) / h`.
    pub alpha0: f64,
    pub alpha1: f64,
    pub degenerate: bool,
    pub within: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct InequalityReport {
    pub monotonicity: Option<MonotonicitySlacks>,
    pub doubling: Option<DoublingData>,
}

fn check_pair(model: &Model, q0: &Potential, q1: &Potential, data: &[f64]) -> Result<()> {
    if q0.len() != model.n_interior() || q1.len() != model.n_interior() {
        return arg("potentials do not match the grid");
    }
    if data.len() != model.n_measurement() {
        return arg(format!("{} data values for {} measurement nodes", data.len(), model.n_measurement()));
    }
    Ok(())
}

fn weighted_sum(h: f64, w: impl Iterator<Item = f64>, u: &[f64]) -> f64 {
    h * w.zip(u).map(|(w, u)| w * u * u).sum::<f64>()
}

/// Evaluate the four monotonicity inequalities for exterior data `data`
/// (values on the measurement nodes).
pub fn verify_monotonicity(model: &Model, q0: &Potential, q1: &Potential, data: &[f64]) -> Result<InequalityReport> {
    check_pair(model, q0, q1, data)?;
    if !q1.strict_positive() {
        return arg("inequality 3 divides by q1, which has zero entries");
    }
    if !q0.strict_positive() {
        return arg("inequality 4 divides by q0, which has zero entries");
    }
    let h = model.grid().spacing();
    let u0 = model.solution_operator(q0)?.apply(data)?;
    let u1 = model.solution_operator(q1)?.apply(data)?;
    let delta = model.dtn(q1)?.difference(&model.dtn(q0)?)?;
    let f = DVector::from_column_slice(data);
    let lhs = f.dot(&(delta.correction() * &f));

    let (a, b) = (q0.values(), q1.values());
    let dq = || a.iter().zip(b).map(|(x, y)| y - x);
    let i1 = weighted_sum(h, dq(), &u0);
    let i2 = weighted_sum(h, dq(), &u1);
    let i3 = weighted_sum(h, dq().zip(a.iter().zip(b)).map(|(d, (x, y))| x / y * d), &u0);
    let i4 = weighted_sum(h, dq().zip(a.iter().zip(b)).map(|(d, (x, y))| y / x * d), &u1);
    let scale = [lhs, i1, i2, i3, i4].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(InequalityReport {
        monotonicity: Some(MonotonicitySlacks {
            lhs,
            upper_u0: i1 - lhs,
            lower_u1: lhs - i2,
            lower_u0: lhs - i3,
            upper_u1: i4 - lhs,
            scale,
        }),
        doubling: None,
    })
}

/// Compare `u0` and `u1` on `D = {q0 ≠ q1}` against the doubling bound.
pub fn verify_doubling(model: &Model, q0: &Potential, q1: &Potential, data: &[f64]) -> Result<InequalityReport> {
    check_pair(model, q0, q1, data)?;
    let support: Vec<usize> = (0..q0.len()).filter(|&j| q0.values()[j] != q1.values()[j]).collect();
    if support.is_empty() {
        return arg("q0 and q1 coincide; the doubling estimate needs a nonempty difference set");
    }
    let h = model.grid().spacing();
    let sys0 = model.system(q0)?;
    let sys1 = model.system(q1)?;
    let u0 = sys0.solution_operator().apply(data)?;
    let u1 = sys1.solution_operator().apply(data)?;
    let norm = |u: &[f64]| support.iter().map(|&j| u[j] * u[j]).sum::<f64>().sqrt();
    let (n0, n1) = (norm(&u0), norm(&u1));

    let alpha0 = sys0.interior_lambda_min()? / h;
    let alpha1 = sys1.interior_lambda_min()? / h;
    let dq_max = support.iter().map(|&j| (q0.values()[j] - q1.values()[j]).abs()).fold(0.0, f64::max);
    let bound = 1.0 + dq_max / alpha0.min(alpha1);
    let degenerate = n1 == 0.0;
    let ratio = if degenerate { f64::NAN } else { n0 / n1 };
    let within = !degenerate && ratio >= 1.0 / bound && ratio <= bound;
    Ok(InequalityReport {
        monotonicity: None,
        doubling: Some(DoublingData { ratio, bound, alpha0, alpha1, degenerate, within }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dtn(m: DMatrix<f64>) -> DtnMatrix {
        DtnMatrix::from_matrix(m, "m").unwrap()
    }

    #[test]
    fn reflexive() {
        let a = dtn(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]));
        let v = loewner_leq(&a, &a, 1e-12).unwrap();
        assert!(v.pass);
        assert_eq!(v.lambda_min, 0.0);
    }

    #[test]
    fn identity_vs_double() {
        let a = dtn(DMatrix::identity(3, 3));
        let b = dtn(DMatrix::identity(3, 3) * 2.0);
        let v = loewner_leq(&a, &b, 1e-12).unwrap();
        assert!(v.pass);
        assert!((v.lambda_min - 1.0).abs() < 1e-14);
        assert!(!loewner_leq(&b, &a, 1e-12).unwrap().pass);
    }

    #[test]
    fn shape_mismatch() {
        let a = dtn(DMatrix::identity(3, 3));
        let b = dtn(DMatrix::identity(2, 2));
        assert!(loewner_leq(&a, &b, 1e-12).is_err());
    }

    #[test]
    fn floor_applies_to_zero_matrices() {
        let z = dtn(DMatrix::zeros(2, 2));
        let v = loewner_leq(&z, &z, 1.0).unwrap();
        assert_eq!(v.tolerance, 1e-14);
    }
}
