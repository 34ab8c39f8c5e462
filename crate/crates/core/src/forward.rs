//! Exterior-value Dirichlet problem `(-Δ)^s u + q u = f` in Ω, `u = F` outside.
//!
//! In nodal coordinates the weak form is `A u = h f` on interior rows with
//! `A = L + h·diag(q̃)` (`q̃ = q` on interior nodes, 0 elsewhere). The interior
//! block `A_II` is symmetric positive definite for every `q ≥ 0`, so one
//! Cholesky factorization serves all right-hand sides.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::discretize::{FracOperator, Grid};
use crate::error::{arg, Error, Result};
use crate::linalg::{min_eigenvalue, submatrix};

const RESIDUAL_TOL: f64 = 1e-10;

/// Nonnegative potential values on the interior nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    values: Vec<f64>,
    strict_positive: bool,
}

impl Potential {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return arg(format!("potential value {v} at interior node {i} is not a finite nonnegative number"));
        }
        let strict_positive = !values.is_empty() && values.iter().all(|&v| v > 0.0);
        Ok(Potential { values, strict_positive })
    }

    pub fn constant(len: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; len])
    }

    /// Evaluate `f` at the interior node coordinates of `grid`.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid.interior_coords().into_iter().map(f).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True when every entry is strictly positive (the `L^∞_+` class).
    pub fn strict_positive(&self) -> bool {
        self.strict_positive
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Dirichlet data on the exterior nodes, zero outside `support`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExteriorData {
    values: Vec<f64>,
    support: Vec<usize>,
}

impl ExteriorData {
    /// `values` indexed like [`Grid::exterior`]; `support` lists positions
    /// (ascending) where nonzero values are allowed.
    pub fn new(grid: &Grid, values: Vec<f64>, mut support: Vec<usize>) -> Result<Self> {
        if values.len() != grid.exterior().len() {
            return arg(format!(
                "exterior data has {} entries, grid has {} exterior nodes",
                values.len(),
                grid.exterior().len()
            ));
        }
        support.sort_unstable();
        support.dedup();
        if support.last().is_some_and(|&p| p >= values.len()) {
            return arg("support position out of range");
        }
        let mut inside = vec![false; values.len()];
        for &p in &support {
            inside[p] = true;
        }
        if let Some(p) = (0..values.len()).find(|&p| !inside[p] && values[p] != 0.0) {
            return arg(format!("exterior data is nonzero at position {p} outside its support"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return arg("exterior data must be finite");
        }
        Ok(ExteriorData { values, support })
    }

    pub fn zeros(grid: &Grid) -> Self {
        ExteriorData { values: vec![0.0; grid.exterior().len()], support: Vec::new() }
    }

    /// Data supported on the measurement nodes, given in measurement order.
    pub fn from_measurement(grid: &Grid, data: &[f64]) -> Result<Self> {
        let pos = grid.measurement_in_exterior();
        if data.len() != pos.len() {
            return arg(format!("{} measurement values for {} measurement nodes", data.len(), pos.len()));
        }
        let mut values = vec![0.0; grid.exterior().len()];
        for (&p, &v) in pos.iter().zip(data) {
            values[p] = v;
        }
        Self::new(grid, values, pos.to_vec())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Values on the measurement nodes, if the support lies inside them.
    pub fn measurement_values(&self, grid: &Grid) -> Result<Vec<f64>> {
        let pos = grid.measurement_in_exterior();
        if self.support.iter().any(|p| pos.binary_search(p).is_err()) {
            return arg("exterior data is not supported in the measurement window");
        }
        Ok(pos.iter().map(|&p| self.values[p]).collect())
    }
}

/// Nodal values of a solution on all box nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    values: Vec<f64>,
}

impl Solution {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interior(&self, grid: &Grid) -> Vec<f64> {
        grid.interior().iter().map(|&i| self.values[i]).collect()
    }
}

/// `A = L + h·diag(q̃)` with a cached Cholesky factor of `A_II`.
#[derive(Clone, Debug)]
pub struct SystemMatrix {
    grid: Arc<Grid>,
    potential: Potential,
    matrix: DMatrix<f64>,
    a_ii: DMatrix<f64>,
    a_ie: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
}

/// Interior values of solutions for each measurement basis vector:
/// column `g` is `u_I` for `F = e_g`.
#[derive(Clone, Debug)]
pub struct SolutionOperator {
    grid: Arc<Grid>,
    matrix: DMatrix<f64>,
}

impl SolutionOperator {
    pub(crate) fn from_parts(grid: Arc<Grid>, matrix: DMatrix<f64>) -> Self {
        SolutionOperator { grid, matrix }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `|I| × |Om|` matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing()
    }

    /// Interior solution for measurement data `data`.
    pub fn apply(&self, data: &[f64]) -> Result<Vec<f64>> {
        if data.len() != self.matrix.ncols() {
            return arg(format!("{} values for {} measurement nodes", data.len(), self.matrix.ncols()));
        }
        Ok((&self.matrix * DVector::from_column_slice(data)).as_slice().to_vec())
    }
}

/// Assemble and factorize the system for potential `q`.
pub fn assemble_system(op: &FracOperator, q: &Potential) -> Result<SystemMatrix> {
    let grid = op.grid().clone();
    if q.len() != grid.interior().len() {
        return arg(format!(
            "potential has {} values, grid has {} interior nodes",
            q.len(),
            grid.interior().len()
        ));
    }
    let h = grid.spacing();
    let mut matrix = op.matrix().clone();
    for (&i, &v) in grid.interior().iter().zip(q.values()) {
        matrix[(i, i)] += h * v;
    }
    let a_ii = submatrix(&matrix, grid.interior(), grid.interior());
    let a_ie = submatrix(&matrix, grid.interior(), grid.exterior());
    let factor = match Cholesky::new(a_ii.clone()) {
        Some(f) => f,
        None => {
            let lambda = min_eigenvalue(&a_ii).unwrap_or(f64::NAN);
            return Err(Error::Numerical(format!(
                "interior block is not positive definite (smallest eigenvalue ≈ {lambda:e})"
            )));
        }
    };
    Ok(SystemMatrix { grid, potential: q.clone(), matrix, a_ii, a_ie, factor })
}

impl SystemMatrix {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// The full matrix `A` over all box nodes.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn interior_block(&self) -> &DMatrix<f64> {
        &self.a_ii
    }

    /// Smallest eigenvalue of `A_II`.
    pub fn interior_lambda_min(&self) -> Result<f64> {
        min_eigenvalue(&self.a_ii)
    }

    /// `A_II^{-1} rhs` using the cached factor.
    pub fn solve_interior(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor.solve(rhs)
    }

    pub(crate) fn factor(&self) -> &Cholesky<f64, Dyn> {
        &self.factor
    }

    /// Solve with exterior data `data` and interior source `source` (one value
    /// per interior node).
    pub fn solve_dirichlet(&self, data: &ExteriorData, source: &[f64]) -> Result<Solution> {
        let grid = &self.grid;
        if data.values().len() != grid.exterior().len() {
            return arg("exterior data does not match the grid");
        }
        if source.len() != grid.interior().len() {
            return arg(format!(
                "source has {} values, grid has {} interior nodes",
                source.len(),
                grid.interior().len()
            ));
        }
        let h = grid.spacing();
        let f_e = DVector::from_column_slice(data.values());
        let coupling = &self.a_ie * &f_e;
        let rhs = DVector::from_iterator(source.len(), source.iter().map(|v| h * v)) - &coupling;
        let u_i = self.factor.solve(&rhs);

        let residual = (&self.a_ii * &u_i + &coupling - DVector::from_iterator(source.len(), source.iter().map(|v| h * v))).norm();
        let scale = self.a_ii.norm() * u_i.norm() + coupling.norm() + h * source.iter().map(|v| v * v).sum::<f64>().sqrt();
        if residual > RESIDUAL_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!("Dirichlet solve residual {residual:e} exceeds tolerance")));
        }

        let mut values = vec![0.0; grid.len()];
        for (&i, &v) in grid.exterior().iter().zip(data.values()) {
            values[i] = v;
        }
        for (&i, &v) in grid.interior().iter().zip(u_i.iter()) {
            values[i] = v;
        }
        Ok(Solution { values })
    }

    /// `S = −A_II^{-1} A_{I,Om}`.
    pub fn solution_operator(&self) -> SolutionOperator {
        let cols: Vec<usize> = self.grid.measurement_in_exterior().to_vec();
        let a_im = DMatrix::from_fn(self.a_ie.nrows(), cols.len(), |i, j| self.a_ie[(i, cols[j])]);
        let s = -self.factor.solve(&a_im);
        SolutionOperator::from_parts(self.grid.clone(), s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{assemble_operator, GridSpec};
    use crate::Schedule;

    fn op() -> FracOperator {
        let g = Arc::new(Grid::new(GridSpec::default_with_order(0.5)).unwrap());
        assemble_operator(g, Schedule::Sequential).unwrap()
    }

    #[test]
    fn potential_validation() {
        assert!(Potential::new(vec![1.0, -0.1]).is_err());
        assert!(Potential::new(vec![1.0, f64::NAN]).is_err());
        let p = Potential::new(vec![0.0, 2.0]).unwrap();
        assert!(!p.strict_positive());
        assert!(Potential::new(vec![0.5, 2.0]).unwrap().strict_positive());
    }

    #[test]
    fn exterior_data_support_invariant() {
        let op = op();
        let g = op.grid();
        let mut v = vec![0.0; g.exterior().len()];
        v[0] = 1.0;
        assert!(ExteriorData::new(g, v.clone(), vec![1]).is_err());
        assert!(ExteriorData::new(g, v, vec![0]).is_ok());
    }

    #[test]
    fn system_matrix_definition() {
        let op = op();
        let g = op.grid().clone();
        let q = Potential::constant(g.interior().len(), 2.0).unwrap();
        let sys = assemble_system(&op, &q).unwrap();
        let mut expected = op.matrix().clone();
        for &i in g.interior() {
            expected[(i, i)] += g.spacing() * 2.0;
        }
        assert_eq!(sys.matrix(), &expected);
        assert!(sys.interior_lambda_min().unwrap() >= g.spacing() * 2.0);
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let op = op();
        let g = op.grid().clone();
        let sys = assemble_system(&op, &Potential::constant(g.interior().len(), 0.0).unwrap()).unwrap();
        let u = sys.solve_dirichlet(&ExteriorData::zeros(&g), &vec![0.0; g.interior().len()]).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let op = op();
        assert!(assemble_system(&op, &Potential::constant(3, 1.0).unwrap()).is_err());
        let g = op.grid().clone();
        let sys = assemble_system(&op, &Potential::constant(g.interior().len(), 1.0).unwrap()).unwrap();
        assert!(sys.solve_dirichlet(&ExteriorData::zeros(&g), &[0.0]).is_err());
    }
}
