//! Node lattice and the discrete fractional Laplacian.
//!
//! The operator is the exact lattice fractional Laplacian: its symbol is
//! `(4 sin²(θ/2))^s`, whose Fourier coefficients are available in closed form
//! through Gamma functions. Grid functions are extended by zero outside the
//! truncation box `[-R, R]`, and the box matrix is the restriction of the
//! infinite lattice operator to such functions, scaled by `h^{-2s}` and
//! weighted by `h` so that `u·(L u)` approximates `∫ |(-Δ)^{s/2} u|²`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{arg, Error, Result};
use crate::par::{map_indexed, Schedule};

/// Default upper bound on the number of box nodes (dense storage).
pub const DEFAULT_MAX_NODES: usize = 4001;

const LATTICE_TOL: f64 = 1e-9;
const DIAGONAL_CHECK_TERMS: usize = 20_000;
const DIAGONAL_CHECK_TOL: f64 = 1e-6;

fn check_order(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return arg(format!("fractional order s = {s} must lie in (0, 1)"));
    }
    Ok(())
}

/// `ln(4^s Γ(s+1/2) / (√π |Γ(-s)|))`, using `|Γ(-s)| = Γ(1-s)/s`.
fn ln_prefactor(s: f64) -> f64 {
    s * 4.0_f64.ln() + ln_gamma(s + 0.5)
        - 0.5 * std::f64::consts::PI.ln()
        - (ln_gamma(1.0 - s) - s.ln())
}

/// Lattice kernel `K_s(m)`: the negated `m`-th Fourier coefficient of
/// `θ ↦ (4 sin²(θ/2))^s`.
pub fn kernel_weight(s: f64, m: u64) -> Result<f64> {
    check_order(s)?;
    if m == 0 {
        return arg("kernel_weight needs m >= 1");
    }
    let m = m as f64;
    Ok((ln_prefactor(s) + ln_gamma(m - s) - ln_gamma(m + 1.0 + s)).exp())
}

/// Zeroth Fourier coefficient `Γ(2s+1)/Γ(s+1)²`, equal to `Σ_{m≠0} K_s(m)`.
pub fn diagonal_weight(s: f64) -> Result<f64> {
    check_order(s)?;
    Ok((ln_gamma(2.0 * s + 1.0) - 2.0 * ln_gamma(s + 1.0)).exp())
}

/// `2(Σ_{m=1}^{terms} K_s(m) + tail)` with the tail replaced by the midpoint
/// integral of the leading asymptotic `c·m^{-1-2s}`. The first-order
/// correction of `Γ(m-s)/Γ(m+1+s)` vanishes, so the tail error is
/// `O(terms^{-2-2s})`.
pub fn diagonal_from_sum(s: f64, terms: usize) -> Result<f64> {
    check_order(s)?;
    if terms == 0 {
        return arg("diagonal_from_sum needs at least one term");
    }
    let mut k = kernel_weight(s, 1)?;
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for m in 1..=terms {
        // Neumaier summation
        let t = sum + k;
        if sum.abs() >= k.abs() {
            comp += (sum - t) + k;
        } else {
            comp += (k - t) + sum;
        }
        sum = t;
        let mf = m as f64;
        k *= (mf - s) / (mf + 1.0 + s);
    }
    let tail = ln_prefactor(s).exp() * (terms as f64 + 0.5).powf(-2.0 * s) / (2.0 * s);
    Ok(2.0 * (sum + comp + tail))
}

/// Geometry of the one-dimensional problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Left endpoint of Ω.
    pub omega_lo: f64,
    /// Right endpoint of Ω.
    pub omega_hi: f64,
    /// Half-width `R` of the truncation box.
    pub box_radius: f64,
    /// Node spacing `h`.
    pub spacing: f64,
    /// Fractional order `s`.
    pub order: f64,
    /// Measurement window `O` as closed intervals outside `[omega_lo, omega_hi]`.
    pub windows: Vec<(f64, f64)>,
    /// Largest admissible number of box nodes.
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
}

fn default_max_nodes() -> usize {
    DEFAULT_MAX_NODES
}

impl GridSpec {
    /// Ω = (−1, 1), R = 4, h = 0.05, O = [−1.3, −1.05] ∪ [1.05, 1.3].
    pub fn default_with_order(order: f64) -> Self {
        GridSpec {
            omega_lo: -1.0,
            omega_hi: 1.0,
            box_radius: 4.0,
            spacing: 0.05,
            order,
            windows: vec![(-1.3, -1.05), (1.05, 1.3)],
            max_nodes: DEFAULT_MAX_NODES,
        }
    }

    /// Box radius used when none is configured: four times the larger |endpoint|.
    pub fn default_radius(omega_lo: f64, omega_hi: f64) -> f64 {
        4.0 * omega_lo.abs().max(omega_hi.abs())
    }

    fn lattice_index(&self, x: f64, what: &str) -> Result<i64> {
        let k = x / self.spacing;
        let r = k.round();
        if (k - r).abs() > LATTICE_TOL * r.abs().max(1.0) {
            return arg(format!("{what} = {x} is not a multiple of the spacing {}", self.spacing));
        }
        Ok(r as i64)
    }

    pub fn validate(&self) -> Result<()> {
        check_order(self.order)?;
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return arg(format!("spacing h = {} must be positive", self.spacing));
        }
        if !(self.omega_lo < self.omega_hi) {
            return arg(format!(
                "omega_lo = {} must be smaller than omega_hi = {}",
                self.omega_lo, self.omega_hi
            ));
        }
        if !(self.box_radius > self.omega_lo.abs().max(self.omega_hi.abs())) {
            return arg(format!(
                "box_radius = {} must exceed max(|omega_lo|, |omega_hi|)",
                self.box_radius
            ));
        }
        self.lattice_index(self.omega_lo, "omega_lo")?;
        self.lattice_index(self.omega_hi, "omega_hi")?;
        self.lattice_index(self.box_radius, "box_radius")?;
        if self.windows.is_empty() {
            return arg("measurement window O is empty");
        }
        for &(a, b) in &self.windows {
            if !(a <= b) {
                return arg(format!("measurement window [{a}, {b}] is reversed"));
            }
            if !(a > -self.box_radius && b < self.box_radius) {
                return arg(format!(
                    "measurement window [{a}, {b}] must lie inside (-{r}, {r})",
                    r = self.box_radius
                ));
            }
            if !(b < self.omega_lo || a > self.omega_hi) {
                return arg(format!(
                    "measurement window [{a}, {b}] intersects [{}, {}]",
                    self.omega_lo, self.omega_hi
                ));
            }
        }
        Ok(())
    }
}

/// Lattice nodes `x_j = j·h`, `j ∈ [−N, N]`, with interior, exterior and
/// measurement index sets (indices into the box, ascending).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    spec: GridSpec,
    half: usize,
    interior: Vec<usize>,
    exterior: Vec<usize>,
    measurement: Vec<usize>,
    measurement_in_exterior: Vec<usize>,
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let half = spec.lattice_index(spec.box_radius, "box_radius")? as usize;
        let n = 2 * half + 1;
        if n > spec.max_nodes {
            return Err(Error::Resource(format!(
                "{n} box nodes exceed the configured maximum {}",
                spec.max_nodes
            )));
        }
        let lo = spec.lattice_index(spec.omega_lo, "omega_lo")?;
        let hi = spec.lattice_index(spec.omega_hi, "omega_hi")?;
        let mut interior = Vec::new();
        let mut exterior = Vec::new();
        let mut measurement = Vec::new();
        let mut measurement_in_exterior = Vec::new();
        let eps = LATTICE_TOL * spec.spacing;
        for idx in 0..n {
            let j = idx as i64 - half as i64;
            if j > lo && j < hi {
                interior.push(idx);
                continue;
            }
            let x = j as f64 * spec.spacing;
            if spec.windows.iter().any(|&(a, b)| x >= a - eps && x <= b + eps) {
                measurement.push(idx);
                measurement_in_exterior.push(exterior.len());
            }
            exterior.push(idx);
        }
        if interior.is_empty() {
            return arg("no lattice node lies strictly inside Ω");
        }
        if measurement.is_empty() {
            return arg("no lattice node lies in the measurement window");
        }
        Ok(Grid { spec, half, interior, exterior, measurement, measurement_in_exterior })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn spacing(&self) -> f64 {
        self.spec.spacing
    }

    pub fn order(&self) -> f64 {
        self.spec.order
    }

    pub fn len(&self) -> usize {
        2 * self.half + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of box node `idx`.
    pub fn coord(&self, idx: usize) -> f64 {
        (idx as i64 - self.half as i64) as f64 * self.spec.spacing
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.coord(i)).collect()
    }

    /// Nodes strictly inside Ω.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// All remaining box nodes, including the two endpoints of Ω.
    pub fn exterior(&self) -> &[usize] {
        &self.exterior
    }

    /// Nodes in the measurement window (a subset of the exterior).
    pub fn measurement(&self) -> &[usize] {
        &self.measurement
    }

    /// Positions of the measurement nodes within [`Grid::exterior`].
    pub fn measurement_in_exterior(&self) -> &[usize] {
        &self.measurement_in_exterior
    }

    pub fn interior_coords(&self) -> Vec<f64> {
        self.interior.iter().map(|&i| self.coord(i)).collect()
    }
}

/// Dense discrete fractional Laplacian over all box nodes.
#[derive(Clone, Debug)]
pub struct FracOperator {
    grid: Arc<Grid>,
    matrix: DMatrix<f64>,
}

impl FracOperator {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn order(&self) -> f64 {
        self.grid.order()
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing()
    }

    /// `u·(L u)` for a vector over all box nodes.
    pub fn energy(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.matrix.nrows() {
            return arg(format!("vector of length {} for {} box nodes", u.len(), self.matrix.nrows()));
        }
        let v = nalgebra::DVector::from_column_slice(u);
        Ok(v.dot(&(&self.matrix * &v)))
    }
}

impl FracOperator {
    /// Truncation leakage: `1·(L 1)` per unit box length for the constant
    /// vector on the box. Decreases as the box grows at fixed Ω and `h`.
    pub fn leakage(&self) -> f64 {
        let total: f64 = self.matrix.row_iter().map(|r| r.sum()).sum();
        total / (2.0 * self.grid.spec().box_radius)
    }
}

/// Assemble `L[j][k] = −h^{1−2s} K_s(|j−k|)` and `L[j][j] = h^{1−2s} d_s`.
///
/// The closed-form diagonal is cross-checked against the truncated kernel
/// sum; a discrepancy above `1e-6` is reported as a numerical failure.
pub fn assemble_operator(grid: Arc<Grid>, schedule: Schedule) -> Result<FracOperator> {
    let s = grid.order();
    let h = grid.spacing();
    let n = grid.len();
    if n > grid.spec().max_nodes {
        return Err(Error::Resource(format!(
            "{n} box nodes exceed the configured maximum {}",
            grid.spec().max_nodes
        )));
    }
    let d = diagonal_weight(s)?;
    let check = diagonal_from_sum(s, DIAGONAL_CHECK_TERMS)?;
    if (d - check).abs() > DIAGONAL_CHECK_TOL * d {
        return Err(Error::Numerical(format!(
            "diagonal weight {d} disagrees with kernel sum {check} for s = {s}"
        )));
    }
    let scale = h.powf(1.0 - 2.0 * s);
    let mut kernel = Vec::with_capacity(n);
    kernel.push(d);
    for m in 1..n {
        kernel.push(-kernel_weight(s, m as u64)?);
    }
    // Symmetric Toeplitz: column j is also row j.
    let columns = map_indexed(n, schedule, |j| {
        (0..n).map(|i| scale * kernel[i.abs_diff(j)]).collect::<Vec<f64>>()
    });
    let mut data = Vec::with_capacity(n * n);
    for col in columns {
        data.extend(col);
    }
    Ok(FracOperator { grid, matrix: DMatrix::from_vec(n, n, data) })
}
