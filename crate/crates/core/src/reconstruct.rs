//! Inversion algorithms built on the Loewner-order tests.
//!
//! * [`pixel_sup_reconstruct`]: for each pixel, the largest `α` with
//!   `Λ(α χ_m) ≤ Λ_meas`.
//! * [`support_from_closed_sets`]: a pixel is outside the support of `q1 − q0`
//!   when `−α T_C ≤ Λ(q1) − Λ(q0) ≤ α T_C` holds for `C` = all other pixels.
//! * [`inner_support_definite`]: in the definite case, the largest `α` with
//!   `α T_p ≤ ±(Λ(q1) − Λ(q0))` separates inclusion pixels from the rest.
//! * [`localized_potential`] and [`runge_approximate`]: regularized least
//!   squares over the solution operator.

use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::dtn::{testing_operator, DtnMatrix, TestOperator};
use crate::error::{arg, Error, Result};
use crate::forward::{ExteriorData, Potential, SolutionOperator};
use crate::linalg::{frobenius, max_eigenvalue};
use crate::order::loewner_leq;
use crate::par::{map_indexed, Schedule};
use crate::pipeline::Model;

const MAX_BISECTIONS: u32 = 60;
const TEST_POTENTIAL_NOTE: &str =
    "test potentials alpha*chi_m vanish off the pixel and are not strictly positive; the discrete system stays coercive";

/// Contiguous, disjoint pixels covering the interior nodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PixelPartition {
    n_interior: usize,
    ranges: Vec<Range<usize>>,
}

impl PixelPartition {
    /// `m` pixels of near-equal size; the first `n mod m` pixels get one
    /// extra node.
    pub fn uniform(n_interior: usize, m: usize) -> Result<Self> {
        if m == 0 || m > n_interior {
            return arg(format!("cannot split {n_interior} interior nodes into {m} nonempty pixels"));
        }
        let (base, extra) = (n_interior / m, n_interior % m);
        let mut ranges = Vec::with_capacity(m);
        let mut start = 0;
        for p in 0..m {
            let len = base + usize::from(p < extra);
            ranges.push(start..start + len);
            start += len;
        }
        Ok(PixelPartition { n_interior, ranges })
    }

    /// Pixels from explicit ranges of interior positions.
    pub fn from_ranges(n_interior: usize, ranges: Vec<Range<usize>>) -> Result<Self> {
        let mut next = 0;
        for (p, r) in ranges.iter().enumerate() {
            if r.start != next || r.end <= r.start {
                return arg(format!("pixel {p} ({r:?}) is empty or leaves a gap/overlap at position {next}"));
            }
            next = r.end;
        }
        if next != n_interior {
            return arg(format!("pixels cover {next} of {n_interior} interior nodes"));
        }
        Ok(PixelPartition { n_interior, ranges })
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn range(&self, p: usize) -> Range<usize> {
        self.ranges[p].clone()
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn mask(&self, p: usize) -> Vec<bool> {
        (0..self.n_interior).map(|j| self.ranges[p].contains(&j)).collect()
    }

    pub fn complement_mask(&self, p: usize) -> Vec<bool> {
        self.mask(p).into_iter().map(|b| !b).collect()
    }

    /// Piecewise-constant interior values from one value per pixel.
    pub fn expand(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.len() {
            return arg(format!("{} values for {} pixels", values.len(), self.len()));
        }
        let mut out = vec![0.0; self.n_interior];
        for (r, &v) in self.ranges.iter().zip(values) {
            out[r.clone()].fill(v);
        }
        Ok(out)
    }

    fn check(&self, n_interior: usize) -> Result<()> {
        if self.n_interior != n_interior {
            return arg(format!(
                "partition covers {} interior nodes, grid has {n_interior}",
                self.n_interior
            ));
        }
        Ok(())
    }
}

/// Where a bisection ended relative to its search range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Clamp {
    None,
    /// The predicate already holds at the upper end.
    Upper,
    /// The predicate fails at the lower end.
    Lower,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PotentialResult {
    pub alpha: Vec<f64>,
    pub iterations: Vec<u32>,
    pub clamp: Vec<Clamp>,
    /// `λ_min(Λ_meas − Λ(α_m χ_m))` at the reported `α_m`.
    pub lambda_min: Vec<f64>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct PixelSupOptions {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    /// Stop width; `None` means `1e-3·(alpha_hi − alpha_lo)`.
    pub bisect_tol: Option<f64>,
    pub tol_rel: f64,
    pub schedule: Schedule,
}

impl Default for PixelSupOptions {
    fn default() -> Self {
        PixelSupOptions { alpha_lo: 0.0, alpha_hi: 8.0, bisect_tol: None, tol_rel: 1e-13, schedule: Schedule::default() }
    }
}

struct Bisection {
    value: f64,
    iterations: u32,
    clamp: Clamp,
}

/// Largest `x` in `[lo, hi]` with `pred(x)`, for a predicate that holds on an
/// initial segment.
fn bisect_sup(lo: f64, hi: f64, width: f64, mut pred: impl FnMut(f64) -> Result<bool>) -> Result<Bisection> {
    if pred(hi)? {
        return Ok(Bisection { value: hi, iterations: 0, clamp: Clamp::Upper });
    }
    if !pred(lo)? {
        return Ok(Bisection { value: lo, iterations: 0, clamp: Clamp::Lower });
    }
    let (mut a, mut b) = (lo, hi);
    let mut iterations = 0;
    while iterations < MAX_BISECTIONS && b - a > width {
        let mid = 0.5 * (a + b);
        if pred(mid)? {
            a = mid;
        } else {
            b = mid;
        }
        iterations += 1;
    }
    Ok(Bisection { value: a, iterations, clamp: Clamp::None })
}

/// Per-pixel supremum `α_m = sup{α : Λ(α χ_m) ≤ Λ_meas}`.
pub fn pixel_sup_reconstruct(
    model: &Model,
    measured: &DtnMatrix,
    pixels: &PixelPartition,
    opts: &PixelSupOptions,
) -> Result<PotentialResult> {
    pixels.check(model.n_interior())?;
    if measured.dim() != model.n_measurement() {
        return arg(format!(
            "measured matrix is {}x{}, grid has {} measurement nodes",
            measured.dim(),
            measured.dim(),
            model.n_measurement()
        ));
    }
    if !(opts.alpha_lo < opts.alpha_hi) || !opts.alpha_lo.is_finite() || !opts.alpha_hi.is_finite() {
        return arg("alpha range must satisfy alpha_lo < alpha_hi");
    }
    if opts.alpha_lo < 0.0 {
        return arg("alpha_lo must be nonnegative (potentials are nonnegative)");
    }
    let width = opts.bisect_tol.unwrap_or(1e-3 * (opts.alpha_hi - opts.alpha_lo));
    if !(width > 0.0) {
        return arg("bisect_tol must be positive");
    }

    let per_pixel = map_indexed(pixels.len(), opts.schedule, |p| -> Result<(Bisection, f64)> {
        let test = |alpha: f64| -> Result<DtnMatrix> {
            let q = Potential::new(pixels.expand(&indicator(pixels.len(), p, alpha))?)?;
            model.dtn(&q)
        };
        let b = bisect_sup(opts.alpha_lo, opts.alpha_hi, width, |alpha| {
            Ok(loewner_leq(&test(alpha)?, measured, opts.tol_rel)?.pass)
        })?;
        let witness = loewner_leq(&test(b.value)?, measured, opts.tol_rel)?.lambda_min;
        Ok((b, witness))
    });

    let mut result = PotentialResult {
        alpha: Vec::new(),
        iterations: Vec::new(),
        clamp: Vec::new(),
        lambda_min: Vec::new(),
        notes: vec![TEST_POTENTIAL_NOTE.to_string()],
    };
    for r in per_pixel {
        let (b, w) = r?;
        result.alpha.push(b.value);
        result.iterations.push(b.iterations);
        result.clamp.push(b.clamp);
        result.lambda_min.push(w);
    }
    Ok(result)
}

fn indicator(m: usize, p: usize, value: f64) -> Vec<f64> {
    let mut v = vec![0.0; m];
    v[p] = value;
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeMode {
    Indefinite,
    Definite,
}

/// Per-pixel evidence behind a shape decision.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PixelWitness {
    /// Indefinite mode: `λ_min(α_cap T_C − ΔΛ)` and `λ_min(α_cap T_C + ΔΛ)`.
    /// Definite mode: `λ_min(±ΔΛ − α* T_p)`.
    pub lambda_min: Vec<f64>,
    /// Definite mode: the largest admissible `α` for this pixel.
    pub alpha_star: Option<f64>,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShapeResult {
    pub mode: ShapeMode,
    pub inside: Vec<bool>,
    pub witness: Vec<PixelWitness>,
    pub alpha_cap: Option<f64>,
    pub threshold: Option<f64>,
    pub notes: Vec<String>,
}

impl ShapeResult {
    pub fn support(&self) -> Vec<usize> {
        (0..self.inside.len()).filter(|&p| self.inside[p]).collect()
    }
}

/// How `α_cap` is chosen for the closed-set test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CapRule {
    /// `κ` times the smallest `α` with `−α T_I ≤ ΔΛ ≤ α T_I`.
    Auto { kappa: f64 },
    Fixed(f64),
}

impl Default for CapRule {
    fn default() -> Self {
        CapRule::Auto { kappa: 1.6 }
    }
}

fn two_sided(delta: &DtnMatrix, t: &TestOperator, alpha: f64, tol_rel: f64) -> Result<(bool, [f64; 2], f64)> {
    let at = t.scaled(alpha);
    let upper = loewner_leq(delta, &at, tol_rel)?;
    let lower = loewner_leq(&at.negated(), delta, tol_rel)?;
    Ok((upper.pass && lower.pass, [upper.lambda_min, lower.lambda_min], upper.tolerance.max(lower.tolerance)))
}

/// Smallest `α > 0` (to relative precision) with `−α T ≤ ΔΛ ≤ α T`.
fn min_two_sided_alpha(delta: &DtnMatrix, t: &TestOperator, tol_rel: f64) -> Result<f64> {
    let ok = |a: f64| two_sided(delta, t, a, tol_rel).map(|r| r.0);
    let mut hi = 1.0;
    while !ok(hi)? {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Numerical("no finite alpha satisfies the two-sided bound".into()));
        }
    }
    let mut lo = hi / 2.0;
    while ok(lo)? {
        hi = lo;
        lo /= 2.0;
        if lo < 1e-300 {
            return Ok(hi);
        }
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = (lo * hi).sqrt();
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Outer approximation of `supp(q1 − q0)` at the pixel scale.
///
/// Pixel `p` is marked outside when both `ΔΛ ≤ α_cap T_C` and
/// `−α_cap T_C ≤ ΔΛ` hold for `C` the union of all other pixels.
pub fn support_from_closed_sets(
    delta: &DtnMatrix,
    s0: &SolutionOperator,
    pixels: &PixelPartition,
    cap: CapRule,
    tol_rel: f64,
    schedule: Schedule,
) -> Result<ShapeResult> {
    pixels.check(s0.matrix().nrows())?;
    if delta.dim() != s0.matrix().ncols() {
        return arg("DtN change does not match the solution operator");
    }
    let mut notes = Vec::new();
    let alpha_cap = match cap {
        CapRule::Fixed(a) if !(a > 0.0) || !a.is_finite() => return arg("alpha_cap must be positive"),
        CapRule::Fixed(a) => a,
        CapRule::Auto { kappa } if !(kappa > 0.0) || !kappa.is_finite() => return arg("kappa must be positive"),
        CapRule::Auto { kappa } => {
            let t_all = testing_operator(s0, &vec![true; pixels.n_interior()])?;
            let base = if frobenius(delta.correction()) == 0.0 { 0.0 } else { min_two_sided_alpha(delta, &t_all, tol_rel)? };
            notes.push(format!("auto alpha_cap = {kappa} * {base:e}"));
            kappa * base
        }
    };

    let per_pixel = map_indexed(pixels.len(), schedule, |p| -> Result<(bool, PixelWitness)> {
        let t = testing_operator(s0, &pixels.complement_mask(p))?;
        let (outside, lambda, tolerance) = two_sided(delta, &t, alpha_cap, tol_rel)?;
        Ok((!outside, PixelWitness { lambda_min: lambda.to_vec(), alpha_star: None, tolerance }))
    });
    let (inside, witness) = per_pixel.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok(ShapeResult { mode: ShapeMode::Indefinite, inside, witness, alpha_cap: Some(alpha_cap), threshold: None, notes })
}

/// Inner support in the definite case (`sign = +1` for `q1 ≥ q0`, `−1` for
/// `q1 ≤ q0`): pixel `p` is inside when `α*_p = max{α : α T_p ≤ sign·ΔΛ}`
/// exceeds `threshold`.
pub fn inner_support_definite(
    delta: &DtnMatrix,
    sign: i8,
    s0: &SolutionOperator,
    pixels: &PixelPartition,
    threshold: f64,
    tol_rel: f64,
    schedule: Schedule,
) -> Result<ShapeResult> {
    pixels.check(s0.matrix().nrows())?;
    if delta.dim() != s0.matrix().ncols() {
        return arg("DtN change does not match the solution operator");
    }
    let signed = match sign {
        1 => delta.clone(),
        -1 => delta.negated(),
        _ => return arg("sign must be +1 or -1"),
    };
    if !(threshold >= 0.0) {
        return arg("threshold must be nonnegative");
    }
    let delta_norm = frobenius(signed.correction());

    let per_pixel = map_indexed(pixels.len(), schedule, |p| -> Result<(bool, PixelWitness)> {
        let t = testing_operator(s0, &pixels.mask(p))?;
        let top = max_eigenvalue(t.matrix())?;
        let test = |a: f64| loewner_leq(&t.scaled(a), &signed, tol_rel);
        let alpha = if top <= 0.0 {
            0.0
        } else {
            let hi = 2.0 * (delta_norm + tol_rel * delta_norm.max(1e-14)) / top;
            let b = bisect_sup(0.0, hi, 0.0, |a| Ok(test(a)?.pass))?;
            b.value
        };
        let v = test(alpha)?;
        Ok((
            alpha > threshold,
            PixelWitness { lambda_min: vec![v.lambda_min], alpha_star: Some(alpha), tolerance: v.tolerance },
        ))
    });
    let (inside, witness) = per_pixel.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok(ShapeResult {
        mode: ShapeMode::Definite,
        inside,
        witness,
        alpha_cap: None,
        threshold: Some(threshold),
        notes: Vec::new(),
    })
}

/// Ridge solution of `min ‖S F − t‖²_h + λ‖F‖²`, with the relative residual of
/// its normal equations.
fn ridge(s: &SolutionOperator, target: &[f64], lambda: f64) -> Result<(DVector<f64>, f64)> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return arg("regularization parameter must be positive");
    }
    let sm = s.matrix();
    if target.len() != sm.nrows() {
        return arg(format!("target has {} values for {} interior nodes", target.len(), sm.nrows()));
    }
    let h = s.spacing();
    let normal = sm.transpose() * sm * h + DMatrix::identity(sm.ncols(), sm.ncols()) * lambda;
    let rhs = sm.transpose() * DVector::from_column_slice(target) * h;
    let chol = Cholesky::new(normal.clone())
        .ok_or_else(|| Error::Numerical("regularized normal equations are not positive definite".into()))?;
    let f = chol.solve(&rhs);
    let residual = (&normal * &f - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE);
    Ok((f, residual))
}

/// Localized potential for the interior mask `M`.
#[derive(Clone, Debug)]
pub struct LocalizedPotential {
    /// Rescaled data on the measurement nodes.
    pub data: Vec<f64>,
    pub exterior: ExteriorData,
    /// `h Σ_M u²`.
    pub energy_inside: f64,
    /// `h Σ_{I∖M} u²`.
    pub energy_outside: f64,
    pub ratio: f64,
    /// Relative residual of the normal equations.
    pub residual: f64,
}

pub fn localized_potential(s: &SolutionOperator, mask: &[bool], lambda: f64) -> Result<LocalizedPotential> {
    let n = s.matrix().nrows();
    if mask.len() != n {
        return arg(format!("mask has {} entries for {n} interior nodes", mask.len()));
    }
    let count = mask.iter().filter(|&&b| b).count();
    if count == 0 || count == n {
        return arg("mask must be a nonempty proper subset of the interior");
    }
    let h = s.spacing();
    let target: Vec<f64> = mask.iter().map(|&b| if b { 1.0 / (h * count as f64) } else { 0.0 }).collect();
    let (f, residual) = ridge(s, &target, lambda)?;
    let energy = |u: &DVector<f64>, inside: bool| -> f64 {
        h * u.iter().zip(mask).filter(|(_, &m)| m == inside).map(|(v, _)| v * v).sum::<f64>()
    };
    let u = s.matrix() * &f;
    let outside = energy(&u, false);
    if outside == 0.0 {
        return Err(Error::Argument("solution vanishes off the mask; rescaling is undefined".into()));
    }
    let factor = outside.sqrt().sqrt().recip();
    let f = f * factor;
    let u = u * factor;
    let (energy_inside, energy_outside) = (energy(&u, true), energy(&u, false));
    let data: Vec<f64> = f.iter().copied().collect();
    let exterior = ExteriorData::from_measurement(s.grid(), &data)?;
    Ok(LocalizedPotential {
        data,
        exterior,
        energy_inside,
        energy_outside,
        ratio: energy_inside / energy_outside,
        residual,
    })
}

#[derive(Clone, Debug)]
pub struct RungeApproximation {
    pub data: Vec<f64>,
    pub exterior: ExteriorData,
    /// `(h Σ (S F − f)²)^{1/2}`.
    pub error: f64,
    pub residual: f64,
}

/// Approximate an interior target by restricted solutions.
pub fn runge_approximate(s: &SolutionOperator, target: &[f64], lambda: f64) -> Result<RungeApproximation> {
    let (f, residual) = ridge(s, target, lambda)?;
    let u = s.matrix() * &f;
    let error = (s.spacing() * u.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sqrt();
    let data: Vec<f64> = f.iter().copied().collect();
    let exterior = ExteriorData::from_measurement(s.grid(), &data)?;
    Ok(RungeApproximation { data, exterior, error, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_partition_sizes() {
        let p = PixelPartition::uniform(39, 8).unwrap();
        let sizes: Vec<usize> = p.ranges().iter().map(|r| r.len()).collect();
        assert_eq!(sizes, vec![5, 5, 5, 5, 5, 5, 5, 4]);
        assert_eq!(p.range(7), 35..39);
        assert!(PixelPartition::uniform(3, 4).is_err());
        assert!(PixelPartition::uniform(3, 0).is_err());
    }

    #[test]
    fn explicit_ranges_are_validated() {
        assert!(PixelPartition::from_ranges(5, vec![0..2, 2..5]).is_ok());
        assert!(PixelPartition::from_ranges(5, vec![0..2, 3..5]).is_err());
        assert!(PixelPartition::from_ranges(5, vec![0..2, 2..4]).is_err());
        assert!(PixelPartition::from_ranges(5, vec![0..0, 0..5]).is_err());
    }

    #[test]
    fn expand_and_masks() {
        let p = PixelPartition::uniform(5, 2).unwrap();
        assert_eq!(p.expand(&[1.0, 2.0]).unwrap(), vec![1.0, 1.0, 1.0, 2.0, 2.0]);
        assert_eq!(p.mask(1), vec![false, false, false, true, true]);
        assert_eq!(p.complement_mask(1), vec![true, true, true, false, false]);
    }

    #[test]
    fn bisection_finds_threshold() {
        let b = bisect_sup(0.0, 8.0, 1e-6, |x| Ok(x <= 3.0)).unwrap();
        assert!((b.value - 3.0).abs() <= 1e-6);
        assert_eq!(b.clamp, Clamp::None);
        assert_eq!(bisect_sup(0.0, 8.0, 1e-6, |_| Ok(true)).unwrap().clamp, Clamp::Upper);
        assert_eq!(bisect_sup(0.0, 8.0, 1e-6, |_| Ok(false)).unwrap().clamp, Clamp::Lower);
    }

    #[test]
    fn bisection_iteration_cap() {
        let b = bisect_sup(0.0, 1.0, 0.0, |x| Ok(x < 0.3)).unwrap();
        assert_eq!(b.iterations, MAX_BISECTIONS);
    }
}
