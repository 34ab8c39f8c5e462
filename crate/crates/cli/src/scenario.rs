//! Scenario files: JSON in, validated model inputs out.

use std::path::PathBuf;

use fracmono_core::{GridSpec, Model, PixelPartition, Potential, Schedule};
use serde::Deserialize;

use crate::error::Failure;

pub const SCHEMA_VERSION: u32 = 1;
pub const LENGTH_UNIT: &str = "nondimensional";
pub const POTENTIAL_UNIT: &str = "length^-2s";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub units: Units,
    #[serde(default)]
    pub description: Option<String>,
    pub grid: GridConfig,
    pub q0: Vec<Piece>,
    #[serde(default)]
    pub q1: Option<Vec<Piece>>,
    #[serde(default = "default_pixels")]
    pub pixels: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub forward: ForwardConfig,
    #[serde(default)]
    pub localize: Option<LocalizeConfig>,
    pub prng: PrngConfig,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub length: String,
    pub potential: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub omega: [f64; 2],
    #[serde(default)]
    pub box_radius: Option<f64>,
    pub spacing: f64,
    pub order: f64,
    pub windows: Vec<[f64; 2]>,
    #[serde(default)]
    pub max_nodes: Option<usize>,
}

/// A constant value on the half-open interval `[interval[0], interval[1])`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piece {
    pub interval: [f64; 2],
    pub value: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative Loewner tolerance for reconstructions.
    pub tol_rel: f64,
    /// Relative slack tolerance for `verify`.
    pub verify_tol: f64,
    pub bisect_tol: Option<f64>,
    pub alpha_range: [f64; 2],
    pub lambda_reg: Vec<f64>,
    pub kappa: f64,
    /// Fixed cap for the indefinite shape test; overrides `kappa`.
    pub alpha_cap: Option<f64>,
    pub threshold: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_rel: 1e-13,
            verify_tol: 1e-8,
            bisect_tol: None,
            alpha_range: [0.0, 8.0],
            lambda_reg: vec![1e-1, 1e-3, 1e-5],
            kappa: 1.6,
            alpha_cap: None,
            threshold: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardConfig {
    /// Dirichlet values on the measurement nodes; all ones when absent.
    #[serde(default)]
    pub data: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizeConfig {
    /// Open intervals; interior nodes strictly inside any of them form the mask.
    pub mask: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrngConfig {
    pub algorithm: String,
    pub seed: u64,
}

fn default_pixels() -> usize {
    8
}

fn default_trials() -> usize {
    20
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn config(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

pub fn parse(text: &str) -> Result<Scenario, Failure> {
    serde_json::from_str(text).map_err(|e| config(format!("scenario: {e}")))
}

/// A scenario checked against the grid it describes.
pub struct Prepared {
    pub scenario: Scenario,
    pub model: Model,
    pub pixels: PixelPartition,
    pub q0: Potential,
    pub q1: Option<Potential>,
}

impl Scenario {
    pub fn grid_spec(&self) -> Result<GridSpec, Failure> {
        let g = &self.grid;
        if !(g.order > 0.0 && g.order < 1.0) {
            return Err(config(format!("grid.order: s = {} must lie in (0, 1)", g.order)));
        }
        if !(g.spacing > 0.0 && g.spacing.is_finite()) {
            return Err(config(format!("grid.spacing: h = {} must be positive", g.spacing)));
        }
        let [lo, hi] = g.omega;
        let mut spec = GridSpec::default_with_order(g.order);
        spec.omega_lo = lo;
        spec.omega_hi = hi;
        spec.box_radius = g.box_radius.unwrap_or_else(|| GridSpec::default_radius(lo, hi));
        spec.spacing = g.spacing;
        spec.windows = g.windows.iter().map(|w| (w[0], w[1])).collect();
        if let Some(n) = g.max_nodes {
            spec.max_nodes = n;
        }
        spec.validate().map_err(|e| config(format!("grid: {e}")))?;
        Ok(spec)
    }

    fn check_fields(&self) -> Result<(), Failure> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config(format!(
                "schema_version: {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.units.length != LENGTH_UNIT {
            return Err(config(format!("units.length: expected \"{LENGTH_UNIT}\", got \"{}\"", self.units.length)));
        }
        if self.units.potential != POTENTIAL_UNIT {
            return Err(config(format!(
                "units.potential: expected \"{POTENTIAL_UNIT}\", got \"{}\"",
                self.units.potential
            )));
        }
        if self.prng.algorithm != "chacha8" {
            return Err(config(format!("prng.algorithm: \"{}\" is not supported (use \"chacha8\")", self.prng.algorithm)));
        }
        if self.pixels == 0 {
            return Err(config("pixels: must be at least 1"));
        }
        if self.trials == 0 {
            return Err(config("trials: must be at least 1"));
        }
        let t = &self.tolerances;
        for (name, v) in [("tol_rel", t.tol_rel), ("verify_tol", t.verify_tol), ("kappa", t.kappa), ("threshold", t.threshold)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config(format!("tolerances.{name}: {v} must be positive")));
            }
        }
        if let Some(b) = t.bisect_tol {
            if !(b > 0.0 && b.is_finite()) {
                return Err(config(format!("tolerances.bisect_tol: {b} must be positive")));
            }
        }
        if let Some(c) = t.alpha_cap {
            if !(c > 0.0 && c.is_finite()) {
                return Err(config(format!("tolerances.alpha_cap: {c} must be positive")));
            }
        }
        let [a, b] = t.alpha_range;
        if !(a >= 0.0 && a < b && b.is_finite()) {
            return Err(config(format!("tolerances.alpha_range: [{a}, {b}] must satisfy 0 <= lo < hi")));
        }
        if t.lambda_reg.is_empty() || t.lambda_reg.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(config("tolerances.lambda_reg: needs at least one positive value"));
        }
        if t.lambda_reg.windows(2).any(|w| w[1] >= w[0]) {
            return Err(config("tolerances.lambda_reg: values must be strictly decreasing"));
        }
        Ok(())
    }

    pub fn prepare(self, schedule: Schedule) -> Result<Prepared, Failure> {
        self.check_fields()?;
        let model = Model::with_schedule(self.grid_spec()?, schedule).map_err(|e| config(format!("grid: {e}")))?;
        let pixels = PixelPartition::uniform(model.n_interior(), self.pixels)
            .map_err(|e| config(format!("pixels: {e}")))?;
        let xs = model.grid().interior_coords();
        let h = model.grid().spacing();
        let q0 = potential_from_pieces(&self.q0, &xs, h, "q0")?;
        let q1 = match &self.q1 {
            Some(p) => Some(potential_from_pieces(p, &xs, h, "q1")?),
            None => None,
        };
        if let Some(data) = &self.forward.data {
            if data.len() != model.n_measurement() {
                return Err(config(format!(
                    "forward.data: has {} values but the grid has {} measurement nodes",
                    data.len(),
                    model.n_measurement()
                )));
            }
        }
        if let Some(loc) = &self.localize {
            if loc.mask.iter().any(|w| !(w[0] < w[1])) {
                return Err(config("localize.mask: every interval needs lo < hi"));
            }
        }
        Ok(Prepared { scenario: self, model, pixels, q0, q1 })
    }
}

fn potential_from_pieces(pieces: &[Piece], xs: &[f64], h: f64, field: &str) -> Result<Potential, Failure> {
    let eps = 1e-9 * h;
    for (k, p) in pieces.iter().enumerate() {
        let [a, b] = p.interval;
        if !(a < b) {
            return Err(config(format!("{field}[{k}].interval: [{a}, {b}) is empty")));
        }
        if !(p.value >= 0.0 && p.value.is_finite()) {
            return Err(config(format!("{field}[{k}].value: {} must be finite and nonnegative", p.value)));
        }
    }
    let mut values = Vec::with_capacity(xs.len());
    for &x in xs {
        let hits: Vec<usize> = pieces
            .iter()
            .enumerate()
            .filter(|(_, p)| x >= p.interval[0] - eps && x < p.interval[1] - eps)
            .map(|(k, _)| k)
            .collect();
        match hits.as_slice() {
            [k] => values.push(pieces[*k].value),
            [] => return Err(config(format!("{field}: interior node x = {x:.6} is not covered by any piece"))),
            [a, b, ..] => {
                return Err(config(format!("{field}: pieces {a} and {b} overlap at interior node x = {x:.6}")))
            }
        }
    }
    Potential::new(values).map_err(|e| config(format!("{field}: {e}")))
}

impl Prepared {
    pub fn require_q1(&self, command: &str) -> Result<&Potential, Failure> {
        self.q1.as_ref().ok_or_else(|| config(format!("q1: required by `{command}`")))
    }

    /// Interior mask for `localize`.
    pub fn localize_mask(&self) -> Result<Vec<bool>, Failure> {
        let loc = self.scenario.localize.as_ref().ok_or_else(|| config("localize: required by `localize`"))?;
        let mask: Vec<bool> = self
            .model
            .grid()
            .interior_coords()
            .iter()
            .map(|&x| loc.mask.iter().any(|w| x > w[0] && x < w[1]))
            .collect();
        Ok(mask)
    }

    /// Whether `values` is constant on every pixel.
    pub fn aligned(&self, values: &[f64]) -> bool {
        self.pixels.ranges().iter().all(|r| values[r.clone()].iter().all(|&v| v == values[r.start]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(order: f64) -> String {
        format!(
            r#"{{
                "schema_version": 1,
                "units": {{"length": "nondimensional", "potential": "length^-2s"}},
                "grid": {{"omega": [-1.0, 1.0], "spacing": 0.05, "order": {order},
                          "windows": [[-1.3, -1.05], [1.05, 1.3]]}},
                "q0": [{{"interval": [-1.0, 1.0], "value": 1.0}}],
                "prng": {{"algorithm": "chacha8", "seed": 7}}
            }}"#
        )
    }

    #[test]
    fn minimal_scenario_prepares() {
        let p = parse(&minimal(0.5)).unwrap().prepare(Schedule::Sequential).unwrap();
        assert_eq!(p.model.n_interior(), 39);
        assert_eq!(p.pixels.len(), 8);
        assert!(p.q0.values().iter().all(|&v| v == 1.0));
        assert!(p.q1.is_none());
    }

    #[test]
    fn order_out_of_range_names_the_field() {
        let err = parse(&minimal(1.5)).unwrap().prepare(Schedule::Sequential).err().unwrap();
        assert!(err.to_string().contains("grid.order"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn pieces_must_cover_without_overlap() {
        let xs = [-0.1, 0.0, 0.1];
        let gap = [Piece { interval: [-1.0, 0.0], value: 1.0 }, Piece { interval: [0.05, 1.0], value: 1.0 }];
        assert!(potential_from_pieces(&gap, &xs, 0.1, "q0").unwrap_err().to_string().contains("not covered"));
        let overlap = [Piece { interval: [-1.0, 0.05], value: 1.0 }, Piece { interval: [0.0, 1.0], value: 2.0 }];
        assert!(potential_from_pieces(&overlap, &xs, 0.1, "q0").unwrap_err().to_string().contains("overlap"));
        let ok = [Piece { interval: [-1.0, 0.0], value: 1.0 }, Piece { interval: [0.0, 1.0], value: 2.0 }];
        assert_eq!(potential_from_pieces(&ok, &xs, 0.1, "q0").unwrap().values(), &[1.0, 2.0, 2.0]);
    }

    #[test]
    fn negative_values_and_unknown_fields_are_rejected() {
        let bad = [Piece { interval: [-1.0, 1.0], value: -1.0 }];
        assert!(potential_from_pieces(&bad, &[0.0], 0.1, "q1").unwrap_err().to_string().contains("q1[0].value"));
        let extra = minimal(0.5).replacen("\"schema_version\"", "\"bogus\": 1, \"schema_version\"", 1);
        assert!(parse(&extra).is_err());
    }

    #[test]
    fn unsupported_prng_is_a_config_error() {
        let text = minimal(0.5).replace("chacha8", "mt19937");
        let err = parse(&text).unwrap().prepare(Schedule::Sequential).err().unwrap();
        assert!(err.to_string().contains("prng.algorithm"));
    }
}
