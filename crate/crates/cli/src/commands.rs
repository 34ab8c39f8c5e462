//! The subcommands. Each writes its files through `Outputs` and records
//! checks and notes in a `Log` that survives an early error.

use fracmono_core::dtn::frechet_apply;
use fracmono_core::order::{verify_doubling, verify_monotonicity};
use fracmono_core::reconstruct::{
    inner_support_definite, localized_potential, pixel_sup_reconstruct, support_from_closed_sets, CapRule, Clamp,
    PixelSupOptions, ShapeResult,
};
use fracmono_core::{loewner_leq, min_eigenvalue, symmetry_defect, ExteriorData, LoewnerVerdict, Potential};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Failure;
use crate::report::{num, Check, Outputs};
use crate::scenario::Prepared;

#[derive(Default)]
pub struct Log {
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl Log {
    fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    fn note(&mut self, n: impl Into<String>) {
        self.notes.push(n.into());
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Indefinite,
    Definite,
}

/// Loewner slack rescaled so that passing means `slack >= -tol_rel`.
fn loewner_slack(v: &LoewnerVerdict, tol_rel: f64) -> f64 {
    v.lambda_min * tol_rel / v.tolerance
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn measurement_data(p: &Prepared) -> Vec<f64> {
    p.scenario.forward.data.clone().unwrap_or_else(|| vec![1.0; p.model.n_measurement()])
}

struct Trials {
    rows: Vec<(String, usize, f64, f64)>,
    order: Vec<String>,
}

impl Trials {
    fn push(&mut self, name: &str, trial: usize, slack: f64, tol: f64) {
        if !self.order.iter().any(|n| n == name) {
            self.order.push(name.to_string());
        }
        self.rows.push((name.to_string(), trial, slack, tol));
    }

    fn summarize(&self, log: &mut Log) {
        for name in &self.order {
            let rows: Vec<_> = self.rows.iter().filter(|r| &r.0 == name).collect();
            let (worst, tol) = rows.iter().fold((f64::INFINITY, 0.0), |(w, _), r| (w.min(r.2), r.3));
            let failed = rows.iter().filter(|r| !(r.2 >= -r.3)).count();
            log.check(Check::new(
                name,
                failed == 0,
                worst,
                tol,
                format!("{} trials, {failed} below -tolerance", rows.len()),
            ));
        }
    }
}

/// Randomized property suite for the order relations on the scenario grid.
pub fn verify(p: &Prepared, seed: u64, out: &mut Outputs, log: &mut Log) -> Result<(), Failure> {
    let m = &p.model;
    let tol = p.scenario.tolerances.verify_tol;
    let (n, k) = (m.n_interior(), m.n_measurement());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Trials { rows: Vec::new(), order: Vec::new() };

    for trial in 0..p.scenario.trials {
        let a = uniform(&mut rng, n, 0.5, 3.0);
        let bump = uniform(&mut rng, n, 0.0, 1.0);
        let b = uniform(&mut rng, n, 0.5, 3.0);
        let f = uniform(&mut rng, k, -1.0, 1.0);
        let pixel = rng.random_range(0..p.pixels.len());
        let patch = rng.random_range(0.5..3.0);

        let q0 = Potential::new(a.clone())?;
        let up = Potential::new(a.iter().zip(&bump).map(|(x, d)| x + d).collect())?;
        let q1 = Potential::new(b.clone())?;

        let l0 = m.dtn(&q0)?;
        let lm = l0.matrix();
        let scale = lm.norm().max(f64::MIN_POSITIVE);
        t.push("dtn_symmetric", trial, -symmetry_defect(&lm) / scale, tol);
        t.push("dtn_psd", trial, min_eigenvalue(&lm)? / scale, tol);

        let v = loewner_leq(&l0, &m.dtn(&up)?, tol)?;
        t.push("dtn_monotone", trial, loewner_slack(&v, tol), tol);

        let mono = verify_monotonicity(m, &q0, &q1, &f)?.monotonicity.expect("monotonicity slacks");
        t.push("monotonicity_inequalities", trial, mono.min() / mono.scale.max(f64::MIN_POSITIVE), tol);

        let delta = m.dtn_change(&q0, &q1)?;
        let s0 = m.solution_operator(&q0)?;
        let dq: Vec<f64> = b.iter().zip(&a).map(|(y, x)| y - x).collect();
        let w: Vec<f64> = dq.iter().zip(a.iter().zip(&b)).map(|(d, (x, y))| x / y * d).collect();
        let upper = loewner_leq(&delta, &frechet_apply(&s0, &dq)?, tol)?;
        let lower = loewner_leq(&frechet_apply(&s0, &w)?, &delta, tol)?;
        t.push("sandwich_upper", trial, loewner_slack(&upper, tol), tol);
        t.push("sandwich_lower", trial, loewner_slack(&lower, tol), tol);

        let mut c = b.clone();
        for j in p.pixels.range(pixel) {
            c[j] = patch;
        }
        if c != b {
            let d = verify_doubling(m, &Potential::new(c)?, &q1, &f)?.doubling.expect("doubling data");
            if !d.degenerate {
                let slack = (d.bound - d.ratio).min(d.ratio - 1.0 / d.bound) / d.bound;
                t.push("doubling", trial, slack, tol);
            }
        }

        if trial < 3 {
            let s = m.solution_operator(&q0)?;
            let dir = uniform(&mut rng, n, -1.0, 1.0);
            let lin = frechet_apply(&s, &dir)?.matrix();
            let rem = |eps: f64| -> Result<f64, Failure> {
                let qt = Potential::new(a.iter().zip(&dir).map(|(x, d)| x + eps * d).collect())?;
                Ok((m.dtn(&qt)?.difference(&l0)?.matrix() - &lin * eps).norm())
            };
            let ratio = rem(1e-2)? / rem(5e-3)?;
            t.push("frechet_remainder_order", trial, 0.5 - (ratio - 4.0).abs(), 0.0);
        }
    }

    out.csv(
        "verify.csv",
        &["check", "trial", "slack", "tolerance", "pass"],
        t.rows.iter().map(|(name, trial, slack, tol)| {
            vec![name.clone(), trial.to_string(), num(*slack), num(*tol), (*slack >= -*tol).to_string()]
        }),
    )?;
    t.summarize(log);

    if let Some(q1) = &p.q1 {
        let f = measurement_data(p);
        if p.q0.strict_positive() && q1.strict_positive() {
            let s = verify_monotonicity(m, &p.q0, q1, &f)?.monotonicity.expect("monotonicity slacks");
            let slack = s.min() / s.scale.max(f64::MIN_POSITIVE);
            log.check(Check::new("scenario_monotonicity", slack >= -tol, slack, tol, "q0, q1 from the scenario"));
        } else {
            log.note("scenario q0 or q1 has zero entries; the scenario monotonicity check was skipped");
        }
        let (a, b) = (p.q0.values(), q1.values());
        if a.iter().zip(b).all(|(x, y)| x <= y) {
            let v = loewner_leq(&m.dtn(&p.q0)?, &m.dtn(q1)?, tol)?;
            log.check(Check::new("scenario_order", v.pass, loewner_slack(&v, tol), tol, "q0 <= q1 pointwise"));
        } else if a.iter().zip(b).all(|(x, y)| x >= y) {
            let v = loewner_leq(&m.dtn(q1)?, &m.dtn(&p.q0)?, tol)?;
            log.check(Check::new("scenario_order", v.pass, loewner_slack(&v, tol), tol, "q1 <= q0 pointwise"));
        }
    }
    Ok(())
}

/// Solve with the scenario's exterior data and potential `q0`.
pub fn forward(p: &Prepared, out: &mut Outputs, log: &mut Log) -> Result<(), Failure> {
    let m = &p.model;
    let grid = m.grid();
    let data = measurement_data(p);
    let ext = ExteriorData::from_measurement(grid, &data)?;
    let sys = m.system(&p.q0)?;
    let u = sys.solve_dirichlet(&ext, &vec![0.0; m.n_interior()])?;
    let coords = grid.coords();
    out.csv("solution.csv", &["x", "u"], coords.iter().zip(u.values()).map(|(x, v)| vec![num(*x), num(*v)]))?;

    let mismatch = grid
        .exterior()
        .iter()
        .zip(ext.values())
        .map(|(&i, v)| (u.values()[i] - v).abs())
        .fold(0.0, f64::max);
    log.check(Check::new("exterior_values_reproduced", mismatch == 0.0, -mismatch, 0.0, "u equals F off the domain"));
    let energy = m.operator().energy(u.values())?;
    log.note(format!("energy of the solution: {energy}"));
    log.note(format!("truncation leakage per unit box length: {}", m.operator().leakage()));
    Ok(())
}

fn eigen_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<String>> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev.iter().enumerate().map(|(i, v)| vec![i.to_string(), num(*v)]).collect()
}

/// DtN matrices for `q0` and, when given, `q1` and their exact difference.
pub fn dtn(p: &Prepared, out: &mut Outputs, log: &mut Log) -> Result<(), Failure> {
    let m = &p.model;
    let tol = p.scenario.tolerances.verify_tol;
    let l0 = m.dtn(&p.q0)?;
    let lm = l0.matrix();
    out.matrix("dtn_q0.csv", &l0)?;
    out.csv("dtn_q0_eigenvalues.csv", &["index", "eigenvalue"], eigen_rows(&lm))?;
    let slack = min_eigenvalue(&lm)? / lm.norm().max(f64::MIN_POSITIVE);
    log.check(Check::new("dtn_q0_psd", slack >= -tol, slack, tol, "lambda_min / norm"));

    if let Some(q1) = &p.q1 {
        let l1 = m.dtn(q1)?;
        let delta = m.dtn_change(&p.q0, q1)?;
        out.matrix("dtn_q1.csv", &l1)?;
        out.matrix("dtn_change.csv", &delta)?;
        out.csv("dtn_change_eigenvalues.csv", &["index", "eigenvalue"], eigen_rows(&delta.matrix()))?;
        let sub = l1.difference(&l0)?.matrix();
        let dm = delta.matrix();
        let gap = (&sub - &dm).norm() / dm.norm().max(sub.norm()).max(f64::MIN_POSITIVE);
        log.check(Check::new(
            "dtn_change_consistent",
            gap <= 1e-8,
            -gap,
            1e-8,
            "exact difference formula vs subtraction, relative Frobenius gap",
        ));
    }
    Ok(())
}

/// Pixel-sup reconstruction of `q0` from its own DtN matrix.
pub fn recon_potential(p: &Prepared, out: &mut Outputs, log: &mut Log) -> Result<(), Failure> {
    if !p.aligned(p.q0.values()) {
        return Err(Failure::Config(
            "q0: recon-potential needs q0 constant on every pixel; align the pieces to the pixel boundaries".into(),
        ));
    }
    let m = &p.model;
    let tol = &p.scenario.tolerances;
    let measured = m.dtn(&p.q0)?;
    let opts = PixelSupOptions {
        alpha_lo: tol.alpha_range[0],
        alpha_hi: tol.alpha_range[1],
        bisect_tol: tol.bisect_tol,
        tol_rel: tol.tol_rel,
        schedule: m.schedule(),
    };
    let r = pixel_sup_reconstruct(m, &measured, &p.pixels, &opts)?;
    let xs = m.grid().interior_coords();
    let q = p.q0.values();
    let truth: Vec<f64> = p.pixels.ranges().iter().map(|rg| q[rg.clone()].iter().copied().fold(f64::INFINITY, f64::min)).collect();

    out.csv(
        "pixels.csv",
        &["pixel", "node_lo", "node_hi", "x_lo", "x_hi", "alpha", "q_min", "iterations", "clamp", "lambda_min"],
        p.pixels.ranges().iter().enumerate().map(|(i, rg)| {
            let clamp = match r.clamp[i] {
                Clamp::None => "none",
                Clamp::Upper => "upper",
                Clamp::Lower => "lower",
            };
            vec![
                i.to_string(),
                rg.start.to_string(),
                rg.end.to_string(),
                num(xs[rg.start]),
                num(xs[rg.end - 1]),
                num(r.alpha[i]),
                num(truth[i]),
                r.iterations[i].to_string(),
                clamp.to_string(),
                num(r.lambda_min[i]),
            ]
        }),
    )?;
    let alpha_nodes = p.pixels.expand(&r.alpha)?;
    out.csv(
        "profile.csv",
        &["x", "q", "alpha"],
        xs.iter().zip(q).zip(&alpha_nodes).map(|((x, q), a)| vec![num(*x), num(*q), num(*a)]),
    )?;

    let q_scale = q.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let worst = r
        .alpha
        .iter()
        .zip(&truth)
        .map(|(a, t)| (a - t.clamp(opts.alpha_lo, opts.alpha_hi)).abs())
        .fold(0.0, f64::max);
    log.check(Check::new(
        "pixel_sup_consistency",
        worst <= 0.1 * q_scale,
        0.1 * q_scale - worst,
        0.0,
        format!("max |alpha - min q| = {worst} against 0.1 * max q = {}", 0.1 * q_scale),
    ));
    log.notes.extend(r.notes);
    Ok(())
}

/// Pixel index distance from `p` to the nearest pixel in `set`.
fn pixel_distance(p: usize, set: &[usize]) -> Option<usize> {
    set.iter().map(|&s| p.abs_diff(s)).min()
}

fn shape_rows(p: &Prepared, r: &ShapeResult) -> Vec<Vec<String>> {
    let xs = p.model.grid().interior_coords();
    p.pixels
        .ranges()
        .iter()
        .enumerate()
        .map(|(i, rg)| {
            let w = &r.witness[i];
            let lm = |k: usize| w.lambda_min.get(k).map(|v| num(*v)).unwrap_or_default();
            vec![
                i.to_string(),
                rg.start.to_string(),
                rg.end.to_string(),
                num(xs[rg.start]),
                num(xs[rg.end - 1]),
                r.inside[i].to_string(),
                lm(0),
                lm(1),
                w.alpha_star.map(num).unwrap_or_default(),
                num(w.tolerance),
            ]
        })
        .collect()
}

/// Shape reconstruction of `supp(q1 − q0)` from the exact DtN change.
pub fn recon_shape(p: &Prepared, mode: Mode, out: &mut Outputs, log: &mut Log) -> Result<(), Failure> {
    let q1 = p.require_q1("recon-shape")?;
    let m = &p.model;
    let tol = &p.scenario.tolerances;
    let (a, b) = (p.q0.values(), q1.values());
    let dq: Vec<f64> = b.iter().zip(a).map(|(y, x)| y - x).collect();
    let touched: Vec<usize> =
        (0..p.pixels.len()).filter(|&i| p.pixels.range(i).any(|j| dq[j] != 0.0)).collect();

    let delta = m.dtn_change(&p.q0, q1)?;
    let result = match mode {
        Mode::Indefinite => {
            let s0 = m.solution_operator(&p.q0)?;
            let cap = match tol.alpha_cap {
                Some(c) => CapRule::Fixed(c),
                None => CapRule::Auto { kappa: tol.kappa },
            };
            support_from_closed_sets(&delta, &s0, &p.pixels, cap, tol.tol_rel, m.schedule())?
        }
        Mode::Definite => {
            let sign = if dq.iter().all(|&d| d >= 0.0) {
                1
            } else if dq.iter().all(|&d| d <= 0.0) {
                -1
            } else {
                return Err(Failure::Config(
                    "q1: recon-shape --mode definite needs q1 - q0 of one sign on the whole domain".into(),
                ));
            };
            let s0 = m.solution_operator(&p.q0)?;
            inner_support_definite(&delta, sign, &s0, &p.pixels, tol.threshold, tol.tol_rel, m.schedule())?
        }
    };

    out.csv(
        "shape.csv",
        &["pixel", "node_lo", "node_hi", "x_lo", "x_hi", "inside", "lambda_min_a", "lambda_min_b", "alpha_star", "tolerance"],
        shape_rows(p, &result),
    )?;
    let flags: Vec<f64> = result.inside.iter().map(|&i| if i { 1.0 } else { 0.0 }).collect();
    let nodes = p.pixels.expand(&flags)?;
    let xs = m.grid().interior_coords();
    out.csv(
        "shape_profile.csv",
        &["x", "dq", "inside"],
        xs.iter().zip(&dq).zip(&nodes).map(|((x, d), f)| vec![num(*x), num(*d), num(*f)]),
    )?;

    let far_in: Vec<usize> = (0..p.pixels.len())
        .filter(|&i| result.inside[i] && pixel_distance(i, &touched).is_none_or(|d| d >= 2))
        .collect();
    log.check(Check::new(
        "far_pixels_out",
        far_in.is_empty(),
        -(far_in.len() as f64),
        0.0,
        format!("pixels two or more away from the change marked IN: {far_in:?}"),
    ));

    match mode {
        Mode::Indefinite => {
            let missed: Vec<usize> = touched.iter().copied().filter(|&i| !result.inside[i]).collect();
            log.check(Check::new(
                "support_pixels_in",
                missed.is_empty(),
                -(missed.len() as f64),
                0.0,
                format!("pixels meeting supp(q1 - q0) marked OUT: {missed:?}"),
            ));
        }
        Mode::Definite => {
            // Pixels lying entirely in the change carry a positive lower bound.
            let mut worst = f64::INFINITY;
            let mut missed = Vec::new();
            for i in 0..p.pixels.len() {
                let bound = p
                    .pixels
                    .range(i)
                    .map(|j| if dq[j] > 0.0 { a[j] * dq[j] / b[j] } else { -dq[j] })
                    .fold(f64::INFINITY, f64::min);
                if bound > 0.0 {
                    let got = result.witness[i].alpha_star.unwrap_or(0.0);
                    worst = worst.min(got / bound);
                    if !(result.inside[i] && got >= 0.8 * bound) {
                        missed.push(i);
                    }
                }
            }
            if worst.is_finite() {
                log.check(Check::new(
                    "inclusion_pixels_in",
                    missed.is_empty(),
                    worst - 0.8,
                    0.0,
                    format!("min alpha*/lower bound = {worst}; pixels failing (IN with alpha* >= 0.8 bound): {missed:?}"),
                ));
            } else {
                log.note("no pixel lies entirely inside supp(q1 - q0); only the far-pixel check applies");
            }
        }
    }
    log.notes.extend(result.notes.iter().cloned());
    if let Some(c) = result.alpha_cap {
        log.note(format!("alpha_cap = {c}"));
    }
    Ok(())
}

/// Localized potentials on the scenario mask over the `lambda_reg` sweep.
pub fn localize(p: &Prepared, out: &mut Outputs, log: &mut Log) -> Result<(), Failure> {
    let mask = p.localize_mask()?;
    let m = &p.model;
    let s = m.solution_operator(&p.q0)?;
    let sweep = &p.scenario.tolerances.lambda_reg;
    let mut results = Vec::with_capacity(sweep.len());
    for &lambda in sweep {
        results.push(localized_potential(&s, &mask, lambda)?);
    }
    out.csv(
        "localize.csv",
        &["lambda", "energy_inside", "energy_outside", "ratio", "residual"],
        sweep.iter().zip(&results).map(|(l, r)| {
            vec![num(*l), num(r.energy_inside), num(r.energy_outside), num(r.ratio), num(r.residual)]
        }),
    )?;

    let profiles: Vec<Vec<f64>> = results.iter().map(|r| s.apply(&r.data)).collect::<Result<_, _>>()?;
    let xs = m.grid().interior_coords();
    let mut header = vec!["x".to_string(), "mask".to_string()];
    header.extend(sweep.iter().map(|l| format!("u_lambda_{}", num(*l))));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(
        "localize_profile.csv",
        &header,
        xs.iter().enumerate().map(|(j, x)| {
            let mut row = vec![num(*x), u8::from(mask[j]).to_string()];
            row.extend(profiles.iter().map(|u| num(u[j])));
            row
        }),
    )?;

    let ratios: Vec<f64> = results.iter().map(|r| r.ratio).collect();
    let worst_step = ratios.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    log.check(Check::new(
        "ratio_increases_as_lambda_decreases",
        ratios.len() < 2 || worst_step > 0.0,
        if ratios.len() < 2 { 0.0 } else { worst_step },
        0.0,
        format!("ratios {ratios:?}"),
    ));
    Ok(())
}
