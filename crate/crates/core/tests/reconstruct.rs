mod common;

use common::*;
use fracmono_core::reconstruct::{
    inner_support_definite, localized_potential, pixel_sup_reconstruct, runge_approximate, support_from_closed_sets,
    CapRule, Clamp, PixelSupOptions,
};
use fracmono_core::{Error, GridSpec, Model, PixelPartition, Potential, Schedule};

fn default_model() -> Model {
    Model::new(GridSpec::default_with_order(0.75)).unwrap()
}

#[test]
fn constant_potential_single_pixel() {
    let m = default_model();
    let px = PixelPartition::uniform(m.n_interior(), 1).unwrap();
    let meas = m.dtn(&m.constant(2.0).unwrap()).unwrap();
    let r = pixel_sup_reconstruct(&m, &meas, &px, &PixelSupOptions::default()).unwrap();
    assert!((r.alpha[0] - 2.0).abs() <= 0.2, "{:?}", r.alpha);
    assert_eq!(r.clamp[0], Clamp::None);
    assert!(!r.notes.is_empty());
}

#[test]
fn cap_is_reported_when_attained() {
    let m = default_model();
    let px = PixelPartition::uniform(m.n_interior(), 4).unwrap();
    let q = Potential::new(px.expand(&[0.0, 8.0, 0.0, 0.0]).unwrap()).unwrap();
    let meas = m.dtn(&q).unwrap();
    let r = pixel_sup_reconstruct(&m, &meas, &px, &PixelSupOptions::default()).unwrap();
    assert_eq!(r.alpha[1], 8.0);
    assert_eq!(r.clamp[1], Clamp::Upper);
}

#[test]
fn pixel_sup_is_schedule_independent() {
    let m = default_model();
    let px = PixelPartition::uniform(m.n_interior(), 3).unwrap();
    let meas = m.dtn(&Potential::new(px.expand(&[1.0, 3.0, 2.0]).unwrap()).unwrap()).unwrap();
    let seq = PixelSupOptions { schedule: Schedule::Sequential, ..Default::default() };
    let par = PixelSupOptions { schedule: Schedule::Parallel, ..Default::default() };
    let a = pixel_sup_reconstruct(&m, &meas, &px, &seq).unwrap();
    let b = pixel_sup_reconstruct(&m, &meas, &px, &par).unwrap();
    assert_eq!(a, b);
    for (got, want) in a.alpha.iter().zip([1.0, 3.0, 2.0]) {
        assert!((got - want).abs() <= 0.1 * want);
    }
}

#[test]
fn pixel_sup_rejects_bad_options() {
    let m = default_model();
    let px = PixelPartition::uniform(m.n_interior(), 3).unwrap();
    let meas = m.dtn(&m.constant(1.0).unwrap()).unwrap();
    let bad = PixelSupOptions { alpha_lo: 2.0, alpha_hi: 1.0, ..Default::default() };
    assert!(pixel_sup_reconstruct(&m, &meas, &px, &bad).is_err());
    let wrong = PixelPartition::uniform(10, 2).unwrap();
    assert!(pixel_sup_reconstruct(&m, &meas, &wrong, &PixelSupOptions::default()).is_err());
}

fn shape_case(m: &Model, set: &[usize], sign: f64) -> Vec<usize> {
    let px = PixelPartition::uniform(m.n_interior(), 8).unwrap();
    let base = if sign > 0.0 { 1.0 } else { 3.0 };
    let mut v = vec![base; 8];
    for &p in set {
        v[p] += 2.0 * sign;
    }
    let q0 = m.constant(base).unwrap();
    let q1 = Potential::new(px.expand(&v).unwrap()).unwrap();
    let delta = m.dtn_change(&q0, &q1).unwrap();
    let s0 = m.solution_operator(&q0).unwrap();
    support_from_closed_sets(&delta, &s0, &px, CapRule::default(), 1e-13, Schedule::Parallel).unwrap().support()
}

#[test]
fn closed_set_test_finds_single_and_pair() {
    let m = default_model();
    assert_eq!(shape_case(&m, &[3], 1.0), vec![3]);
    assert_eq!(shape_case(&m, &[1, 5], 1.0), vec![1, 5]);
    assert_eq!(shape_case(&m, &[2, 5], -1.0), vec![2, 5]);
}

#[test]
fn closed_set_test_on_zero_change() {
    let m = default_model();
    let px = PixelPartition::uniform(m.n_interior(), 8).unwrap();
    let q0 = m.constant(1.0).unwrap();
    let delta = m.dtn_change(&q0, &q0).unwrap();
    let s0 = m.solution_operator(&q0).unwrap();
    for cap in [CapRule::default(), CapRule::Fixed(1.0)] {
        let r = support_from_closed_sets(&delta, &s0, &px, cap, 1e-13, Schedule::Sequential).unwrap();
        assert!(r.support().is_empty());
    }
    assert!(matches!(
        support_from_closed_sets(&delta, &s0, &px, CapRule::Fixed(0.0), 1e-13, Schedule::Sequential),
        Err(Error::Argument(_))
    ));
}

#[test]
fn definite_mode_marks_the_inclusion() {
    let m = default_model();
    let px = PixelPartition::uniform(m.n_interior(), 8).unwrap();
    let q0 = m.constant(1.0).unwrap();
    let s0 = m.solution_operator(&q0).unwrap();
    let mut v = vec![1.0; 8];
    v[4] = 2.0;
    let q1 = Potential::new(px.expand(&v).unwrap()).unwrap();
    let delta = m.dtn_change(&q0, &q1).unwrap();
    let r = inner_support_definite(&delta, 1, &s0, &px, 1e-2, 1e-13, Schedule::Parallel).unwrap();
    assert_eq!(r.support(), vec![4]);
    assert!(r.witness[4].alpha_star.unwrap() >= 0.4);

    let neg = m.dtn_change(&q1, &q0).unwrap();
    let s1 = m.solution_operator(&q1).unwrap();
    let r = inner_support_definite(&neg, -1, &s1, &px, 1e-2, 1e-13, Schedule::Sequential).unwrap();
    assert_eq!(r.support(), vec![4]);
}

#[test]
fn definite_mode_on_zero_change() {
    let m = default_model();
    let px = PixelPartition::uniform(m.n_interior(), 8).unwrap();
    let q0 = m.constant(1.0).unwrap();
    let s0 = m.solution_operator(&q0).unwrap();
    let delta = m.dtn_change(&q0, &q0).unwrap();
    let r = inner_support_definite(&delta, 1, &s0, &px, 1e-2, 1e-13, Schedule::Parallel).unwrap();
    assert!(r.support().is_empty());
    assert!(r.witness.iter().all(|w| w.alpha_star.unwrap() <= 1e-12));
    assert!(inner_support_definite(&delta, 0, &s0, &px, 1e-2, 1e-13, Schedule::Parallel).is_err());
}

fn end_mask(m: &Model) -> Vec<bool> {
    m.grid().interior_coords().iter().map(|x| x.abs() > 0.7).collect()
}

#[test]
fn localized_potential_concentrates() {
    let m = default_model();
    let s = m.solution_operator(&m.constant(1.0).unwrap()).unwrap();
    let mask = end_mask(&m);
    let mut last = 0.0;
    for lambda in [1e-1, 1e-3, 1e-5] {
        let r = localized_potential(&s, &mask, lambda).unwrap();
        assert!(r.ratio > last);
        assert!(r.residual < 1e-10, "{}", r.residual);
        assert!((r.energy_inside / r.energy_outside - r.ratio).abs() < 1e-12 * r.ratio);
        last = r.ratio;
    }
    assert!(last > 10.0);
}

#[test]
fn localized_potential_rejects_trivial_masks() {
    let m = default_model();
    let s = m.solution_operator(&m.constant(1.0).unwrap()).unwrap();
    let n = m.n_interior();
    assert!(localized_potential(&s, &vec![true; n], 1e-3).is_err());
    assert!(localized_potential(&s, &vec![false; n], 1e-3).is_err());
    assert!(localized_potential(&s, &end_mask(&m), 0.0).is_err());
}

#[test]
fn runge_recovers_reachable_targets() {
    let m = default_model();
    let s = m.solution_operator(&m.constant(1.0).unwrap()).unwrap();
    let f0 = uniform_vec(&mut rng(51), m.n_measurement(), -1.0, 1.0);
    let target = s.apply(&f0).unwrap();
    let norm = (m.grid().spacing() * target.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let errs: Vec<f64> =
        [1e-6, 1e-8, 1e-10].iter().map(|&l| runge_approximate(&s, &target, l).unwrap().error).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    assert!(errs[2] <= 1e-3 * norm, "{errs:?} vs {norm}");
}

#[test]
fn runge_error_nonincreasing() {
    let m = default_model();
    let s = m.solution_operator(&m.constant(1.0).unwrap()).unwrap();
    let px = PixelPartition::uniform(m.n_interior(), 8).unwrap();
    let smooth: Vec<f64> = m.grid().interior_coords().iter().map(|x| (2.0 * x).cos()).collect();
    let pixel: Vec<f64> = px.mask(3).iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    for target in [smooth, pixel] {
        let errs: Vec<f64> =
            [1e-1, 1e-3, 1e-5, 1e-7].iter().map(|&l| runge_approximate(&s, &target, l).unwrap().error).collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
        assert!(errs[3] < errs[0]);
    }
    assert!(runge_approximate(&s, &[1.0, 2.0], 1e-3).is_err());
}
