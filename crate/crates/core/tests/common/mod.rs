//! Independent oracles shared by the integration tests.

#![allow(clippy::needless_range_loop)]
#![allow(dead_code)]

use fracmono_core::GridSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Tanh-sinh quadrature of `f` over `[0, π]`, refined until successive levels
/// agree to roughly machine precision. `f` receives `θ` computed without
/// cancellation near 0.
pub fn tanh_sinh_0_pi(f: impl Fn(f64) -> f64) -> f64 {
    let t_max = 3.6;
    let eval = |step: f64, offset: f64| -> f64 {
        let mut sum = 0.0;
        let mut t = -t_max + offset;
        while t <= t_max {
            let u = 0.5 * PI * t.sinh();
            let theta = PI / (1.0 + (-2.0 * u).exp());
            let sech = 1.0 / u.cosh();
            let w = 0.5 * PI * sech * sech * 0.5 * PI * t.cosh();
            if theta > 0.0 && theta < PI && w > 0.0 {
                sum += f(theta) * w;
            }
            t += step;
        }
        sum * step
    };
    let mut step = 0.25;
    let mut prev = eval(step, 0.0);
    for _ in 0..8 {
        step *= 0.5;
        let next = eval(step, 0.0);
        if (next - prev).abs() <= 1e-15 * next.abs().max(1e-300) {
            return next;
        }
        prev = next;
    }
    prev
}

/// `−(1/π) ∫_0^π (2 sin(θ/2))^{2s} cos(mθ) dθ`.
pub fn kernel_by_quadrature(s: f64, m: u32) -> f64 {
    -tanh_sinh_0_pi(|t| (2.0 * (0.5 * t).sin()).powf(2.0 * s) * (m as f64 * t).cos()) / PI
}

/// `(1/π) ∫_0^π (2 sin(θ/2))^{2s} dθ`.
pub fn diagonal_by_quadrature(s: f64) -> f64 {
    tanh_sinh_0_pi(|t| (2.0 * (0.5 * t).sin()).powf(2.0 * s)) / PI
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn dense_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, p);
        let piv = m[c][c];
        assert!(piv != 0.0, "singular matrix");
        for v in m[c].iter_mut() {
            *v /= piv;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        let total: f64 = m.iter().flatten().map(|v| v * v).sum();
        if off <= 1e-30 * total.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn to_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// 21-node grid: Ω = (−0.3, 0.3), R = 1, h = 0.1, windows outside ±0.5.
pub fn small_spec(order: f64) -> GridSpec {
    GridSpec {
        omega_lo: -0.3,
        omega_hi: 0.3,
        box_radius: 1.0,
        spacing: 0.1,
        order,
        windows: vec![(-0.9, -0.5), (0.5, 0.9)],
        max_nodes: 4001,
    }
}

/// 41-node grid: Ω = (−1, 1), R = 2, h = 0.1, six measurement nodes.
pub fn medium_spec(order: f64) -> GridSpec {
    GridSpec {
        omega_lo: -1.0,
        omega_hi: 1.0,
        box_radius: 2.0,
        spacing: 0.1,
        order,
        windows: vec![(-1.4, -1.2), (1.2, 1.4)],
        max_nodes: 4001,
    }
}
