//! Independent reference computations shared by the integration tests. They
//! integrate the defining Brillouin-zone integrals directly instead of using
//! the residue reductions of the library.
#![allow(dead_code)]

use std::f64::consts::PI;

use dimer_core::free::{mu, Weights};
use dimer_core::lattice::{DimerConfig, EdgeType, Point};
use dimer_core::quadrature::{integrate_1d_split, integrate_torus_2d, QuadConfig};
use num_complex::Complex64;

pub fn cis(t: f64) -> Complex64 {
    Complex64::from_polar(1.0, t)
}

fn breaks(points: &[f64]) -> Vec<f64> {
    let mut b: Vec<f64> = vec![-PI, PI];
    for &p in points {
        let q = (p + PI).rem_euclid(2.0 * PI) - PI;
        if q > -PI + 1e-12 && q < PI - 1e-12 {
            b.push(q);
        }
    }
    b.sort_by(f64::total_cmp);
    b.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    b
}

/// `(2 pi)^-2 int f` over the torus by nested adaptive quadrature, splitting
/// the outer variable at `kinks1` and the inner one at `kinks2`.
pub fn nested_torus<F>(f: F, kinks1: &[f64], kinks2: &[f64], tol: f64) -> Complex64
where
    F: Fn(f64, f64) -> Complex64,
{
    let b1 = breaks(kinks1);
    let b2 = breaks(kinks2);
    let inner_cfg = QuadConfig { abs_tol: tol, max_panels: 20_000 };
    let outer_cfg = QuadConfig { abs_tol: tol * 2.0 * PI, max_panels: 20_000 };
    let outer = |k1: f64| integrate_1d_split(|k2| f(k1, k2), &b2, &inner_cfg).expect("inner quadrature").value;
    integrate_1d_split(outer, &b1, &outer_cfg).expect("outer quadrature").value / (4.0 * PI * PI)
}

/// Zeros of `mu` located by brute-force minimisation of `|mu|` on a grid
/// followed by Newton polishing; independent of the library's root search.
pub fn zeros_by_newton(w: &Weights) -> Vec<[f64; 2]> {
    let n = 400;
    let mut seeds = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let k = [-PI + 2.0 * PI * i as f64 / n as f64, -PI + 2.0 * PI * j as f64 / n as f64];
            if mu(w, k).norm() < 0.05 {
                seeds.push(k);
            }
        }
    }
    let mut out: Vec<[f64; 2]> = Vec::new();
    for mut k in seeds {
        for _ in 0..50 {
            let m = mu(w, k);
            // real Newton on (Re mu, Im mu) with the analytic Jacobian
            let e1 = cis(k[0]);
            let e2 = cis(k[1]);
            let e12 = cis(k[0] + k[1]);
            let d1 = -w.t2 * e1 - Complex64::i() * w.t3 * e12;
            let d2 = -Complex64::i() * w.t3 * e12 + e2;
            let det = d1.re * d2.im - d2.re * d1.im;
            let dx = (m.re * d2.im - d2.re * m.im) / det;
            let dy = (d1.re * m.im - m.re * d1.im) / det;
            k = [k[0] - dx, k[1] - dy];
        }
        if mu(w, k).norm() > 1e-13 {
            continue;
        }
        let k = [(k[0] + PI).rem_euclid(2.0 * PI) - PI, (k[1] + PI).rem_euclid(2.0 * PI) - PI];
        let dist = |a: [f64; 2], b: [f64; 2]| {
            let d = |x: f64| {
                let m = x.rem_euclid(2.0 * PI);
                m.min(2.0 * PI - m)
            };
            d(a[0] - b[0]).max(d(a[1] - b[1]))
        };
        if !out.iter().any(|&o| dist(o, k) < 1e-8) {
            out.push(k);
        }
    }
    out
}

/// `K^{-1}(x, 0)` by the midpoint rule.
pub fn grid_kernel(w: &Weights, x: Point, n: usize) -> Complex64 {
    integrate_torus_2d(|k1, k2| cis(-(k1 * x[0] as f64 + k2 * x[1] as f64)) / mu(w, [k1, k2]), n).unwrap()
}

/// `K^{-1}(x, 0)` by nested adaptive quadrature.
pub fn nested_kernel(w: &Weights, x: Point, zeros: &[[f64; 2]]) -> Complex64 {
    let k1s: Vec<f64> = zeros.iter().map(|z| z[0]).collect();
    let k2s: Vec<f64> = zeros.iter().map(|z| z[1]).collect();
    nested_torus(|k1, k2| cis(-(k1 * x[0] as f64 + k2 * x[1] as f64)) / mu(w, [k1, k2]), &k1s, &k2s, 1e-11)
}

/// The bubble `int e^{ika} / (mu(k) mu(k+p))` by nested adaptive quadrature.
pub fn nested_bubble(w: &Weights, a: Point, p: [f64; 2], zeros: &[[f64; 2]], tol: f64) -> Complex64 {
    let mut k1s = Vec::new();
    let mut k2s = Vec::new();
    for z in zeros {
        k1s.extend([z[0], z[0] - p[0]]);
        k2s.extend([z[1], z[1] - p[1]]);
    }
    nested_torus(
        |k1, k2| cis(k1 * a[0] as f64 + k2 * a[1] as f64) / (mu(w, [k1, k2]) * mu(w, [k1 + p[0], k2 + p[1]])),
        &k1s,
        &k2s,
        tol,
    )
}

/// Probability weight of one configuration at coupling `lambda` given its
/// number of aligned parallel pairs, straight from the definition.
pub fn brute_weight(cfg: &DimerConfig, t: &[f64; 4], lambda: f64, pairs: usize) -> f64 {
    cfg.log_weight(t).exp() * (lambda * pairs as f64).exp()
}

pub fn all_types() -> [EdgeType; 4] {
    EdgeType::ALL
}
