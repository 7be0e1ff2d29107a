mod common;

use std::f64::consts::PI;

use common::cis;
use dimer_core::free::{k_inverse, mu, Weights};
use dimer_core::quadrature::*;
use dimer_core::DimerError;
use num_complex::Complex64;
use proptest::prelude::*;

fn riemann(f: impl Fn(f64) -> Complex64, a: f64, b: f64, n: usize) -> Complex64 {
    let h = (b - a) / n as f64;
    (0..n).map(|j| f(a + (j as f64 + 0.5) * h)).sum::<Complex64>() * h
}

#[test]
fn trivial_integrals() {
    let r = integrate_1d(|_| Complex64::new(1.0, 0.0), 0.0, 2.0 * PI, 1e-12).unwrap();
    assert!((r.value.re - 2.0 * PI).abs() < 1e-13 && r.value.im == 0.0);
    assert!(r.evaluations > 0 && r.error_estimate >= 0.0);
    let r = integrate_1d(cis, 0.0, 2.0 * PI, 1e-12).unwrap();
    assert!(r.value.norm() < 1e-12);
}

#[test]
fn pole_outside_the_circle() {
    let f = |t: f64| 1.0 / (2.0 + cis(t));
    let adaptive = integrate_1d(f, 0.0, 2.0 * PI, 1e-12).unwrap();
    let dense = riemann(f, 0.0, 2.0 * PI, 1_000_000);
    assert!((adaptive.value - Complex64::new(PI, 0.0)).norm() < 1e-11);
    assert!((adaptive.value - dense).norm() < 1e-10);
}

#[test]
fn error_estimate_bounds_true_error() {
    let cases: Vec<(Box<dyn Fn(f64) -> Complex64>, f64, f64, Complex64)> = vec![
        (Box::new(|x| Complex64::new(x.powi(7) - 3.0 * x * x, 0.0)), -1.0, 2.0, Complex64::new(255.0 / 8.0 - 9.0, 0.0)),
        (Box::new(|t| cis(3.0 * t)), 0.0, 1.0, (cis(3.0) - 1.0) / Complex64::new(0.0, 3.0)),
        (Box::new(|t| 1.0 / (1.25 - cis(t) * 0.5)), 0.0, 2.0 * PI, Complex64::new(2.0 * PI / 1.25, 0.0)),
        (Box::new(|t| Complex64::new(t.exp(), 0.0)), 0.0, 3.0, Complex64::new(3f64.exp() - 1.0, 0.0)),
    ];
    for (f, a, b, exact) in cases {
        for tol in [1e-4, 1e-8, 1e-12] {
            let r = integrate_1d(&f, a, b, tol).unwrap();
            let err = (r.value - exact).norm();
            assert!(err <= r.error_estimate.max(1e-13), "tol {tol}: true {err:e} est {:e}", r.error_estimate);
            assert!(r.error_estimate < tol);
        }
    }
}

#[test]
fn singular_integrand_hits_the_cap() {
    let cfg = QuadConfig { abs_tol: 1e-12, max_panels: 50 };
    let r = integrate_1d_with(|x| Complex64::new(1.0 / x.abs().sqrt(), 0.0), -1.0, 1.0, &cfg);
    assert!(matches!(r, Err(DimerError::MaxSubdivisions { limit: 50, .. })));
}

#[test]
fn split_points_are_respected() {
    let f = |x: f64| Complex64::new(x.abs(), 0.0);
    let r = integrate_1d_split(f, &[-1.0, 0.0, 2.0], &QuadConfig::with_tol(1e-13)).unwrap();
    assert!((r.value.re - 2.5).abs() < 1e-13);
}

#[test]
fn torus_grid_trivial() {
    let one = integrate_torus_2d(|_, _| Complex64::new(1.0, 0.0), 16).unwrap();
    assert!((one - 1.0).norm() < 1e-14);
    assert!(integrate_torus_2d(|k1, _| cis(k1), 16).unwrap().norm() < 1e-14);
    assert!(integrate_torus_2d(|_, _| Complex64::new(1.0, 0.0), 4).is_err());
}

#[test]
fn torus_grid_converges_to_residue_value() {
    let w = Weights::uniform();
    let exact = k_inverse(&w, [0, 0]).unwrap();
    let mut prev = f64::INFINITY;
    for n in [64, 128, 256] {
        let g = integrate_torus_2d(|k1, k2| 1.0 / mu(&w, [k1, k2]), n).unwrap();
        let dev = (g - exact).norm();
        assert!(dev <= (2.0 * prev).max(1e-14), "n={n}: deviation {dev:e} after {prev:e}");
        prev = dev;
    }
    assert!(prev < 1e-4, "final deviation {prev:e}");
}

#[test]
fn torus_grid_generic_weights_stay_in_envelope() {
    // the grid error is not monotone in n for generic weights; check the
    // doubling bound only above the envelope
    const ENVELOPE: f64 = 2e-3;
    for w in [Weights::new(0.8, 1.1, 1.2).unwrap(), Weights::new(1.3, 0.7, 0.9).unwrap()] {
        for x in [[0, 0], [1, 0], [2, -1]] {
            let exact = k_inverse(&w, x).unwrap();
            let mut prev = f64::INFINITY;
            for n in [64, 128, 256] {
                let g = common::grid_kernel(&w, x, n);
                let dev = (g - exact).norm();
                assert!(dev <= (4.0 * prev).max(ENVELOPE), "{w} x={x:?} n={n}: {dev:e} after {prev:e}");
                prev = dev;
            }
            assert!(prev < ENVELOPE, "{w} x={x:?}: {prev:e}");
        }
    }
}

#[test]
fn torus_grid_is_bit_stable() {
    let f = |k1: f64, k2: f64| cis(k1 * 3.0 - k2) / (3.0 + k1.cos() + k2.cos());
    assert_eq!(integrate_torus_2d(f, 96).unwrap(), integrate_torus_2d(f, 96).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fourier_modes_are_exact(m in -6i32..=6, a in -3.0f64..3.0) {
        // int_a^{a+2pi} e^{i m t} dt = 2pi [m == 0]
        let r = integrate_1d(|t| cis(m as f64 * t), a, a + 2.0 * PI, 1e-12).unwrap();
        let exact = if m == 0 { 2.0 * PI } else { 0.0 };
        prop_assert!((r.value - Complex64::new(exact, 0.0)).norm() < 1e-11);
    }

    #[test]
    fn rational_of_circle(rho in 0.05f64..0.9) {
        // int_0^{2pi} 1/(1 - rho e^{it}) dt = 2pi
        let r = integrate_1d(|t| 1.0 / (1.0 - cis(t) * rho), 0.0, 2.0 * PI, 1e-11).unwrap();
        prop_assert!((r.value - Complex64::new(2.0 * PI, 0.0)).norm() <= r.error_estimate.max(1e-12) + 1e-12);
    }

    #[test]
    fn interval_additivity(a in -2.0f64..0.0, m in 0.0f64..1.0, b in 1.0f64..3.0) {
        let f = |x: f64| Complex64::new((3.0 * x).sin(), x * x);
        let whole = integrate_1d(f, a, b, 1e-12).unwrap().value;
        let parts = integrate_1d(f, a, m, 1e-12).unwrap().value + integrate_1d(f, m, b, 1e-12).unwrap().value;
        prop_assert!((whole - parts).norm() < 1e-11);
    }
}
