//! Numerical integration kernels: adaptive Gauss-Kronrod on an interval and
//! a uniform midpoint grid on the periodic torus `[-pi, pi]^2`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{DimerError, Result};
use crate::par;

/// Default absolute tolerance for arc integrals.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default cap on the number of panels before giving up.
pub const DEFAULT_MAX_PANELS: usize = 4000;

// 15-point Kronrod nodes on [-1, 1] (non-negative half, descending); the
// odd-indexed ones are the 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Outcome of an adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: Complex64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { abs_tol: DEFAULT_TOL, max_panels: DEFAULT_MAX_PANELS }
    }
}

impl QuadConfig {
    pub fn with_tol(abs_tol: f64) -> Self {
        QuadConfig { abs_tol, ..Default::default() }
    }
}

#[derive(Clone, Copy, Debug)]
struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

fn gauss_kronrod<F>(f: &F, a: f64, b: f64) -> Panel
where
    F: Fn(f64) -> Complex64,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += pair * WGK[j];
        if j % 2 == 1 {
            gauss += pair * WG[j / 2];
        }
    }
    Panel {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).norm(),
    }
}

/// Adaptive integration of a complex function over `[a, b]` with the default
/// panel cap. The panel with the largest error estimate is bisected until the
/// summed estimate drops below `tol`.
pub fn integrate_1d<F>(f: F, a: f64, b: f64, tol: f64) -> Result<QuadResult>
where
    F: Fn(f64) -> Complex64,
{
    integrate_1d_with(f, a, b, &QuadConfig::with_tol(tol))
}

pub fn integrate_1d_with<F>(f: F, a: f64, b: f64, cfg: &QuadConfig) -> Result<QuadResult>
where
    F: Fn(f64) -> Complex64,
{
    integrate_1d_split(f, &[a, b], cfg)
}

/// Like [`integrate_1d_with`] but starting from the given breakpoints, which
/// must be increasing. Useful when the integrand has kinks at known places.
pub fn integrate_1d_split<F>(f: F, breaks: &[f64], cfg: &QuadConfig) -> Result<QuadResult>
where
    F: Fn(f64) -> Complex64,
{
    if !(cfg.abs_tol > 0.0) {
        return Err(DimerError::InvalidParameter(format!("tolerance must be positive, got {}", cfg.abs_tol)));
    }
    if breaks.len() < 2 {
        return Err(DimerError::InvalidParameter("need at least two breakpoints".into()));
    }
    let mut panels: Vec<Panel> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| gauss_kronrod(&f, w[0], w[1]))
        .collect();
    if panels.is_empty() {
        return Ok(QuadResult { value: Complex64::new(0.0, 0.0), error_estimate: 0.0, evaluations: 1 });
    }
    loop {
        let total_err: f64 = panels.iter().map(|p| p.error).sum();
        if total_err < cfg.abs_tol {
            break;
        }
        if panels.len() >= cfg.max_panels {
            return Err(DimerError::MaxSubdivisions { limit: cfg.max_panels, error: total_err });
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            // interval exhausted at machine precision
            return Err(DimerError::MaxSubdivisions { limit: panels.len() + 1, error: total_err });
        }
        panels.push(gauss_kronrod(&f, p.a, mid));
        panels.push(gauss_kronrod(&f, mid, p.b));
    }
    // fixed summation order keeps the result bit-stable
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = panels.iter().fold(Complex64::new(0.0, 0.0), |acc, p| acc + p.value);
    let error_estimate = panels.iter().map(|p| p.error).sum();
    Ok(QuadResult { value, error_estimate, evaluations: 15 * panels.len() })
}

/// `(2 pi)^-2` times the integral of a periodic function over `[-pi, pi]^2`,
/// by the midpoint rule on an `n x n` grid. Spectrally accurate for smooth
/// integrands, algebraic for integrable singularities.
pub fn integrate_torus_2d<F>(f: F, n: usize) -> Result<Complex64>
where
    F: Fn(f64, f64) -> Complex64 + Sync,
{
    if n < 8 {
        return Err(DimerError::InvalidParameter(format!("grid size must be at least 8, got {n}")));
    }
    let h = 2.0 * PI / n as f64;
    let node = |j: usize| -PI + (j as f64 + 0.5) * h;
    let rows: Vec<Complex64> = par::map_indices(n, |j| {
        let k1 = node(j);
        (0..n).fold(Complex64::new(0.0, 0.0), |acc, m| acc + f(k1, node(m)))
    });
    let total = rows.iter().fold(Complex64::new(0.0, 0.0), |acc, r| acc + r);
    Ok(total / (n * n) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn constant_over_period() {
        let r = integrate_1d(|_| c(1.0), 0.0, 2.0 * PI, 1e-12).unwrap();
        assert_abs_diff_eq!(r.value.re, 2.0 * PI, epsilon = 1e-13);
        assert!(r.evaluations > 0 && r.error_estimate >= 0.0);
    }

    #[test]
    fn full_period_oscillation_vanishes() {
        let r = integrate_1d(|t| Complex64::from_polar(1.0, t), 0.0, 2.0 * PI, 1e-12).unwrap();
        assert!(r.value.norm() < 1e-12);
    }

    #[test]
    fn rational_function_against_riemann_sum() {
        let f = |t: f64| 1.0 / (c(2.0) + Complex64::from_polar(1.0, t));
        let r = integrate_1d(f, 0.0, 2.0 * PI, 1e-12).unwrap();
        // independent oracle: periodic Riemann sum with 10^6 points
        let n = 1_000_000;
        let h = 2.0 * PI / n as f64;
        let riemann: Complex64 = (0..n).map(|j| f(j as f64 * h)).sum::<Complex64>() * h;
        assert_abs_diff_eq!(riemann.re, PI, epsilon = 1e-12);
        assert!((r.value - riemann).norm() < 1e-11);
        assert_abs_diff_eq!(r.value.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn error_estimate_bounds_true_error() {
        let cases: Vec<(Box<dyn Fn(f64) -> Complex64>, f64, f64, Complex64)> = vec![
            (Box::new(|x| c(x * x * x - 2.0 * x)), 0.0, 3.0, c(81.0 / 4.0 - 9.0)),
            (Box::new(|t| Complex64::from_polar(1.0, 3.0 * t)), 0.0, 1.0, (Complex64::from_polar(1.0, 3.0) - 1.0) / Complex64::new(0.0, 3.0)),
            // geometric series: only the constant mode survives
            (Box::new(|t| 1.0 / (c(1.25) - Complex64::from_polar(0.5, t))), 0.0, 2.0 * PI, c(2.0 * PI / 1.25)),
        ];
        for (f, a, b, exact) in cases {
            for tol in [1e-4, 1e-8, 1e-12] {
                let r = integrate_1d(&f, a, b, tol).unwrap();
                assert!((r.value - exact).norm() <= r.error_estimate.max(1e-14), "tol {tol}");
            }
        }
    }

    #[test]
    fn subdivision_cap_signals_singularity() {
        let cfg = QuadConfig { abs_tol: 1e-12, max_panels: 50 };
        let err = integrate_1d_with(|x| c(1.0 / x.abs().sqrt()), -1.0, 1.0, &cfg).unwrap_err();
        assert!(matches!(err, DimerError::MaxSubdivisions { .. }));
    }

    #[test]
    fn torus_grid_basics() {
        assert_abs_diff_eq!(integrate_torus_2d(|_, _| c(1.0), 16).unwrap().re, 1.0, epsilon = 1e-14);
        assert!(integrate_torus_2d(|k1, _| Complex64::from_polar(1.0, k1), 16).unwrap().norm() < 1e-14);
        assert!(integrate_torus_2d(|_, _| c(1.0), 4).is_err());
    }
}
