//! Exact solution of the non-interacting dimer model: the Kasteleyn symbol,
//! its two Fermi points, the infinite-volume inverse Kasteleyn kernel,
//! edge densities, two-point dimer correlations and height variances.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Mutex;

use num_complex::Complex64;

use crate::error::{DimerError, Result};
use crate::lattice::{
    black_to_physical, canonical_path, physical_to_black, EdgeType, FacePath, Point, TorusGeometry,
};
use crate::par::Execution;
use crate::quadrature::{integrate_1d_with, QuadConfig};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Zeros closer than this (in `|alpha+ beta- - alpha- beta+|`) are treated as
/// tangential.
pub const GENERICITY_TOL: f64 = 1e-8;

fn cis(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, theta)
}

/// Edge activities `(t1, t2, t3)` with `t4 = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Weights {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl Weights {
    pub fn new(t1: f64, t2: f64, t3: f64) -> Result<Self> {
        for (name, t) in [("t1", t1), ("t2", t2), ("t3", t3)] {
            if !(t.is_finite() && t > 0.0) {
                return Err(DimerError::InvalidParameter(format!("{name} must be positive, got {t}")));
            }
        }
        Ok(Weights { t1, t2, t3 })
    }

    pub fn uniform() -> Self {
        Weights { t1: 1.0, t2: 1.0, t3: 1.0 }
    }

    pub fn triple(&self) -> [f64; 3] {
        [self.t1, self.t2, self.t3]
    }

    /// `(t1, t2, t3, 1)`.
    pub fn all(&self) -> [f64; 4] {
        [self.t1, self.t2, self.t3, 1.0]
    }

    pub fn t(&self, r: EdgeType) -> f64 {
        self.all()[r.index()]
    }

    /// `t_r t_{r+2}`: `t1 t3` for horizontal types, `t2` for vertical ones.
    pub fn pair_product(&self, r: EdgeType) -> f64 {
        self.t(r) * self.t(r.opposite())
    }

    /// `t1 t3 + t2`, the factor relating the rescaled coupling to lambda.
    pub fn coupling_scale(&self) -> f64 {
        self.t1 * self.t3 + self.t2
    }

    fn non_generic(&self, reason: impl Into<String>) -> DimerError {
        DimerError::NonGenericWeights { weights: self.triple(), reason: reason.into() }
    }
}

impl fmt::Display for Weights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.t1, self.t2, self.t3)
    }
}

/// Kasteleyn amplitudes `K1 = t1, K2 = i t2, K3 = -t3, K4 = -i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KasteleynAmplitudes {
    pub k: [Complex64; 4],
}

impl KasteleynAmplitudes {
    pub fn new(w: &Weights) -> Self {
        KasteleynAmplitudes {
            k: [
                Complex64::new(w.t1, 0.0),
                Complex64::new(0.0, w.t2),
                Complex64::new(-w.t3, 0.0),
                Complex64::new(0.0, -1.0),
            ],
        }
    }

    pub fn get(&self, r: EdgeType) -> Complex64 {
        self.k[r.index()]
    }
}

/// The symbol `mu(k) = t1 + i t2 e^{ik1} - t3 e^{i(k1+k2)} - i e^{ik2}`.
pub fn mu(w: &Weights, k: [f64; 2]) -> Complex64 {
    w.t1 + I * w.t2 * cis(k[0]) - w.t3 * cis(k[0] + k[1]) - I * cis(k[1])
}

/// `(d mu / d k1, d mu / d k2)` in closed form.
pub fn mu_gradient(w: &Weights, k: [f64; 2]) -> (Complex64, Complex64) {
    let e12 = cis(k[0] + k[1]);
    let d1 = -w.t2 * cis(k[0]) - I * w.t3 * e12;
    let d2 = -I * w.t3 * e12 + cis(k[1]);
    (d1, d2)
}

/// `A(theta) = K1 + K2 e^{i theta}`: `mu = A - e^{ik2} B` with `k1 = theta`.
fn circle_a(w: &Weights, theta: f64) -> Complex64 {
    w.t1 + I * w.t2 * cis(theta)
}

/// `B(theta) = -K3 e^{i theta} - K4 = i + t3 e^{i theta}`.
fn circle_b(w: &Weights, theta: f64) -> Complex64 {
    I + w.t3 * cis(theta)
}

/// Label of the two Fermi points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Plus, Branch::Minus];

    pub fn opposite(self) -> Branch {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Branch::Plus => 0,
            Branch::Minus => 1,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Plus => "+",
            Branch::Minus => "-",
        })
    }
}

/// The two simple zeros of `mu` and their linearization coefficients
/// `alpha = d mu/d k1`, `beta = d mu/d k2`. The `+` zero has `cos(p1) > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FermiData {
    /// `p+` and `p-`, each reduced to `[-pi, pi)^2`.
    pub p: [[f64; 2]; 2],
    pub alpha: [Complex64; 2],
    pub beta: [Complex64; 2],
    /// First components as found by the root search: `p1+` in
    /// `(-pi/2, pi/2)` and `p1-` in `(pi/2, 3pi/2)`.
    p1_raw: [f64; 2],
}

impl FermiData {
    pub fn p(&self, b: Branch) -> [f64; 2] {
        self.p[b.index()]
    }

    pub fn alpha(&self, b: Branch) -> Complex64 {
        self.alpha[b.index()]
    }

    pub fn beta(&self, b: Branch) -> Complex64 {
        self.beta[b.index()]
    }

    /// `alpha+ beta- - alpha- beta+`.
    pub fn frame_det(&self) -> Complex64 {
        self.alpha[0] * self.beta[1] - self.alpha[1] * self.beta[0]
    }

    /// `D_omega(q) = alpha_omega q1 + beta_omega q2`.
    pub fn linear(&self, b: Branch, q: [f64; 2]) -> Complex64 {
        self.alpha(b) * q[0] + self.beta(b) * q[1]
    }

    /// `[p1-, p1+ + 2 pi]`, where `|A| > |B|`.
    pub fn outer_arc(&self) -> (f64, f64) {
        (self.p1_raw[1], self.p1_raw[0] + 2.0 * PI)
    }

    /// `[p1+, p1-]`, where `|A| < |B|`.
    pub fn inner_arc(&self) -> (f64, f64) {
        (self.p1_raw[0], self.p1_raw[1])
    }

    /// `e^{i p^omega . a}` for an integer vector `a`.
    pub fn phase(&self, b: Branch, a: Point) -> Complex64 {
        let p = self.p(b);
        cis(p[0] * a[0] as f64 + p[1] * a[1] as f64)
    }

    /// `cos(p1+) cos(p2+)`.
    pub fn cos_product(&self) -> f64 {
        self.p[0][0].cos() * self.p[0][1].cos()
    }
}

fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y >= PI {
        y - 2.0 * PI
    } else {
        y
    }
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Locates the two zeros of `mu`. Writing `mu = A(k1) - e^{ik2} B(k1)`, a
/// zero needs `|A(k1)| = |B(k1)|`; the modulus mismatch changes sign once on
/// each half of the circle and is bracketed by bisection, after which
/// `e^{ik2} = A/B`.
pub fn fermi_points(w: &Weights) -> Result<FermiData> {
    let mismatch = |theta: f64| circle_a(w, theta).norm_sqr() - circle_b(w, theta).norm_sqr();
    let (lo, hi) = (-0.5 * PI, 0.5 * PI);
    if !(mismatch(lo) > 0.0 && mismatch(hi) < 0.0) {
        return Err(w.non_generic("the circles |A| = |B| do not cross transversally"));
    }
    if !(mismatch(hi) < 0.0 && mismatch(hi + PI) > 0.0) {
        return Err(w.non_generic("the circles |A| = |B| do not cross transversally"));
    }
    let p1_plus = bisect(mismatch, lo, hi);
    let p1_minus = bisect(mismatch, hi, hi + PI);

    let second = |theta: f64| (circle_a(w, theta) / circle_b(w, theta)).arg();
    let p_plus = [wrap_angle(p1_plus), wrap_angle(second(p1_plus))];
    let p_minus = [wrap_angle(p1_minus), wrap_angle(second(p1_minus))];

    let (a_plus, b_plus) = mu_gradient(w, p_plus);
    let (a_minus, b_minus) = mu_gradient(w, p_minus);
    let fd = FermiData {
        p: [p_plus, p_minus],
        alpha: [a_plus, a_minus],
        beta: [b_plus, b_minus],
        p1_raw: [p1_plus, p1_minus],
    };
    if fd.frame_det().norm() < GENERICITY_TOL {
        return Err(w.non_generic(format!(
            "degenerate zeros, |alpha+ beta- - alpha- beta+| = {:.3e}",
            fd.frame_det().norm()
        )));
    }
    Ok(fd)
}

/// The infinite-volume inverse Kasteleyn kernel `g(a) = K^{-1}(a, 0)`.
///
/// The `k2` integral is done by residues: for `a2 >= 0` only the outer arc
/// contributes `B^{a2} / A^{a2+1}`, for `a2 < 0` only the inner arc with the
/// opposite sign. The remaining `k1` integral is adaptive. Values are
/// memoised, so one kernel can serve many correlation queries.
pub struct InverseKasteleyn {
    weights: Weights,
    fermi: FermiData,
    quad: QuadConfig,
    cache: Mutex<HashMap<Point, Complex64>>,
}

impl InverseKasteleyn {
    pub fn new(w: &Weights) -> Result<Self> {
        Self::with_quadrature(w, QuadConfig::default())
    }

    pub fn with_quadrature(w: &Weights, quad: QuadConfig) -> Result<Self> {
        Ok(InverseKasteleyn {
            weights: *w,
            fermi: fermi_points(w)?,
            quad,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn fermi(&self) -> &FermiData {
        &self.fermi
    }

    pub fn quadrature(&self) -> &QuadConfig {
        &self.quad
    }

    fn compute(&self, a: Point) -> Result<Complex64> {
        let w = self.weights;
        let (a1, a2) = (a[0] as f64, a[1]);
        let ((lo, hi), sign) = if a2 >= 0 {
            (self.fermi.outer_arc(), 1.0)
        } else {
            (self.fermi.inner_arc(), -1.0)
        };
        let f = |theta: f64| {
            let (ca, cb) = (circle_a(&w, theta), circle_b(&w, theta));
            let core = if a2 >= 0 {
                (cb / ca).powi(a2 as i32) / ca
            } else {
                (ca / cb).powi((-a2 - 1) as i32) / cb
            };
            cis(-theta * a1) * core
        };
        let r = integrate_1d_with(f, lo, hi, &self.quad)?;
        Ok(r.value * (sign / (2.0 * PI)))
    }

    /// `g(a)` for an integer lattice vector.
    pub fn eval(&self, a: Point) -> Result<Complex64> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(&a) {
            return Ok(*v);
        }
        let v = self.compute(a)?;
        self.cache.lock().expect("cache lock").insert(a, v);
        Ok(v)
    }

    /// Evaluates many arguments up front, concurrently when enabled.
    pub fn prefetch(&self, points: &[Point], exec: Execution) -> Result<()> {
        let mut todo: Vec<Point> = {
            let cache = self.cache.lock().expect("cache lock");
            points.iter().copied().filter(|p| !cache.contains_key(p)).collect()
        };
        todo.sort_unstable();
        todo.dedup();
        let values = exec.map(&todo, |&p| self.compute(p));
        let mut cache = self.cache.lock().expect("cache lock");
        for (p, v) in todo.into_iter().zip(values) {
            cache.insert(p, v?);
        }
        Ok(())
    }
}

/// `K^{-1}(x, 0)` for generic weights.
pub fn k_inverse(w: &Weights, x: Point) -> Result<Complex64> {
    InverseKasteleyn::new(w)?.eval(x)
}

/// `g(v_r)` through the explicit arc integrals
/// `g(v1) = (1/2pi) int_{p1-}^{p1+ + 2pi} 1/(K1 + K2 e^{i theta})`,
/// `g(v2)` the same with an extra `e^{i theta}`, and
/// `g(v4) = (1/2pi) int_{p1+}^{p1-} 1/(K3 e^{i theta} + K4)`;
/// `g(v3)` comes from the general kernel.
pub fn g_v(w: &Weights, r: EdgeType) -> Result<Complex64> {
    let fd = fermi_points(w)?;
    let k = KasteleynAmplitudes::new(w);
    let quad = QuadConfig::default();
    let (k1, k2, k3, k4) = (k.k[0], k.k[1], k.k[2], k.k[3]);
    let (olo, ohi) = fd.outer_arc();
    let (ilo, ihi) = fd.inner_arc();
    let v = match r {
        EdgeType::One => integrate_1d_with(|t| 1.0 / (k1 + k2 * cis(t)), olo, ohi, &quad)?.value,
        EdgeType::Two => integrate_1d_with(|t| cis(t) / (k1 + k2 * cis(t)), olo, ohi, &quad)?.value,
        EdgeType::Four => integrate_1d_with(|t| 1.0 / (k3 * cis(t) + k4), ilo, ihi, &quad)?.value,
        EdgeType::Three => return k_inverse(w, r.lattice_offset()),
    };
    Ok(v / (2.0 * PI))
}

/// Exact infinite-volume observables of the free model at fixed weights.
pub struct FreeDimer {
    weights: Weights,
    amplitudes: KasteleynAmplitudes,
    kernel: InverseKasteleyn,
    exec: Execution,
}

impl FreeDimer {
    pub fn new(w: &Weights) -> Result<Self> {
        Self::with_quadrature(w, QuadConfig::default())
    }

    pub fn with_quadrature(w: &Weights, quad: QuadConfig) -> Result<Self> {
        Ok(FreeDimer {
            weights: *w,
            amplitudes: KasteleynAmplitudes::new(w),
            kernel: InverseKasteleyn::with_quadrature(w, quad)?,
            exec: Execution::default(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn fermi(&self) -> &FermiData {
        self.kernel.fermi()
    }

    pub fn kernel(&self) -> &InverseKasteleyn {
        &self.kernel
    }

    pub fn amplitudes(&self) -> &KasteleynAmplitudes {
        &self.amplitudes
    }

    /// `g(v_r)` from the general kernel.
    pub fn g(&self, r: EdgeType) -> Result<Complex64> {
        self.kernel.eval(r.lattice_offset())
    }

    /// Probability that a given type-`r` edge is occupied: `K_r g(v_r)`.
    pub fn edge_density(&self, r: EdgeType) -> Result<f64> {
        Ok((self.amplitudes.get(r) * self.g(r)?).re)
    }

    /// Mean height increments `(rho1, rho2)` per unit face step, averaged over
    /// two consecutive steps (the increment alternates with face parity).
    /// An eastward step crosses a type-2 edge with `sigma = -1` or a type-4
    /// edge with `sigma = +1`; a northward step a type-1 edge with `+1` or a
    /// type-3 edge with `-1`.
    pub fn slope(&self) -> Result<[f64; 2]> {
        let d = |r| self.edge_density(r);
        let rho1 = 0.5 * ((d(EdgeType::Four)? - 0.25) - (d(EdgeType::Two)? - 0.25));
        let rho2 = 0.5 * ((d(EdgeType::One)? - 0.25) - (d(EdgeType::Three)? - 0.25));
        Ok([rho1, rho2])
    }

    fn pair_arguments(x: Point, r: EdgeType, rp: EdgeType) -> (Point, Point) {
        let (v, vp) = (r.lattice_offset(), rp.lattice_offset());
        ([vp[0] - x[0], vp[1] - x[1]], [x[0] + v[0], x[1] + v[1]])
    }

    /// Truncated correlation `E[1_e ; 1_e']` of the type-`r` edge at black
    /// `x` and the type-`r'` edge at the origin (lattice coordinates):
    /// `-K_r K_r' g(v_r' - x) g(x + v_r)`, or `p (1 - p)` for the same edge.
    pub fn dimer_correlation(&self, x: Point, r: EdgeType, rp: EdgeType) -> Result<f64> {
        if x == [0, 0] && r == rp {
            let p = self.edge_density(r)?;
            return Ok(p * (1.0 - p));
        }
        let (a, b) = Self::pair_arguments(x, r, rp);
        let z = -self.amplitudes.get(r) * self.amplitudes.get(rp) * self.kernel.eval(a)? * self.kernel.eval(b)?;
        debug_assert!(z.im.abs() <= 1e-10 + 1e-8 * z.re.abs(), "complex correlation {z}");
        Ok(z.re)
    }

    /// Complex value of the determinantal product, for reality checks.
    pub fn dimer_correlation_complex(&self, x: Point, r: EdgeType, rp: EdgeType) -> Result<Complex64> {
        let (a, b) = Self::pair_arguments(x, r, rp);
        Ok(-self.amplitudes.get(r) * self.amplitudes.get(rp) * self.kernel.eval(a)? * self.kernel.eval(b)?)
    }

    /// Variance of the height difference between the ends of `path`:
    /// `sum_{b, b'} sigma_b sigma_b' E[1_b ; 1_b']` with exact correlations.
    pub fn path_variance(&self, path: &FacePath) -> Result<f64> {
        let edges: Vec<(Point, EdgeType, f64)> = path
            .steps
            .iter()
            .map(|s| (s.edge.lattice_black(), s.edge.r, s.sign as f64))
            .collect();
        let n = edges.len();
        let mut needed = Vec::with_capacity(n * n);
        for (xb, rb, _) in &edges {
            for (xc, rc, _) in &edges {
                let (a, b) = Self::pair_arguments([xb[0] - xc[0], xb[1] - xc[1]], *rb, *rc);
                needed.push(a);
                needed.push(b);
            }
        }
        for r in EdgeType::ALL {
            needed.push(r.lattice_offset());
        }
        self.kernel.prefetch(&needed, self.exec)?;

        let rows: Vec<Result<f64>> = self.exec.map_indices(n, |i| {
            let (xb, rb, sb) = edges[i];
            let mut acc = 0.0;
            for &(xc, rc, sc) in &edges[i..] {
                let c = self.dimer_correlation([xb[0] - xc[0], xb[1] - xc[1]], rb, rc)?;
                let mult = if xb == xc && rb == rc { 1.0 } else { 2.0 };
                acc += mult * sb * sc * c;
            }
            Ok(acc)
        });
        rows.into_iter().sum()
    }

    /// Variance of `h(f') - h(f)` for faces at horizontal separation `R`,
    /// summed over the straight canonical path.
    pub fn height_variance(&self, separation: usize) -> Result<f64> {
        self.height_variance_along(separation, 0)
    }

    /// As [`FreeDimer::height_variance`] along the horizontal (`axis = 0`)
    /// or vertical (`axis = 1`) direction.
    pub fn height_variance_along(&self, separation: usize, axis: usize) -> Result<f64> {
        if separation < 1 || axis > 1 {
            return Err(DimerError::InvalidParameter("separation must be positive and axis 0 or 1".into()));
        }
        // a torus wide enough that the canonical path does not wrap
        let geom = TorusGeometry::new(2 * separation + 2)?;
        let mut to = [0, 0];
        to[axis] = separation as i64;
        let path = canonical_path(&geom, [0, 0], to);
        self.path_variance(&path)
    }
}

/// `E[1_b(x, r) ; 1_b(0, r')]` for the free model.
pub fn dimer_correlation(w: &Weights, x: Point, r: EdgeType, rp: EdgeType) -> Result<f64> {
    FreeDimer::new(w)?.dimer_correlation(x, r, rp)
}

pub fn edge_density(w: &Weights, r: EdgeType) -> Result<f64> {
    FreeDimer::new(w)?.edge_density(r)
}

pub fn slope(w: &Weights) -> Result<[f64; 2]> {
    FreeDimer::new(w)?.slope()
}

/// Free height variance at horizontal separation `R >= 2`.
pub fn height_variance_free(w: &Weights, separation: usize) -> Result<f64> {
    if separation < 2 {
        return Err(DimerError::InvalidParameter(format!("separation must be at least 2, got {separation}")));
    }
    FreeDimer::new(w)?.height_variance(separation)
}

/// Determinants of the four twisted Kasteleyn matrices of the `L x L` torus,
/// ordered as twists `(0,0), (0,pi), (pi,0), (pi,pi)` along the physical
/// axes. Each equals the product of `mu(-k)` over the allowed momenta,
/// because the operator is diagonal in plane waves on the black lattice.
pub fn twisted_determinants(w: &Weights, side: usize) -> Result<[Complex64; 4]> {
    let geom = TorusGeometry::new(side)?;
    let l = geom.side() as f64;
    let twists = [[0.0, 0.0], [0.0, PI], [PI, 0.0], [PI, PI]];
    Ok(twists.map(|[phi1, phi2]| {
        let mut det = Complex64::new(1.0, 0.0);
        // k.l1 = phi1 + 2 pi a', k.l2 = phi2 + 2 pi b' with lattice periods
        // l1 = (L/2, L/2) and l2 = (-L/2, L/2)
        for a in 0..side {
            for b in 0..side {
                if (a + b) % 2 != 0 {
                    continue;
                }
                let k1 = (phi1 - phi2 + 2.0 * PI * a as f64) / l;
                let k2 = (phi1 + phi2 + 2.0 * PI * b as f64) / l;
                det *= mu(w, [-k1, -k2]);
            }
        }
        det
    }))
}

/// Weighted number of perfect matchings of the `L x L` torus from the four
/// twisted determinants. With this gauge the signs depend on `L/2 mod 2`:
/// `Z = (1/2)(-D00 + D01 + D10 + D11)` for even `L/2`, and
/// `Z = (1/2)(D00 - D01 + D10 + D11)` for odd `L/2`.
pub fn torus_partition_function(w: &Weights, side: usize) -> Result<f64> {
    let d = twisted_determinants(w, side)?;
    let z = if (side / 2) % 2 == 0 { -d[0] + d[1] + d[2] + d[3] } else { d[0] - d[1] + d[2] + d[3] };
    Ok(0.5 * z.re)
}

/// Lattice coordinate of the black site at physical position `p`.
pub fn lattice_of(p: Point) -> Option<Point> {
    physical_to_black(p)
}

pub fn physical_of(x: Point) -> Point {
    black_to_physical(x)
}
