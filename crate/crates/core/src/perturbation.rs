//! First-order perturbation theory in the plaquette coupling: the one-loop
//! vertex `W`, the dressed Fermi data, the arc integrals `U`, the dressed
//! amplitudes `K̄`, and the two closed forms for the stiffness shift `a`
//! and the exponent shift `nu_1`, together with the cancellation that makes
//! them equal.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DimerError, Result};
use crate::free::{fermi_points, Branch, FermiData, InverseKasteleyn, KasteleynAmplitudes, Weights};
use crate::lattice::{EdgeType, Point};
use crate::par::Execution;
use crate::quadrature::{integrate_1d_split, integrate_1d_with, QuadConfig};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Probe couplings for the finite-difference extraction of `dA/dlambda`.
pub const PROBE_LAMBDAS: [f64; 2] = [1e-3, 5e-4];
/// Bound on the first-order coefficient of `Δ2/ᾱ+ - Δ1/β̄+`.
pub const RATIO_TOLERANCE: f64 = 1e-6;
/// Two Fermi points closer than this to zero relative tilt are rejected by
/// [`FirstOrder::nu_first_order`].
pub const TILT_TOLERANCE: f64 = 1e-9;

fn cis(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, theta)
}

fn circle_a(k: &KasteleynAmplitudes, theta: f64) -> Complex64 {
    k.k[0] + k.k[1] * cis(theta)
}

fn circle_b(k: &KasteleynAmplitudes, theta: f64) -> Complex64 {
    -k.k[2] * cis(theta) - k.k[3]
}

/// The quartic vertex `W(k, k', p)`, symmetrized over field orderings.
pub fn w_quartic(k: [f64; 2], kp: [f64; 2], p: [f64; 2]) -> Complex64 {
    cis(kp[0] + kp[1] - p[1]) + cis(kp[0] + kp[1] - p[0]) + cis(k[0] + k[1] + p[1]) + cis(k[0] + k[1] + p[0])
        - cis(k[1] + kp[0] + p[1])
        - cis(k[0] + kp[1] + p[0])
        - cis(kp[1] + k[0] - p[1])
        - cis(kp[0] + k[1] - p[0])
}

/// The unique reals `(c1, c2)` with `target = c1 alpha + c2 beta`.
pub fn decompose(target: Complex64, alpha: Complex64, beta: Complex64) -> Result<[f64; 2]> {
    let det = alpha.re * beta.im - alpha.im * beta.re;
    if det.abs() < 1e-14 * (alpha.norm() * beta.norm()).max(1e-300) {
        return Err(DimerError::DegenerateFrame { det });
    }
    let c1 = (target.re * beta.im - target.im * beta.re) / det;
    let c2 = (alpha.re * target.im - alpha.im * target.re) / det;
    Ok([c1, c2])
}

/// `(c+_1, c+_2)` with `W(p+) = c1 alpha+ + c2 beta+`.
pub fn c_coeffs(fd: &FermiData, w_plus: Complex64) -> Result<[f64; 2]> {
    decompose(w_plus, fd.alpha(Branch::Plus), fd.beta(Branch::Plus))
}

/// Dressed zeros and slopes at a given coupling, linear in `u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DressedFermi {
    pub lambda: f64,
    pub p_bar: [[f64; 2]; 2],
    pub alpha_bar: [Complex64; 2],
    pub beta_bar: [Complex64; 2],
}

impl DressedFermi {
    pub fn frame_det(&self) -> Complex64 {
        self.alpha_bar[0] * self.beta_bar[1] - self.alpha_bar[1] * self.beta_bar[0]
    }
}

/// Every first-order quantity at one coupling.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstOrderData {
    pub weights: Weights,
    pub lambda: f64,
    pub u: f64,
    /// `W(p+)`, `W(p-)`.
    pub w: [Complex64; 2],
    /// `c^+`, `c^-`.
    pub c: [[f64; 2]; 2],
    pub dressed: DressedFermi,
    /// `U^omega_r` indexed `[omega][r]`.
    pub u_r: [[Complex64; 4]; 2],
    /// `K̄_{omega, r}` indexed `[omega][r]`.
    pub k_bar: [[Complex64; 4]; 2],
    pub a: f64,
    pub nu1: f64,
}

/// Largest violation of each symmetry relation, in absolute value.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SymmetryReport {
    /// `ᾱ_w* = -ᾱ_{-w}`, `β̄_w* = -β̄_{-w}`.
    pub slopes: f64,
    /// `p̄+ + p̄- = (pi, pi)` mod `2 pi`.
    pub zeros: f64,
    /// `K̄_{w,r}* = K̄_{-w,r}`.
    pub amplitudes: f64,
    /// `W(p+)* = W(p-)`.
    pub vertex: f64,
    /// `(K_r U^w_r)* = K_r U^{-w}_r`, equivalently
    /// `(U^w_r)* = (-1)^{|v_r|} U^{-w}_r`.
    pub arc_integrals: f64,
    /// `c^w = -c^{-w}`.
    pub c_antisymmetry: f64,
}

impl SymmetryReport {
    pub fn max(&self) -> f64 {
        [self.slopes, self.zeros, self.amplitudes, self.vertex, self.arc_integrals, self.c_antisymmetry]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// The two cancellation residuals: the bracket identity between the
/// `Δ` ratios and the same quantity written through explicit arc integrals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HaldaneResidual {
    pub bracket: f64,
    pub arcs: f64,
}

/// Per-weight first-order machinery. Construction computes the Fermi data
/// and the four nearest-neighbour kernel values once.
pub struct FirstOrder {
    weights: Weights,
    fermi: FermiData,
    amplitudes: KasteleynAmplitudes,
    g: [Complex64; 4],
    quad: QuadConfig,
}

impl FirstOrder {
    pub fn new(w: &Weights) -> Result<Self> {
        Self::with_quadrature(w, QuadConfig::with_tol(1e-13))
    }

    pub fn with_quadrature(w: &Weights, quad: QuadConfig) -> Result<Self> {
        let kernel = InverseKasteleyn::with_quadrature(w, quad)?;
        let mut g = [Complex64::new(0.0, 0.0); 4];
        for r in EdgeType::ALL {
            g[r.index()] = kernel.eval(r.lattice_offset())?;
        }
        Ok(FirstOrder {
            weights: *w,
            fermi: *kernel.fermi(),
            amplitudes: KasteleynAmplitudes::new(w),
            g,
            quad,
        })
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn fermi(&self) -> &FermiData {
        &self.fermi
    }

    /// `g(v_r)`.
    pub fn g(&self, r: EdgeType) -> Complex64 {
        self.g[r.index()]
    }

    pub fn rescaled_coupling(&self, lambda: f64) -> f64 {
        self.weights.coupling_scale() * lambda
    }

    /// `W(k) = g(v1) e^{i(k1+k2)} - g(v2) e^{ik2} - g(v4) e^{ik1} + g(v3)`.
    pub fn w_vertex(&self, k: [f64; 2]) -> Complex64 {
        let [g1, g2, g3, g4] = self.g;
        g1 * cis(k[0] + k[1]) - g2 * cis(k[1]) - g4 * cis(k[0]) + g3
    }

    /// `(dW/dk1, dW/dk2)`.
    pub fn w_vertex_gradient(&self, k: [f64; 2]) -> (Complex64, Complex64) {
        let [g1, g2, _, g4] = self.g;
        let e12 = cis(k[0] + k[1]);
        (I * (g1 * e12 - g4 * cis(k[0])), I * (g1 * e12 - g2 * cis(k[1])))
    }

    pub fn w_at(&self, b: Branch) -> Complex64 {
        self.w_vertex(self.fermi.p(b))
    }

    /// `c^omega`.
    pub fn c(&self, b: Branch) -> Result<[f64; 2]> {
        decompose(self.w_at(b), self.fermi.alpha(b), self.fermi.beta(b))
    }

    /// First-order corrections `(alpha^(1), beta^(1))` with
    /// `ᾱ = alpha + 2u alpha^(1)`.
    pub fn slope_corrections(&self, b: Branch) -> Result<(Complex64, Complex64)> {
        let [c1, c2] = self.c(b)?;
        let p = self.fermi.p(b);
        let (dw1, dw2) = self.w_vertex_gradient(p);
        let (alpha, beta) = (self.fermi.alpha(b), self.fermi.beta(b));
        let mixed = self.weights.t3 * cis(p[0] + p[1]);
        let a1 = -dw1 + c1 * I * alpha + c2 * mixed;
        let b1 = -dw2 + c2 * I * beta + c1 * mixed;
        Ok((a1, b1))
    }

    pub fn dressed_fermi(&self, lambda: f64) -> Result<DressedFermi> {
        let u = self.rescaled_coupling(lambda);
        let mut d = DressedFermi {
            lambda,
            p_bar: self.fermi.p,
            alpha_bar: self.fermi.alpha,
            beta_bar: self.fermi.beta,
        };
        for b in Branch::BOTH {
            let i = b.index();
            let c = self.c(b)?;
            let (a1, b1) = self.slope_corrections(b)?;
            d.p_bar[i] = [self.fermi.p[i][0] + 2.0 * u * c[0], self.fermi.p[i][1] + 2.0 * u * c[1]];
            d.alpha_bar[i] += 2.0 * u * a1;
            d.beta_bar[i] += 2.0 * u * b1;
        }
        Ok(d)
    }

    fn integrate(&self, f: impl Fn(f64) -> Complex64, arc: (f64, f64)) -> Result<Complex64> {
        Ok(integrate_1d_with(f, arc.0, arc.1, &self.quad)?.value)
    }

    fn singular_prefactor(&self) -> Complex64 {
        I / (2.0 * PI * self.fermi.frame_det())
    }

    /// The regular part `C(a)` of the two-propagator bubble.
    pub fn lemma_c(&self, a: Point) -> Result<Complex64> {
        let fd = &self.fermi;
        let mut constant = Complex64::new(0.0, 0.0);
        for b in Branch::BOTH {
            constant += fd.beta(b.opposite()) / fd.beta(b) * fd.phase(b, a);
        }
        let constant = -self.singular_prefactor() * constant;
        let a2 = a[1];
        if a2 == 1 {
            return Ok(constant);
        }
        let k = self.amplitudes;
        let a1 = a[0] as f64;
        let arc = if a2 <= 0 {
            let v = self.integrate(
                |t| {
                    let (ca, cb) = (circle_a(&k, t), circle_b(&k, t));
                    cis(t * a1) * (cb / ca).powi(-a2 as i32) / (ca * ca)
                },
                fd.outer_arc(),
            )?;
            v
        } else {
            let v = self.integrate(
                |t| {
                    let (ca, cb) = (circle_a(&k, t), circle_b(&k, t));
                    cis(t * a1) * ca.powi(a2 as i32 - 2) / cb.powi(a2 as i32)
                },
                fd.inner_arc(),
            )?;
            -v
        };
        Ok(constant + arc * ((1 - a2) as f64 / (2.0 * PI)))
    }

    /// Singular part plus `C(a)`: the bubble
    /// `int e^{ika} / (mu(k) mu(k+p))` up to a remainder vanishing as `p -> 0`.
    pub fn lemma_i(&self, a: Point, p: [f64; 2]) -> Result<Complex64> {
        let fd = &self.fermi;
        let mut singular = Complex64::new(0.0, 0.0);
        for b in Branch::BOTH {
            singular += fd.linear(b.opposite(), p) / fd.linear(b, p) * fd.phase(b, a);
        }
        Ok(self.singular_prefactor() * singular + self.lemma_c(a)?)
    }

    /// `U^omega_r` from four values of `C`.
    pub fn u_from_bubbles(&self, b: Branch, r: EdgeType) -> Result<Complex64> {
        let v = r.lattice_offset();
        let m = [-v[0], -v[1]];
        let c = |d: Point| self.lemma_c([m[0] + d[0], m[1] + d[1]]);
        let fd = &self.fermi;
        Ok(fd.phase(b, [1, 1]) * c([0, 0])? + c([1, 1])? - fd.phase(b, [1, 0]) * c([0, 1])? - fd.phase(b, [0, 1]) * c([1, 0])?)
    }

    /// `U^+_r` from its explicit single-arc representation.
    pub fn u_explicit(&self, r: EdgeType) -> Result<Complex64> {
        let fd = &self.fermi;
        let k = self.amplitudes;
        let (p_plus, p_minus) = (fd.p(Branch::Plus), fd.p(Branch::Minus));
        let e1 = cis(p_plus[0]);
        let constant = -2.0 * I / (PI * fd.frame_det()) * fd.beta(Branch::Plus) / fd.beta(Branch::Minus)
            * fd.cos_product();
        let (arc, phase) = match r {
            EdgeType::One => (
                cis(p_plus[1]) * self.integrate(|t| (e1 - cis(t)) / circle_a(&k, t).powi(2), fd.outer_arc())?,
                Complex64::new(1.0, 0.0),
            ),
            EdgeType::Two => (
                cis(p_plus[1]) * self.integrate(|t| cis(t) * (e1 - cis(t)) / circle_a(&k, t).powi(2), fd.outer_arc())?,
                cis(p_minus[0]),
            ),
            EdgeType::Three => (
                self.integrate(|t| cis(t) * (cis(t) - e1) / circle_b(&k, t).powi(2), fd.inner_arc())?,
                cis(p_minus[0] + p_minus[1]),
            ),
            EdgeType::Four => (
                self.integrate(|t| (cis(t) - e1) / circle_b(&k, t).powi(2), fd.inner_arc())?,
                cis(p_minus[1]),
            ),
        };
        Ok(arc / (2.0 * PI) + constant * phase)
    }

    /// `U^omega_r`; the `+` branch uses the explicit arcs, the `-` branch the
    /// bubble combination.
    pub fn u(&self, b: Branch, r: EdgeType) -> Result<Complex64> {
        match b {
            Branch::Plus => self.u_explicit(r),
            Branch::Minus => self.u_from_bubbles(b, r),
        }
    }

    fn u_table(&self) -> Result<[[Complex64; 4]; 2]> {
        let mut t = [[Complex64::new(0.0, 0.0); 4]; 2];
        for b in Branch::BOTH {
            for r in EdgeType::ALL {
                t[b.index()][r.index()] = self.u(b, r)?;
            }
        }
        Ok(t)
    }

    fn k_bar_with(&self, lambda: f64, dressed: &DressedFermi, u_tab: &[[Complex64; 4]; 2], b: Branch, r: EdgeType) -> Complex64 {
        let u = self.rescaled_coupling(lambda);
        let kr = self.amplitudes.get(r);
        let v = r.lattice_offset();
        let pb = dressed.p_bar[b.index()];
        let phase = cis(-(pb[0] * v[0] as f64 + pb[1] * v[1] as f64));
        kr * phase - 2.0 * lambda * self.weights.pair_product(r) * self.w_at(b) + 2.0 * u * kr * u_tab[b.index()][r.index()]
    }

    /// `K̄_{omega, r}` at coupling `lambda`.
    pub fn k_bar(&self, lambda: f64, b: Branch, r: EdgeType) -> Result<Complex64> {
        let d = self.dressed_fermi(lambda)?;
        Ok(self.k_bar_with(lambda, &d, &self.u_table()?, b, r))
    }

    /// `a = -(4 (t1 t3 + t2) / pi) cos(p1+) cos(p2+) / Im(alpha+ beta-)`.
    pub fn coefficient_a(&self) -> f64 {
        let fd = &self.fermi;
        let im = (fd.alpha(Branch::Plus) * fd.beta(Branch::Minus)).im;
        -4.0 * self.weights.coupling_scale() / PI * fd.cos_product() / im
    }

    /// `nu_1` from the closed formula, without the tilt check.
    pub fn nu_first_order_formula(&self) -> Result<f64> {
        let fd = &self.fermi;
        let z = 8.0 * self.weights.coupling_scale() / (PI * I) / fd.frame_det() * fd.cos_product();
        if z.im.abs() > 1e-10 * z.re.abs().max(1.0) {
            return Err(DimerError::InvalidParameter(format!("nu_1 is not real: {z}")));
        }
        Ok(z.re)
    }

    /// Whether `p+ - p- = p- - p+` mod `2 pi` (zero average tilt).
    pub fn has_zero_tilt(&self) -> bool {
        let (pp, pm) = (self.fermi.p(Branch::Plus), self.fermi.p(Branch::Minus));
        (0..2).all(|j| {
            let d = 2.0 * (pp[j] - pm[j]);
            let m = d.rem_euclid(2.0 * PI);
            m.min(2.0 * PI - m) < TILT_TOLERANCE
        })
    }

    /// `nu_1` for weights with nonzero tilt.
    pub fn nu_first_order(&self) -> Result<f64> {
        if self.has_zero_tilt() {
            return Err(DimerError::NonGenericTilt { weights: self.weights.triple() });
        }
        self.nu_first_order_formula()
    }

    /// `(Δ2/ᾱ+, Δ1/β̄+)` at coupling `lambda`.
    pub fn ratios(&self, lambda: f64) -> Result<(Complex64, Complex64)> {
        let u_tab = self.u_table()?;
        self.ratios_with(lambda, &u_tab)
    }

    fn ratios_with(&self, lambda: f64, u_tab: &[[Complex64; 4]; 2]) -> Result<(Complex64, Complex64)> {
        let d = self.dressed_fermi(lambda)?;
        let kb = |r| self.k_bar_with(lambda, &d, u_tab, Branch::Plus, r);
        let delta2 = kb(EdgeType::One) + kb(EdgeType::Four);
        let delta1 = kb(EdgeType::One) + kb(EdgeType::Two);
        Ok((delta2 / d.alpha_bar[0], delta1 / d.beta_bar[0]))
    }

    /// `dA/dlambda` at zero, with `A = -(Δ2/ᾱ+)^2`, by Richardson-extrapolated
    /// central differences at [`PROBE_LAMBDAS`]. Fails if the two ratios
    /// disagree at first order.
    pub fn a_first_order(&self) -> Result<f64> {
        let u_tab = self.u_table()?;
        let derivative = |h: f64| -> Result<(Complex64, Complex64)> {
            let (rp2, rp1) = self.ratios_with(h, &u_tab)?;
            let (rm2, rm1) = self.ratios_with(-h, &u_tab)?;
            let da = (-(rp2 * rp2) + rm2 * rm2) / (2.0 * h);
            let dm = ((rp2 - rp1) - (rm2 - rm1)) / (2.0 * h);
            Ok((da, dm))
        };
        let (d1, m1) = derivative(PROBE_LAMBDAS[0])?;
        let (d2, m2) = derivative(PROBE_LAMBDAS[1])?;
        let mismatch = ((4.0 * m2 - m1) / 3.0).norm();
        if mismatch > RATIO_TOLERANCE {
            return Err(DimerError::RatioMismatch { mismatch, tolerance: RATIO_TOLERANCE });
        }
        let da = (4.0 * d2 - d1) / 3.0;
        if da.im.abs() > 1e-8 * da.re.abs().max(1.0) {
            return Err(DimerError::InvalidParameter(format!("dA/dlambda is not real: {da}")));
        }
        Ok(da.re)
    }

    /// `Δ^(1)_2`, `Δ^(1)_1` from the `U^+` and `c^+`.
    pub fn delta_corrections(&self) -> Result<(Complex64, Complex64)> {
        let [c1, c2] = self.c(Branch::Plus)?;
        let p = self.fermi.p(Branch::Plus);
        let k = &self.amplitudes.k;
        let w = self.w_at(Branch::Plus);
        let u = |r| self.u(Branch::Plus, r);
        let d2 = -w + k[0] * u(EdgeType::One)? + k[3] * u(EdgeType::Four)? + I * c2 * k[3] * cis(p[1]);
        let d1 = -w + k[0] * u(EdgeType::One)? + k[1] * u(EdgeType::Two)? + I * c1 * k[1] * cis(p[0]);
        Ok((d2, d1))
    }

    /// Left side of the bracket identity
    /// `(Δ2^(1) - i alpha^(1)) beta+ - (Δ1^(1) - i beta^(1)) alpha+`.
    pub fn bracket_residual(&self) -> Result<Complex64> {
        let (d2, d1) = self.delta_corrections()?;
        let (a1, b1) = self.slope_corrections(Branch::Plus)?;
        let fd = &self.fermi;
        Ok((d2 - I * a1) * fd.beta(Branch::Plus) - (d1 - I * b1) * fd.alpha(Branch::Plus))
    }

    fn arc_constant(&self) -> Complex64 {
        let fd = &self.fermi;
        -2.0 / PI * fd.beta(Branch::Plus) / fd.beta(Branch::Minus) * fd.cos_product()
    }

    /// The bracket written as five explicit arc terms.
    pub fn arc_residual(&self) -> Result<Complex64> {
        let fd = &self.fermi;
        let k = self.amplitudes;
        let (k1, k3, k4) = (k.k[0], k.k[2], k.k[3]);
        let p = fd.p(Branch::Plus);
        let e1 = cis(p[0]);
        let beta = fd.beta(Branch::Plus);
        let two_pi = 2.0 * PI;
        let i1 = self.integrate(|t| 1.0 / circle_a(&k, t), fd.outer_arc())?;
        let i2 = self.integrate(|t| 1.0 / (k3 * cis(t) + k4), fd.inner_arc())?;
        let i3 = self.integrate(|t| (e1 - cis(t)) / circle_a(&k, t).powi(2), fd.outer_arc())?;
        let i4 = self.integrate(|t| (cis(t) - e1) / (k3 * cis(t) + k4).powi(2), fd.inner_arc())?;
        Ok(self.arc_constant() - cis(p[0] + p[1]) * beta * i1 / two_pi + beta * e1 * i2 / two_pi
            + beta * k1 * cis(p[1]) * i3 / two_pi
            + beta * k4 * i4 / two_pi)
    }

    /// The same quantity with the arc integrals done in closed form.
    pub fn arc_residual_closed(&self) -> Complex64 {
        let fd = &self.fermi;
        let k = &self.amplitudes.k;
        let (k1, k2, k3, k4) = (k[0], k[1], k[2], k[3]);
        let (zp, zm) = (cis(fd.p(Branch::Plus)[0]), cis(fd.p(Branch::Minus)[0]));
        let beta = fd.beta(Branch::Plus);
        let prim3 = |z: Complex64| -1.0 / (k3 * (k3 * z + k4));
        let prim1 = |z: Complex64| -1.0 / (k2 * (k1 + k2 * z));
        let two_pi_i = 2.0 * PI * I;
        self.arc_constant() + beta * (k4 + k3 * zp) / two_pi_i * (prim3(zm) - prim3(zp))
            - beta * (k1 + k2 * zp) * cis(fd.p(Branch::Plus)[1]) / two_pi_i * (prim1(zp) - prim1(zm))
    }

    pub fn haldane_residual(&self) -> Result<HaldaneResidual> {
        Ok(HaldaneResidual { bracket: self.bracket_residual()?.norm(), arcs: self.arc_residual()?.norm() })
    }

    /// All first-order quantities at `lambda`.
    pub fn snapshot(&self, lambda: f64) -> Result<FirstOrderData> {
        let dressed = self.dressed_fermi(lambda)?;
        let u_tab = self.u_table()?;
        let mut k_bar = [[Complex64::new(0.0, 0.0); 4]; 2];
        for b in Branch::BOTH {
            for r in EdgeType::ALL {
                k_bar[b.index()][r.index()] = self.k_bar_with(lambda, &dressed, &u_tab, b, r);
            }
        }
        Ok(FirstOrderData {
            weights: self.weights,
            lambda,
            u: self.rescaled_coupling(lambda),
            w: [self.w_at(Branch::Plus), self.w_at(Branch::Minus)],
            c: [self.c(Branch::Plus)?, self.c(Branch::Minus)?],
            dressed,
            u_r: u_tab,
            k_bar,
            a: self.coefficient_a(),
            nu1: self.nu_first_order_formula()?,
        })
    }
}

fn wrapped_distance(x: f64) -> f64 {
    let m = x.rem_euclid(2.0 * PI);
    m.min(2.0 * PI - m)
}

/// Checks every conjugation relation on a snapshot.
pub fn symmetry_report(fo: &FirstOrder, data: &FirstOrderData) -> SymmetryReport {
    let d = &data.dressed;
    let mut rep = SymmetryReport::default();
    rep.slopes = (d.alpha_bar[0].conj() + d.alpha_bar[1]).norm().max((d.beta_bar[0].conj() + d.beta_bar[1]).norm());
    rep.zeros = (0..2)
        .map(|j| wrapped_distance(d.p_bar[0][j] + d.p_bar[1][j] - PI))
        .fold(0.0, f64::max);
    rep.vertex = (data.w[0].conj() - data.w[1]).norm();
    rep.c_antisymmetry = (0..2).map(|j| (data.c[0][j] + data.c[1][j]).abs()).fold(0.0, f64::max);
    for r in EdgeType::ALL {
        let i = r.index();
        let kr = fo.amplitudes.get(r);
        rep.amplitudes = rep.amplitudes.max((data.k_bar[0][i].conj() - data.k_bar[1][i]).norm());
        rep.arc_integrals = rep.arc_integrals.max(((kr * data.u_r[0][i]).conj() - kr * data.u_r[1][i]).norm());
    }
    rep
}

pub fn coefficient_a(w: &Weights) -> Result<f64> {
    let fd = fermi_points(w)?;
    let im = (fd.alpha(Branch::Plus) * fd.beta(Branch::Minus)).im;
    Ok(-4.0 * w.coupling_scale() / PI * fd.cos_product() / im)
}

#[allow(non_snake_case)]
pub fn A_first_order(w: &Weights) -> Result<f64> {
    FirstOrder::new(w)?.a_first_order()
}

pub fn nu_first_order(w: &Weights) -> Result<f64> {
    FirstOrder::new(w)?.nu_first_order()
}

pub fn haldane_residual(w: &Weights) -> Result<HaldaneResidual> {
    FirstOrder::new(w)?.haldane_residual()
}

pub fn w_vertex(w: &Weights, k: [f64; 2]) -> Result<Complex64> {
    Ok(FirstOrder::new(w)?.w_vertex(k))
}

pub fn dressed_fermi(w: &Weights, lambda: f64) -> Result<DressedFermi> {
    FirstOrder::new(w)?.dressed_fermi(lambda)
}

pub fn lemma_c(w: &Weights, a: Point) -> Result<Complex64> {
    FirstOrder::new(w)?.lemma_c(a)
}

pub fn lemma_i(w: &Weights, a: Point, p: [f64; 2]) -> Result<Complex64> {
    FirstOrder::new(w)?.lemma_i(a, p)
}

#[allow(non_snake_case)]
pub fn U_r(w: &Weights, r: EdgeType) -> Result<Complex64> {
    FirstOrder::new(w)?.u_explicit(r)
}

#[allow(non_snake_case)]
pub fn K_bar(w: &Weights, lambda: f64, b: Branch, r: EdgeType) -> Result<Complex64> {
    FirstOrder::new(w)?.k_bar(lambda, b, r)
}

/// One row of a weight sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HaldaneRow {
    pub weights: Weights,
    pub a: f64,
    pub a_first_order: f64,
    pub nu1: f64,
    pub bracket_residual: f64,
    pub arc_residual: f64,
}

impl HaldaneRow {
    pub fn compute(w: &Weights) -> Result<Self> {
        let fo = FirstOrder::new(w)?;
        let res = fo.haldane_residual()?;
        Ok(HaldaneRow {
            weights: *w,
            a: fo.coefficient_a(),
            a_first_order: fo.a_first_order()?,
            nu1: fo.nu_first_order_formula()?,
            bracket_residual: res.bracket,
            arc_residual: res.arcs,
        })
    }

    pub fn passes(&self, residual_tol: f64, haldane_rel_tol: f64) -> bool {
        (self.a_first_order - self.nu1).abs() <= haldane_rel_tol * self.a.abs()
            && self.bracket_residual <= residual_tol
            && self.arc_residual <= residual_tol
    }
}

pub fn haldane_sweep(weights: &[Weights], exec: Execution) -> Vec<Result<HaldaneRow>> {
    exec.map(weights, HaldaneRow::compute)
}

/// Steps along `q = s (1, 0.6) / |(1, 0.6)|` used by [`log_squared_diagnostic`].
pub const LOG_SQUARED_STEPS: [f64; 5] = [2e-2, 1e-2, 5e-3, 2.5e-3, 1.25e-3];

/// Numerical look at the `(log|q|)^2` divergence of the first-order
/// two-point function near the nesting momentum `p- - p+`. The bubble
/// `B(q) = int dk/(2pi)^2 1/(mu(k) mu(k + p- - p+ + q))` is integrated on the
/// full torus; its `log|q|` coefficient `b` fixes the `(log|q|)^2`
/// coefficient `-u t1^2 W(p+, p-, p- - p+) b^2`, which in turn gives
/// `nu_1 = -i pi (u/lambda) det W b^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogSquaredDiagnostic {
    pub steps: Vec<f64>,
    pub bubbles: Vec<Complex64>,
    /// Fitted `b`.
    pub log_slope: Complex64,
    /// Linearized prediction `i / (pi det)`.
    pub predicted_slope: Complex64,
    pub nu1_from_fit: Complex64,
    pub nu1_closed: f64,
}

impl LogSquaredDiagnostic {
    /// Same sign and within a factor of two: the check is qualitative.
    pub fn consistent(&self) -> bool {
        let ratio = self.nu1_from_fit.re / self.nu1_closed;
        ratio > 0.5 && ratio < 2.0 && self.nu1_from_fit.im.abs() < 0.5 * self.nu1_closed.abs()
    }
}

fn sorted_breaks(points: &[f64]) -> Vec<f64> {
    let mut b = vec![-PI, PI];
    b.extend(points.iter().map(|&x| (x + PI).rem_euclid(2.0 * PI) - PI).filter(|x| x.abs() < PI - 1e-12));
    b.sort_by(f64::total_cmp);
    b.dedup_by(|x, y| (*x - *y).abs() < 1e-13);
    b
}

impl FirstOrder {
    /// `B(q)`. Writing `mu(k) = A(k1) - e^{ik2} B(k1)`, the `k2` integral is a
    /// contour integral over `z = e^{ik2}` whose poles inside the unit disk
    /// are `0`, `A/B` and the shifted one; the `k1` integral is adaptive and
    /// split where a pole crosses the circle.
    pub fn nesting_bubble(&self, q: [f64; 2]) -> Result<Complex64> {
        let fd = &self.fermi;
        let (pp, pm) = (fd.p(Branch::Plus), fd.p(Branch::Minus));
        let p = [pm[0] - pp[0] + q[0], pm[1] - pp[1] + q[1]];
        let k = self.amplitudes;
        let shift = cis(p[1]);
        let inner = |k1: f64| {
            let (a, b) = (circle_a(&k, k1), circle_b(&k, k1));
            let (a2, b2) = (circle_a(&k, k1 + p[0]), circle_b(&k, k1 + p[0]) * shift);
            let mut v = 1.0 / (a * a2);
            let z1 = a / b;
            if z1.norm() < 1.0 {
                v += 1.0 / (z1 * -b * (a2 - z1 * b2));
            }
            let z2 = a2 / b2;
            if z2.norm() < 1.0 {
                v += 1.0 / (z2 * -b2 * (a - z2 * b));
            }
            v
        };
        let breaks = sorted_breaks(&[pp[0], pm[0], pp[0] - p[0], pm[0] - p[0]]);
        let cfg = QuadConfig { abs_tol: 1e-11, max_panels: 20_000 };
        let v = integrate_1d_split(inner, &breaks, &cfg)?.value;
        Ok(v / (2.0 * PI))
    }

    /// At zero tilt a second pair of singular points merges and doubles the
    /// log coefficient, so those weights are rejected.
    pub fn log_squared_diagnostic(&self) -> Result<LogSquaredDiagnostic> {
        if self.has_zero_tilt() {
            return Err(DimerError::NonGenericTilt { weights: self.weights.triple() });
        }
        let dir = [1.0 / 1.36f64.sqrt(), 0.6 / 1.36f64.sqrt()];
        let bubbles = LOG_SQUARED_STEPS
            .iter()
            .map(|&s| self.nesting_bubble([s * dir[0], s * dir[1]]))
            .collect::<Result<Vec<_>>>()?;
        // least squares B = b log s + c, real and imaginary parts together
        let xs: Vec<f64> = LOG_SQUARED_STEPS.iter().map(|s| s.ln()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = bubbles.iter().sum::<Complex64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let sxy: Complex64 = xs.iter().zip(&bubbles).map(|(x, y)| (y - my) * (x - mx)).sum();
        let b = sxy / sxx;
        let fd = &self.fermi;
        let det = fd.frame_det();
        let (pp, pm) = (fd.p(Branch::Plus), fd.p(Branch::Minus));
        let w_nest = w_quartic(pp, pm, [pm[0] - pp[0], pm[1] - pp[1]]);
        let scale = self.weights.coupling_scale();
        Ok(LogSquaredDiagnostic {
            steps: LOG_SQUARED_STEPS.to_vec(),
            bubbles,
            log_slope: b,
            predicted_slope: I / (PI * det),
            nu1_from_fit: -I * PI * scale * det * w_nest * b * b,
            nu1_closed: self.nu_first_order_formula()?,
        })
    }
}

/// Deterministic sample of generic weight triples, each `t_i` uniform in
/// `[lo, hi]`, keeping only triples with well separated, nonzero-tilt Fermi
/// points.
pub fn sample_generic_weights(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<Weights> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (t1, t2, t3) = (rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi));
        let Ok(w) = Weights::new(t1, t2, t3) else { continue };
        let Ok(fd) = fermi_points(&w) else { continue };
        let sep = (0..2)
            .map(|j| wrapped_distance(2.0 * (fd.p[0][j] - fd.p[1][j])))
            .fold(f64::INFINITY, f64::min);
        if fd.frame_det().norm() > 0.05 && sep > 0.05 && fd.p[0][0].cos() > 0.1 {
            out.push(w);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn vertex_at_zero_momentum_transfer() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let k = [rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)];
            let kp = [rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)];
            let lhs = w_quartic(k, kp, [0.0, 0.0]);
            let rhs = 2.0 * (cis(k[0]) - cis(kp[0])) * (cis(k[1]) - cis(kp[1]));
            assert!(close(lhs, rhs, 1e-13));
            assert!(w_quartic(k, k, [0.0, 0.0]).norm() < 1e-13);
        }
    }

    #[test]
    fn quartic_vertex_at_fermi_points() {
        for w in [Weights::uniform(), Weights::new(0.8, 1.1, 1.2).unwrap()] {
            let fd = fermi_points(&w).unwrap();
            let (pp, pm) = (fd.p[0], fd.p[1]);
            let v = w_quartic(pp, pm, [pm[0] - pp[0], pm[1] - pp[1]]);
            assert!(close(v, Complex64::new(-8.0 * fd.cos_product(), 0.0), 1e-12), "{v}");
        }
    }

    #[test]
    fn decomposition_cases() {
        let fd = fermi_points(&Weights::uniform()).unwrap();
        let (a, b) = (fd.alpha[0], fd.beta[0]);
        assert_eq!(decompose(a, a, b).unwrap(), [1.0, 0.0]);
        assert_eq!(decompose(Complex64::new(0.0, 0.0), a, b).unwrap(), [0.0, 0.0]);
        let one = Complex64::new(1.0, 0.0);
        assert!(matches!(decompose(one, one, 2.0 * one), Err(DimerError::DegenerateFrame { .. })));
    }

    #[test]
    fn uniform_vertex_vanishes_at_fermi_point() {
        let fo = FirstOrder::new(&Weights::uniform()).unwrap();
        assert!(fo.w_at(Branch::Plus).norm() < 1e-12);
        assert_eq!(fo.c(Branch::Plus).unwrap().map(|c| (c.abs() < 1e-10) as u8), [1, 1]);
    }

    #[test]
    fn zero_coupling_leaves_fermi_data() {
        let w = Weights::new(0.8, 1.1, 1.2).unwrap();
        let fo = FirstOrder::new(&w).unwrap();
        let d = fo.dressed_fermi(0.0).unwrap();
        assert_eq!(d.p_bar, fo.fermi().p);
        assert_eq!(d.alpha_bar, fo.fermi().alpha);
        for b in Branch::BOTH {
            for r in EdgeType::ALL {
                let v = r.lattice_offset();
                let p = fo.fermi().p(b);
                let expect = fo.amplitudes.get(r) * cis(-(p[0] * v[0] as f64 + p[1] * v[1] as f64));
                assert!(close(fo.k_bar(0.0, b, r).unwrap(), expect, 1e-15));
            }
        }
    }

    #[test]
    fn closed_forms_for_a() {
        assert_abs_diff_eq!(coefficient_a(&Weights::uniform()).unwrap(), -4.0 / PI, epsilon = 1e-14);
        let w = Weights::new(0.5, 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(coefficient_a(&w).unwrap(), -5.0 / PI, epsilon = 1e-13);
    }

    #[test]
    fn zero_tilt_is_detected() {
        let fo = FirstOrder::new(&Weights::uniform()).unwrap();
        assert!(fo.has_zero_tilt());
        assert!(matches!(fo.nu_first_order(), Err(DimerError::NonGenericTilt { .. })));
        assert_abs_diff_eq!(fo.nu_first_order_formula().unwrap(), -4.0 / PI, epsilon = 1e-13);
        let fo = FirstOrder::new(&Weights::new(0.8, 1.1, 1.2).unwrap()).unwrap();
        assert!(!fo.has_zero_tilt());
        assert!(fo.nu_first_order().is_ok());
    }

    #[test]
    fn both_ratios_equal_i_at_zero_coupling() {
        let fo = FirstOrder::new(&Weights::new(0.8, 1.1, 1.2).unwrap()).unwrap();
        let (r2, r1) = fo.ratios(0.0).unwrap();
        assert!(close(r2, I, 1e-12) && close(r1, I, 1e-12));
    }

    #[test]
    fn delta_corrections_match_amplitudes() {
        let fo = FirstOrder::new(&Weights::new(0.9, 1.0, 1.1).unwrap()).unwrap();
        let (d2, d1) = fo.delta_corrections().unwrap();
        let h = 1e-4;
        let u = fo.rescaled_coupling(h);
        let sum = |lam: f64, rs: [EdgeType; 2]| -> Complex64 {
            rs.iter().map(|&r| fo.k_bar(lam, Branch::Plus, r).unwrap()).sum()
        };
        let num2 = (sum(h, [EdgeType::One, EdgeType::Four]) - sum(-h, [EdgeType::One, EdgeType::Four])) / (4.0 * u);
        let num1 = (sum(h, [EdgeType::One, EdgeType::Two]) - sum(-h, [EdgeType::One, EdgeType::Two])) / (4.0 * u);
        assert!(close(num2, d2, 1e-7), "{num2} vs {d2}");
        assert!(close(num1, d1, 1e-7), "{num1} vs {d1}");
    }

    #[test]
    fn arc_routes_for_u_agree() {
        for w in [Weights::uniform(), Weights::new(0.7, 1.3, 0.9).unwrap()] {
            let fo = FirstOrder::new(&w).unwrap();
            for r in EdgeType::ALL {
                let a = fo.u_explicit(r).unwrap();
                let b = fo.u_from_bubbles(Branch::Plus, r).unwrap();
                assert!(close(a, b, 1e-9), "{w} r={r}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn closed_and_quadrature_arc_residuals_agree() {
        let fo = FirstOrder::new(&Weights::new(0.7, 1.3, 0.9).unwrap()).unwrap();
        assert!(close(fo.arc_residual().unwrap(), fo.arc_residual_closed(), 1e-10));
    }

    #[test]
    fn generic_sample_is_reproducible() {
        let a = sample_generic_weights(5, 0.6, 1.6, 3);
        assert_eq!(a, sample_generic_weights(5, 0.6, 1.6, 3));
        assert_eq!(a.len(), 5);
    }
}
