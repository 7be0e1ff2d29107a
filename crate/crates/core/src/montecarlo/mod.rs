//! Monte Carlo for the plaquette-interacting dimer model: flip chains,
//! height-variance and correlation estimators, and an exact oracle for tiny
//! tori.
//!
//! Flips conserve the winding, so a chain started from the columnar
//! configuration samples the measure conditioned on the zero-winding sector
//! (more precisely, on its flip component).

pub mod chain;
pub mod checkpoint;
pub mod exact;
pub mod stats;

use std::f64::consts::PI;

use crate::error::{DimerError, Result};
use crate::free::{FreeDimer, Weights};
use crate::lattice::{black_to_physical, EdgeType, Point};
use crate::par::Execution;

pub use chain::{
    flip, flippable_faces, interaction_count, metropolis_sweep, plaquette_f, AcceptanceTable, Chain, ChainState,
    FaceKind, HeightSnapshot, MCParams, PlaquetteConvention, SweepStats,
};
pub use exact::{exact_gibbs, flip_component, ExactEnsemble, Support};
pub use stats::{Estimate, LineFit};

/// Chains used by the single-call estimators.
pub const DEFAULT_CHAINS: usize = 4;

/// Which sample a chain should record after `sweeps_done` sweeps, if any.
fn sample_slot(p: &MCParams, sweeps_done: usize) -> Option<usize> {
    if sweeps_done <= p.burn_in {
        return None;
    }
    let k = sweeps_done - p.burn_in;
    if k % p.measurement_stride == 0 {
        Some(k / p.measurement_stride - 1)
    } else {
        None
    }
}

fn batches_per_chain(chains: usize) -> usize {
    stats::MIN_BATCHES.div_ceil(chains.max(1))
}

/// Height variance of the periodic lattice free field at horizontal
/// separation `r` on an `L x L` torus, normalised so that it grows like
/// `log r` for `1 << r << L`.
pub fn torus_regressor(side: usize, r: usize) -> f64 {
    let l = side as f64;
    let mut s = 0.0;
    for n2 in 0..side {
        let c2 = (2.0 * PI * n2 as f64 / l).cos();
        for n1 in 0..side {
            if n1 == 0 && n2 == 0 {
                continue;
            }
            let k1 = 2.0 * PI * n1 as f64 / l;
            s += (1.0 - (k1 * r as f64).cos()) / (4.0 - 2.0 * k1.cos() - 2.0 * c2);
        }
    }
    2.0 * PI * s / (l * l)
}

/// Regressor against which variances are fitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regressor {
    /// `log R`.
    Log,
    /// The finite-torus free-field variance, see [`torus_regressor`].
    Torus,
    /// `pi^2` times the exact free-dimer variance at the run's weights
    /// (averaged over both axes), shifted by the torus correction
    /// `torus_regressor - log R`. Absorbs the short-distance lattice
    /// corrections that bias the other two at small `R`.
    FreeShape,
}

impl Regressor {
    pub const ALL: [Regressor; 3] = [Regressor::Log, Regressor::Torus, Regressor::FreeShape];

    pub fn name(self) -> &'static str {
        match self {
            Regressor::Log => "log",
            Regressor::Torus => "torus",
            Regressor::FreeShape => "free-shape",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Regressor::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| DimerError::Parse(format!("unknown regressor {s:?}")))
    }

    pub fn eval(self, side: usize, w: &Weights, r: usize) -> Result<f64> {
        Ok(match self {
            Regressor::Log => (r as f64).ln(),
            Regressor::Torus => torus_regressor(side, r),
            Regressor::FreeShape => {
                let free = FreeDimer::new(w)?;
                let v = 0.5 * (free.height_variance_along(r, 0)? + free.height_variance_along(r, 1)?);
                PI * PI * v + torus_regressor(side, r) - (r as f64).ln()
            }
        })
    }
}

/// Weighted fit of `Var = c + (A / pi^2) log R`; returns `(A, err)`.
pub fn fit_log_prefactor(points: &[(usize, Estimate)]) -> Result<(f64, f64)> {
    let x: Vec<f64> = points.iter().map(|(r, _)| (*r as f64).ln()).collect();
    let fit = fit_points(&x, points)?;
    Ok((PI * PI * fit.slope, PI * PI * fit.cov[0][0].sqrt()))
}

fn fit_points(x: &[f64], points: &[(usize, Estimate)]) -> Result<LineFit> {
    let y: Vec<f64> = points.iter().map(|(_, e)| e.mean).collect();
    let s: Vec<f64> = points.iter().map(|(_, e)| e.stderr).collect();
    stats::weighted_line_fit(x, &y, &s)
}

/// Result of fitting measured variances against a regressor.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceFit {
    pub regressor: Regressor,
    pub points: Vec<(usize, Estimate)>,
    pub line: LineFit,
    /// `pi^2` times the slope.
    pub a_hat: f64,
    /// Jackknife error of `a_hat` over batches, which accounts for the
    /// correlation between radii.
    pub err: f64,
}

struct VarianceRecord {
    chain: Chain,
    series: Vec<Vec<f64>>,
    pairs: Vec<f64>,
    densities: [Vec<f64>; 4],
}

impl VarianceRecord {
    fn advance(&mut self, radii: &[usize], target: usize) {
        let p = self.chain.params;
        let n_faces = (p.side * p.side) as f64;
        let n_black = n_faces / 2.0;
        while self.chain.sweeps_done < target {
            self.chain.sweep();
            if sample_slot(&p, self.chain.sweeps_done).is_some() {
                let snap = self.chain.state.heights();
                for (k, &r) in radii.iter().enumerate() {
                    let v = 0.5 * (snap.mean_sq_increment(r, 0) + snap.mean_sq_increment(r, 1));
                    self.series[k].push(v);
                }
                self.pairs.push(self.chain.state.pair_count() as f64 / n_faces);
                let counts = self.chain.state.type_counts();
                for r in 0..4 {
                    self.densities[r].push(counts[r] as f64 / n_black);
                }
            }
        }
    }
}

/// Several independent chains measuring `Var(h(f + R e) - h(f))`, averaged
/// over all faces and both axes, for a list of radii.
pub struct VarianceRun {
    params: MCParams,
    radii: Vec<usize>,
    records: Vec<VarianceRecord>,
}

impl VarianceRun {
    pub fn new(params: MCParams, radii: &[usize], chains: usize) -> Result<Self> {
        params.validate()?;
        if chains == 0 {
            return Err(DimerError::InvalidParameter("need at least one chain".into()));
        }
        if radii.is_empty() {
            return Err(DimerError::InvalidParameter("need at least one radius".into()));
        }
        for &r in radii {
            if r == 0 || 4 * r > params.side {
                return Err(DimerError::InvalidParameter(format!(
                    "radius {r} must lie in 1..={} for L = {}",
                    params.side / 4,
                    params.side
                )));
            }
        }
        let records = (0..chains)
            .map(|c| {
                Ok(VarianceRecord {
                    chain: Chain::new(params, c as u64)?,
                    series: vec![Vec::new(); radii.len()],
                    pairs: Vec::new(),
                    densities: Default::default(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(VarianceRun { params, radii: radii.to_vec(), records })
    }

    pub fn params(&self) -> &MCParams {
        &self.params
    }

    pub fn radii(&self) -> &[usize] {
        &self.radii
    }

    pub fn chains(&self) -> usize {
        self.records.len()
    }

    /// Sweeps completed by the slowest chain.
    pub fn sweeps_done(&self) -> usize {
        self.records.iter().map(|r| r.chain.sweeps_done).min().unwrap_or(0)
    }

    pub fn is_complete(&self) -> bool {
        self.sweeps_done() >= self.params.sweeps
    }

    /// Runs every chain `sweeps` further, stopping at the configured total.
    pub fn advance(&mut self, sweeps: usize, exec: Execution) {
        let target = (self.sweeps_done() + sweeps).min(self.params.sweeps);
        let radii = self.radii.clone();
        exec.for_each_mut(&mut self.records, |rec| rec.advance(&radii, target));
    }

    pub fn run_to_completion(&mut self, exec: Execution) {
        self.advance(self.params.sweeps, exec);
    }

    /// Samples of chain `c` at radius index `k`.
    pub fn series(&self, c: usize, k: usize) -> &[f64] {
        &self.records[c].series[k]
    }

    /// Density of flippable faces, per sample, for chain `c`.
    pub fn pair_density_series(&self, c: usize) -> &[f64] {
        &self.records[c].pairs
    }

    /// Sweep index at which sample `k` is taken.
    pub fn sample_sweep(&self, k: usize) -> usize {
        self.params.burn_in + (k + 1) * self.params.measurement_stride
    }

    pub fn sweep_stats(&self) -> SweepStats {
        let mut s = SweepStats::default();
        for r in &self.records {
            s.add(r.chain.stats);
        }
        s
    }

    pub fn estimates(&self) -> Result<Vec<(usize, Estimate)>> {
        self.radii
            .iter()
            .enumerate()
            .map(|(k, &r)| {
                let chains: Vec<&[f64]> = self.records.iter().map(|rec| rec.series[k].as_slice()).collect();
                Ok((r, stats::estimate_pooled(&chains, self.params.measurement_stride)?))
            })
            .collect()
    }

    pub fn pair_density(&self) -> Result<Estimate> {
        let chains: Vec<&[f64]> = self.records.iter().map(|rec| rec.pairs.as_slice()).collect();
        stats::estimate_pooled(&chains, self.params.measurement_stride)
    }

    /// Fraction of black sites using type `r`.
    pub fn type_density(&self, r: EdgeType) -> Result<Estimate> {
        let chains: Vec<&[f64]> = self.records.iter().map(|rec| rec.densities[r.index()].as_slice()).collect();
        stats::estimate_pooled(&chains, self.params.measurement_stride)
    }

    /// Fits the variances against `regressor`.
    pub fn fit(&self, regressor: Regressor) -> Result<VarianceFit> {
        if self.radii.len() < 2 {
            return Err(DimerError::InvalidParameter("a fit needs at least two radii".into()));
        }
        let points = self.estimates()?;
        let x = self
            .radii
            .iter()
            .map(|&r| regressor.eval(self.params.side, &self.params.weights, r))
            .collect::<Result<Vec<f64>>>()?;
        let line = fit_points(&x, &points)?;
        let sigma: Vec<f64> = points.iter().map(|(_, e)| e.stderr).collect();
        let nb = batches_per_chain(self.records.len());
        let mut batches: Vec<Vec<f64>> = Vec::new();
        for rec in &self.records {
            let per_r: Vec<Vec<f64>> = rec.series.iter().map(|s| stats::batch_means(s, nb)).collect();
            for b in 0..nb {
                batches.push(per_r.iter().map(|v| v[b]).collect());
            }
        }
        let (_, jk) = stats::jackknife(&batches, |m| {
            stats::weighted_line_fit(&x, m, &sigma).map(|f| f.slope).unwrap_or(f64::NAN)
        });
        Ok(VarianceFit { regressor, points, a_hat: PI * PI * line.slope, err: PI * PI * jk, line })
    }
}

/// `Var(h(f + R e1) - h(f))` with default chain count, averaged over both
/// axes.
pub fn estimate_height_variance(params: &MCParams, r: usize) -> Result<Estimate> {
    let mut run = VarianceRun::new(*params, &[r], DEFAULT_CHAINS)?;
    run.run_to_completion(Execution::default());
    Ok(run.estimates()?[0].1)
}

/// Two edges: type `r` at the black site displaced by the lattice vector
/// `x`, and type `rp` at the base site (the convention of
/// `FreeDimer::dimer_correlation`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgePair {
    pub x: Point,
    pub r: EdgeType,
    pub rp: EdgeType,
}

impl EdgePair {
    pub fn new(x: Point, r: EdgeType, rp: EdgeType) -> Self {
        EdgePair { x, r, rp }
    }
}

/// Translation-averaged truncated correlation of `pair` under an exact
/// ensemble: `mean_b (<1_e(b) 1_e'(b)> - <1_e(b)><1_e'(b)>)`.
pub fn exact_truncated_correlation(ens: &ExactEnsemble, pair: &EdgePair) -> f64 {
    let g = *ens.configs()[0].geometry();
    let d = black_to_physical(pair.x);
    let mut total = 0.0;
    for idx in 0..g.n_black() {
        let b = g.black_site(idx);
        let b2 = g.wrap([b[0] + d[0], b[1] + d[1]]);
        let both = ens.expect(|c| (c.type_at(b2) == pair.r && c.type_at(b) == pair.rp) as u8 as f64);
        let e1 = ens.expect(|c| (c.type_at(b) == pair.rp) as u8 as f64);
        let e2 = ens.expect(|c| (c.type_at(b2) == pair.r) as u8 as f64);
        total += both - e1 * e2;
    }
    total / g.n_black() as f64
}

/// Fraction of black sites using type `r`, under an exact ensemble.
pub fn exact_type_density(ens: &ExactEnsemble, r: EdgeType) -> f64 {
    ens.expect(|c| c.type_counts()[r.index()] as f64 / c.geometry().n_black() as f64)
}

struct CorrelationRecord {
    chain: Chain,
    densities: [Vec<f64>; 4],
    products: Vec<Vec<f64>>,
    // [batch][type * n_black + site] occupation sums
    occupation: Vec<Vec<f64>>,
    batch_sizes: Vec<usize>,
}

/// Chains measuring type densities and translation-averaged truncated edge
/// correlations.
pub struct CorrelationRun {
    params: MCParams,
    pairs: Vec<EdgePair>,
    records: Vec<CorrelationRecord>,
    n_batches: usize,
}

impl CorrelationRun {
    pub fn new(params: MCParams, pairs: &[EdgePair], chains: usize) -> Result<Self> {
        params.validate()?;
        if chains == 0 {
            return Err(DimerError::InvalidParameter("need at least one chain".into()));
        }
        let g = params.geometry();
        for p in pairs {
            let d = black_to_physical(p.x);
            if 4 * d[0].unsigned_abs().max(d[1].unsigned_abs()) as usize > params.side.max(4) {
                return Err(DimerError::InvalidParameter(format!(
                    "displacement {:?} too large for L = {}",
                    p.x, params.side
                )));
            }
        }
        let n_batches = batches_per_chain(chains);
        let records = (0..chains)
            .map(|c| {
                Ok(CorrelationRecord {
                    chain: Chain::new(params, c as u64)?,
                    densities: Default::default(),
                    products: vec![Vec::new(); pairs.len()],
                    occupation: vec![vec![0.0; 4 * g.n_black()]; n_batches],
                    batch_sizes: vec![0; n_batches],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CorrelationRun { params, pairs: pairs.to_vec(), records, n_batches })
    }

    pub fn pairs(&self) -> &[EdgePair] {
        &self.pairs
    }

    pub fn run_to_completion(&mut self, exec: Execution) {
        let pairs = self.pairs.clone();
        let nb = self.n_batches;
        exec.for_each_mut(&mut self.records, |rec| rec.run(&pairs, nb));
    }

    pub fn type_density(&self, r: EdgeType) -> Result<Estimate> {
        let chains: Vec<&[f64]> = self.records.iter().map(|rec| rec.densities[r.index()].as_slice()).collect();
        stats::estimate_pooled(&chains, self.params.measurement_stride)
    }

    /// Truncated correlation of `pairs()[k]` with a jackknife error.
    pub fn truncated_correlation(&self, k: usize) -> Result<Estimate> {
        let pair = self.pairs[k];
        let g = self.params.geometry();
        let nbk = g.n_black();
        let d = black_to_physical(pair.x);
        let partner: Vec<usize> = (0..nbk)
            .map(|idx| {
                let b = g.black_site(idx);
                g.black_index([b[0] + d[0], b[1] + d[1]])
            })
            .collect();
        let mut tau: f64 = 0.5;
        for rec in &self.records {
            let t = stats::tau_int(&rec.products[k]).ok_or_else(|| {
                DimerError::InsufficientSamples("autocorrelation window not resolved".into())
            })?;
            tau = tau.max(t);
        }
        let mut batches = Vec::new();
        for rec in &self.records {
            let prod = stats::batch_means(&rec.products[k], self.n_batches);
            if prod.len() < self.n_batches {
                return Err(DimerError::InsufficientSamples("fewer samples than batches".into()));
            }
            for b in 0..self.n_batches {
                if (rec.batch_sizes[b] as f64) < 2.0 * tau {
                    return Err(DimerError::InsufficientSamples(format!(
                        "batch of {} samples shorter than 2 tau = {:.1}",
                        rec.batch_sizes[b],
                        2.0 * tau
                    )));
                }
                let n = rec.batch_sizes[b] as f64;
                let mut v = Vec::with_capacity(1 + 2 * nbk);
                v.push(prod[b]);
                let occ = &rec.occupation[b];
                v.extend((0..nbk).map(|s| occ[pair.rp.index() * nbk + s] / n));
                v.extend((0..nbk).map(|s| occ[pair.r.index() * nbk + s] / n));
                batches.push(v);
            }
        }
        let (value, err) = stats::jackknife(&batches, |m| {
            let e1 = &m[1..1 + nbk];
            let e2 = &m[1 + nbk..];
            m[0] - (0..nbk).map(|s| e1[s] * e2[partner[s]]).sum::<f64>() / nbk as f64
        });
        Ok(Estimate {
            mean: value,
            stderr: err,
            tau_int: tau * self.params.measurement_stride as f64,
            n_samples: self.records.iter().map(|r| r.products[k].len()).sum(),
        })
    }
}

impl CorrelationRecord {
    fn run(&mut self, pairs: &[EdgePair], n_batches: usize) {
        let p = self.chain.params;
        let g = p.geometry();
        let nbk = g.n_black();
        // same blocks as `stats::batch_means`
        let batch_size = (p.measurements() / n_batches).max(1);
        let sites: Vec<(usize, usize)> =
            (0..nbk).map(|i| g.black_site(i)).map(|b| (b[0] as usize, b[1] as usize)).collect();
        let shifted: Vec<Vec<(usize, usize)>> = pairs
            .iter()
            .map(|pair| {
                let d = black_to_physical(pair.x);
                sites
                    .iter()
                    .map(|&(i, j)| {
                        let w = g.wrap([i as i64 + d[0], j as i64 + d[1]]);
                        (w[0] as usize, w[1] as usize)
                    })
                    .collect()
            })
            .collect();
        let mut types = vec![EdgeType::One; nbk];
        while self.chain.sweeps_done < p.sweeps {
            self.chain.sweep();
            let Some(k) = sample_slot(&p, self.chain.sweeps_done) else { continue };
            let batch = k / batch_size;
            for (s, &(i, j)) in sites.iter().enumerate() {
                types[s] = self.chain.state.type_at(i, j);
            }
            let counts = self.chain.state.type_counts();
            for r in 0..4 {
                self.densities[r].push(counts[r] as f64 / nbk as f64);
            }
            if batch < n_batches {
                let occ = &mut self.occupation[batch];
                for (s, t) in types.iter().enumerate() {
                    occ[t.index() * nbk + s] += 1.0;
                }
                self.batch_sizes[batch] += 1;
            }
            for (pi, pair) in pairs.iter().enumerate() {
                let hits = sites
                    .iter()
                    .zip(&shifted[pi])
                    .enumerate()
                    .filter(|&(s, (_, &(i2, j2)))| types[s] == pair.rp && self.chain.state.type_at(i2, j2) == pair.r)
                    .count();
                self.products[pi].push(hits as f64 / nbk as f64);
            }
        }
    }
}

/// Truncated correlation of one edge pair with default chain count.
pub fn estimate_dimer_correlation(params: &MCParams, x: Point, r: EdgeType, rp: EdgeType) -> Result<Estimate> {
    let mut run = CorrelationRun::new(*params, &[EdgePair::new(x, r, rp)], DEFAULT_CHAINS)?;
    run.run_to_completion(Execution::default());
    run.truncated_correlation(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regressor_grows_like_log() {
        let l = 256;
        let d = torus_regressor(l, 16) - torus_regressor(l, 8);
        assert!((d - 2f64.ln()).abs() < 0.02, "{d}");
        assert_eq!(torus_regressor(l, 0), 0.0);
    }

    #[test]
    fn sample_slots() {
        let mut p = MCParams::new(8, Weights::uniform(), 0.0, 100, 1);
        p.burn_in = 10;
        p.measurement_stride = 3;
        assert_eq!(sample_slot(&p, 10), None);
        assert_eq!(sample_slot(&p, 13), Some(0));
        assert_eq!(sample_slot(&p, 14), None);
        assert_eq!(sample_slot(&p, 16), Some(1));
        assert_eq!(p.measurements(), 30);
    }

    #[test]
    fn radius_guard() {
        let p = MCParams::new(16, Weights::uniform(), 0.0, 100, 1);
        assert!(VarianceRun::new(p, &[8], 1).is_err());
        assert!(VarianceRun::new(p, &[4], 1).is_ok());
    }

    #[test]
    fn variance_run_resumes_in_pieces() {
        let p = MCParams::new(16, Weights::uniform(), 0.1, 400, 3);
        let mut a = VarianceRun::new(p, &[2, 4], 2).unwrap();
        a.run_to_completion(Execution::Sequential);
        let mut b = VarianceRun::new(p, &[2, 4], 2).unwrap();
        while !b.is_complete() {
            b.advance(37, Execution::Parallel);
        }
        assert_eq!(a.series(1, 1), b.series(1, 1));
        assert_eq!(a.series(0, 0).len(), p.measurements());
    }

    #[test]
    fn log_fit_recovers_slope() {
        let pts: Vec<(usize, Estimate)> = [4usize, 8, 16, 32]
            .iter()
            .map(|&r| {
                let e = Estimate { mean: 0.3 + 0.9 / (PI * PI) * (r as f64).ln(), stderr: 0.01, tau_int: 1.0, n_samples: 100 };
                (r, e)
            })
            .collect();
        let (a, err) = fit_log_prefactor(&pts).unwrap();
        assert!((a - 0.9).abs() < 1e-12);
        // equal errors: sd(slope) = sigma / sqrt(sum (x - mean)^2)
        let x: Vec<f64> = [4f64, 8.0, 16.0, 32.0].iter().map(|r| r.ln()).collect();
        let m = x.iter().sum::<f64>() / 4.0;
        let sxx: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
        assert!((err - PI * PI * 0.01 / sxx.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn deterministic_point_does_not_poison_the_fit() {
        let mut pts: Vec<(usize, Estimate)> = [1usize, 2, 4, 8]
            .iter()
            .map(|&r| (r, Estimate { mean: 0.2 + 0.1 * (r as f64).ln(), stderr: 0.01, tau_int: 1.0, n_samples: 100 }))
            .collect();
        pts[0].1.stderr = 0.0;
        let (a, err) = fit_log_prefactor(&pts).unwrap();
        assert!((a - 0.1 * PI * PI).abs() < 1e-10 && err.is_finite());
    }
}
