//! Time-series statistics for Markov chains: integrated autocorrelation
//! times, batch means, jackknife over batches, and weighted linear fits.

use std::fmt;

use crate::error::{DimerError, Result};

/// Minimum number of batches used for error bars.
pub const MIN_BATCHES: usize = 50;
/// Sokal window constant.
pub const WINDOW_C: f64 = 6.0;

/// A Monte Carlo estimate. `tau_int` is measured in sweeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub tau_int: f64,
    pub n_samples: usize,
}

impl Estimate {
    /// Deviation from `target` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.stderr > 0.0 {
            (self.mean - target) / self.stderr
        } else if self.mean == target {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        self.z_score(target).abs() <= sigmas
    }
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} ± {:.6} (tau {:.1}, n {})", self.mean, self.stderr, self.tau_int, self.n_samples)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Normalised autocorrelation function up to lag `max_lag`.
pub fn autocorrelation(xs: &[f64], max_lag: usize) -> Vec<f64> {
    let n = xs.len();
    let m = mean(xs);
    let c0: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        let mut rho = vec![0.0; max_lag + 1];
        rho[0] = 1.0;
        return rho;
    }
    (0..=max_lag.min(n - 1))
        .map(|t| {
            let c: f64 = (0..n - t).map(|i| (xs[i] - m) * (xs[i + t] - m)).sum::<f64>() / (n - t) as f64;
            c / c0
        })
        .collect()
}

/// Integrated autocorrelation time in samples, `1/2 + sum rho(t)`, with the
/// self-consistent window `M >= c tau(M)`. `None` if no window fits in a
/// quarter of the series.
pub fn tau_int(xs: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 16 {
        return None;
    }
    let m = mean(xs);
    let d: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let c0 = d.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return Some(0.5);
    }
    let mut tau = 0.5;
    for t in 1..=n / 4 {
        let c = d[..n - t].iter().zip(&d[t..]).map(|(a, b)| a * b).sum::<f64>() / (n - t) as f64;
        tau += c / c0;
        if t as f64 >= WINDOW_C * tau {
            return Some(tau.max(0.5));
        }
    }
    None
}

/// Means of `n_batches` consecutive equal blocks (a trailing remainder is
/// dropped).
pub fn batch_means(xs: &[f64], n_batches: usize) -> Vec<f64> {
    let size = xs.len() / n_batches;
    if size == 0 {
        return Vec::new();
    }
    (0..n_batches).map(|b| mean(&xs[b * size..(b + 1) * size])).collect()
}

/// Standard error of the mean from independent batch means.
pub fn stderr_of_batches(batches: &[f64]) -> f64 {
    let b = batches.len() as f64;
    let m = mean(batches);
    let var = batches.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

/// Estimate of the mean of one chain's series. `stride` is the number of
/// sweeps between samples.
pub fn estimate_series(xs: &[f64], stride: usize) -> Result<Estimate> {
    estimate_pooled(&[xs], stride)
}

/// Estimate from several independent chains: each chain is cut into the same
/// number of batches and all batches are pooled. The autocorrelation time is
/// the largest over chains.
pub fn estimate_pooled(chains: &[&[f64]], stride: usize) -> Result<Estimate> {
    let n_total: usize = chains.iter().map(|c| c.len()).sum();
    if chains.is_empty() || n_total == 0 {
        return Err(DimerError::InsufficientSamples("no samples".into()));
    }
    let mut tau: f64 = 0.5;
    for c in chains {
        let t = tau_int(c).ok_or_else(|| {
            DimerError::InsufficientSamples(format!(
                "autocorrelation window not resolved with {} samples",
                c.len()
            ))
        })?;
        tau = tau.max(t);
    }
    let per_chain = MIN_BATCHES.div_ceil(chains.len());
    let mut batches = Vec::new();
    for c in chains {
        if c.len() / per_chain < (2.0 * tau).ceil() as usize {
            return Err(DimerError::InsufficientSamples(format!(
                "{} samples per chain cannot fill {per_chain} batches of 2 tau = {:.1}",
                c.len(),
                2.0 * tau
            )));
        }
        batches.extend(batch_means(c, per_chain));
    }
    let all: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    let mean_all = mean(&all);
    let var = all.iter().map(|x| (x - mean_all) * (x - mean_all)).sum::<f64>() / n_total as f64;
    let naive = (2.0 * tau * var / n_total as f64).sqrt();
    Ok(Estimate {
        mean: mean_all,
        stderr: stderr_of_batches(&batches).max(naive),
        tau_int: tau * stride as f64,
        n_samples: n_total,
    })
}

/// Delete-one jackknife of a derived quantity. `batches[b]` holds the batch
/// means of every input series for batch `b`; `f` maps a vector of means to
/// the derived value. Returns `(value at full means, jackknife error)`.
pub fn jackknife<F>(batches: &[Vec<f64>], f: F) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let nb = batches.len();
    let dim = batches[0].len();
    let mut total = vec![0.0; dim];
    for b in batches {
        for (t, x) in total.iter_mut().zip(b) {
            *t += x;
        }
    }
    let full: Vec<f64> = total.iter().map(|t| t / nb as f64).collect();
    let value = f(&full);
    let leave_out: Vec<f64> = batches
        .iter()
        .map(|b| {
            let m: Vec<f64> = total.iter().zip(b).map(|(t, x)| (t - x) / (nb - 1) as f64).collect();
            f(&m)
        })
        .collect();
    let lm = mean(&leave_out);
    let var = leave_out.iter().map(|x| (x - lm) * (x - lm)).sum::<f64>() * (nb - 1) as f64 / nb as f64;
    (value, var.sqrt())
}

/// Result of a weighted straight-line fit `y = intercept + slope x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Covariance matrix `[[var(slope), cov], [cov, var(intercept)]]`.
    pub cov: [[f64; 2]; 2],
    pub chi2: f64,
    pub dof: usize,
}

/// Weighted least squares with weights `1/sigma^2`. Zero errors fall back to
/// unit weights.
pub fn weighted_line_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n || sigma.len() != n {
        return Err(DimerError::InvalidParameter("line fit needs at least two matching points".into()));
    }
    let unit = sigma.iter().any(|s| !(*s > 0.0));
    let w: Vec<f64> = sigma.iter().map(|s| if unit { 1.0 } else { 1.0 / (s * s) }).collect();
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        s += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
        sxx += w[i] * x[i] * x[i];
        sxy += w[i] * x[i] * y[i];
    }
    let det = s * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return Err(DimerError::InvalidParameter("degenerate abscissae in line fit".into()));
    }
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let chi2 = (0..n).map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2)).sum();
    Ok(LineFit {
        slope,
        intercept,
        cov: [[s / det, -sx / det], [-sx / det, sxx / det]],
        chi2,
        dof: n - 2,
    })
}

/// Unweighted slope, used inside jackknife resampling.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}
