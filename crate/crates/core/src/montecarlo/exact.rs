//! Brute-force Gibbs expectations over all matchings of a tiny torus.

use std::collections::{HashSet, VecDeque};

use crate::error::{DimerError, Result};
use crate::free::Weights;
use crate::lattice::{enumerate_matchings, winding, DimerConfig, TorusGeometry, ENUMERATION_LIMIT};

use super::chain::{flip, flippable_faces};

/// Largest side accepted by [`exact_gibbs`].
pub const GIBBS_LIMIT: usize = 4;

/// Which configurations the exact measure is supported on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Support {
    /// Every matching of the torus.
    Full,
    /// Matchings with the same windings as the given one.
    Sector(DimerConfig),
    /// Matchings reachable from the given one by face flips; this is what a
    /// flip chain started there actually samples.
    FlipComponent(DimerConfig),
}

/// A finite ensemble with its normalised Gibbs weights.
#[derive(Clone, Debug)]
pub struct ExactEnsemble {
    configs: Vec<DimerConfig>,
    probs: Vec<f64>,
    log_z: f64,
}

/// Matchings reachable from `start` by flips, in breadth-first order.
pub fn flip_component(start: &DimerConfig) -> Vec<DimerConfig> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut queue = VecDeque::from([start.clone()]);
    seen.insert(start.clone());
    while let Some(c) = queue.pop_front() {
        for f in flippable_faces(&c) {
            let next = flip(&c, f).expect("face is flippable");
            if seen.insert(next.clone()) {
                queue.push_back(next);
            }
        }
        out.push(c);
    }
    out
}

impl ExactEnsemble {
    pub fn new(side: usize, w: &Weights, lambda: f64, support: &Support) -> Result<Self> {
        if side > GIBBS_LIMIT {
            return Err(DimerError::SizeLimitExceeded { side, limit: GIBBS_LIMIT });
        }
        debug_assert!(GIBBS_LIMIT <= ENUMERATION_LIMIT);
        let g = TorusGeometry::new(side)?;
        let configs = match support {
            Support::Full => enumerate_matchings(&g)?,
            Support::Sector(c) => {
                let target = winding(c);
                enumerate_matchings(&g)?.into_iter().filter(|m| winding(m) == target).collect()
            }
            Support::FlipComponent(c) => {
                if c.geometry().side() != side {
                    return Err(DimerError::InvalidParameter("start configuration has the wrong size".into()));
                }
                flip_component(c)
            }
        };
        let t = w.all();
        let logs: Vec<f64> = configs
            .iter()
            .map(|c| c.log_weight(&t) + lambda * flippable_faces(c).len() as f64)
            .collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = raw.iter().sum();
        Ok(ExactEnsemble { configs, probs: raw.iter().map(|r| r / z).collect(), log_z: m + z.ln() })
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn configs(&self) -> &[DimerConfig] {
        &self.configs
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_partition_function(&self) -> f64 {
        self.log_z
    }

    pub fn expect<F: Fn(&DimerConfig) -> f64>(&self, obs: F) -> f64 {
        self.configs.iter().zip(&self.probs).map(|(c, p)| p * obs(c)).sum()
    }
}

/// Exact expectation of `obs` under the interacting measure on the full
/// `L x L` torus.
pub fn exact_gibbs<F: Fn(&DimerConfig) -> f64>(side: usize, w: &Weights, lambda: f64, obs: F) -> Result<f64> {
    Ok(ExactEnsemble::new(side, w, lambda, &Support::Full)?.expect(obs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::EdgeType;

    #[test]
    fn size_guard() {
        let r = exact_gibbs(6, &Weights::uniform(), 0.0, |_| 1.0);
        assert!(matches!(r, Err(DimerError::SizeLimitExceeded { side: 6, limit: 4 })));
    }

    #[test]
    fn uniform_free_measure_is_counting() {
        let e = ExactEnsemble::new(4, &Weights::uniform(), 0.0, &Support::Full).unwrap();
        assert_eq!(e.len(), 272);
        assert!((e.log_partition_function() - 272f64.ln()).abs() < 1e-12);
        let e2 = ExactEnsemble::new(2, &Weights::uniform(), 0.0, &Support::Full).unwrap();
        assert_eq!(e2.len(), 8);
    }

    #[test]
    fn type_densities_sum_to_one() {
        let w = Weights::new(0.8, 1.1, 1.2).unwrap();
        let d: f64 = EdgeType::ALL
            .iter()
            .map(|&r| {
                exact_gibbs(4, &w, 0.2, |c| c.type_counts()[r.index()] as f64 / 8.0).unwrap()
            })
            .sum();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn components_refine_sectors() {
        let g = TorusGeometry::new(4).unwrap();
        let start = DimerConfig::columnar(g);
        let comp = flip_component(&start);
        let sector = ExactEnsemble::new(4, &Weights::uniform(), 0.0, &Support::Sector(start.clone())).unwrap();
        assert!(comp.len() <= sector.len());
        let w0 = winding(&start);
        assert!(comp.iter().all(|c| winding(c) == w0));
    }

    #[test]
    fn continuous_in_lambda() {
        let w = Weights::new(0.8, 1.1, 1.2).unwrap();
        let obs = |c: &DimerConfig| c.type_counts()[0] as f64;
        let a = exact_gibbs(4, &w, 0.0, obs).unwrap();
        let b = exact_gibbs(4, &w, 1e-6, obs).unwrap();
        assert!((a - b).abs() <= 1e-5 * a.abs());
    }
}
