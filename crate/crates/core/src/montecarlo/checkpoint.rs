//! Plain-text checkpoints of a [`VarianceRun`] so long runs can resume.
//!
//! Layout: a header line, `key=value` lines for the parameters, then one
//! block per chain. Floats use Rust's shortest round-trip formatting, so a
//! resumed run continues bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{DimerError, Result};
use crate::free::Weights;

use super::chain::{chain_rng, Chain, ChainState, MCParams, SweepStats};
use super::{VarianceRecord, VarianceRun};

const HEADER: &str = "# dimers variance checkpoint v2";

impl MCParams {
    /// `key=value` pairs in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("side", self.side.to_string()),
            ("t1", self.weights.t1.to_string()),
            ("t2", self.weights.t2.to_string()),
            ("t3", self.weights.t3.to_string()),
            ("lambda", self.lambda.to_string()),
            ("sweeps", self.sweeps.to_string()),
            ("burn_in", self.burn_in.to_string()),
            ("seed", self.seed.to_string()),
            ("stride", self.measurement_stride.to_string()),
        ]
    }

    pub fn from_pairs(map: &BTreeMap<String, String>) -> Result<Self> {
        let p = MCParams {
            side: field(map, "side")?,
            weights: Weights::new(field(map, "t1")?, field(map, "t2")?, field(map, "t3")?)?,
            lambda: field(map, "lambda")?,
            sweeps: field(map, "sweeps")?,
            burn_in: field(map, "burn_in")?,
            seed: field(map, "seed")?,
            measurement_stride: field(map, "stride")?,
        };
        p.validate()?;
        Ok(p)
    }
}

fn field<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let v = map.get(key).ok_or_else(|| DimerError::Parse(format!("missing key {key}")))?;
    v.parse().map_err(|_| DimerError::Parse(format!("bad value for {key}: {v:?}")))
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn split<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| x.parse().map_err(|_| DimerError::Parse(format!("bad list entry {x:?}"))))
        .collect()
}

impl VarianceRun {
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{HEADER}").unwrap();
        for (k, v) in self.params.to_pairs() {
            writeln!(out, "{k}={v}").unwrap();
        }
        writeln!(out, "radii={}", join(&self.radii)).unwrap();
        writeln!(out, "chains={}", self.records.len()).unwrap();
        for (c, rec) in self.records.iter().enumerate() {
            let ch = &rec.chain;
            writeln!(out, "[chain {c}]").unwrap();
            writeln!(out, "sweeps_done={}", ch.sweeps_done).unwrap();
            writeln!(out, "proposed={}", ch.stats.proposed).unwrap();
            writeln!(out, "flippable={}", ch.stats.flippable).unwrap();
            writeln!(out, "accepted={}", ch.stats.accepted).unwrap();
            writeln!(out, "word_pos={}", ch.rng.get_word_pos()).unwrap();
            let partner: String = ch.state.raw_partner().iter().map(|d| char::from(b'0' + d)).collect();
            writeln!(out, "partner={partner}").unwrap();
            for (k, s) in rec.series.iter().enumerate() {
                writeln!(out, "series{k}={}", join(s)).unwrap();
            }
            writeln!(out, "pairs={}", join(&rec.pairs)).unwrap();
            for (r, d) in rec.densities.iter().enumerate() {
                writeln!(out, "density{r}={}", join(d)).unwrap();
            }
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(DimerError::Parse("not a variance checkpoint".into()));
        }
        let mut global = BTreeMap::new();
        let mut blocks: Vec<BTreeMap<String, String>> = Vec::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with("[chain ") {
                blocks.push(BTreeMap::new());
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| DimerError::Parse(format!("bad line {line:?}")))?;
            let target = blocks.last_mut().unwrap_or(&mut global);
            target.insert(k.to_string(), v.to_string());
        }
        let params = MCParams::from_pairs(&global)?;
        let radii: Vec<usize> = split(global.get("radii").map(String::as_str).unwrap_or(""))?;
        let chains: usize = field(&global, "chains")?;
        if blocks.len() != chains {
            return Err(DimerError::Parse(format!("expected {chains} chain blocks, found {}", blocks.len())));
        }
        let mut run = VarianceRun::new(params, &radii, chains)?;
        for (c, (rec, b)) in run.records.iter_mut().zip(&blocks).enumerate() {
            let partner: Vec<u8> = b
                .get("partner")
                .ok_or_else(|| DimerError::Parse("missing partner".into()))?
                .bytes()
                .map(|x| x.wrapping_sub(b'0'))
                .collect();
            let state = ChainState::from_partner(params.side, partner)?;
            let mut rng = chain_rng(params.seed, c as u64);
            rng.set_word_pos(field(b, "word_pos")?);
            let stats = SweepStats {
                proposed: field(b, "proposed")?,
                flippable: field(b, "flippable")?,
                accepted: field(b, "accepted")?,
            };
            let sweeps_done: usize = field(b, "sweeps_done")?;
            let series = (0..radii.len())
                .map(|k| split(b.get(&format!("series{k}")).map(String::as_str).unwrap_or("")))
                .collect::<Result<Vec<Vec<f64>>>>()?;
            let pairs: Vec<f64> = split(b.get("pairs").map(String::as_str).unwrap_or(""))?;
            let mut densities: [Vec<f64>; 4] = Default::default();
            for (r, d) in densities.iter_mut().enumerate() {
                *d = split(b.get(&format!("density{r}")).map(String::as_str).unwrap_or(""))?;
            }
            let expected = sweeps_done.saturating_sub(params.burn_in) / params.measurement_stride;
            if pairs.len() != expected
                || series.iter().any(|s| s.len() != expected)
                || densities.iter().any(|d| d.len() != expected)
            {
                return Err(DimerError::Parse(format!("chain {c}: sample count does not match sweeps done")));
            }
            *rec = VarianceRecord {
                chain: Chain::restore(params, state, rng, sweeps_done, stats),
                series,
                pairs,
                densities,
            };
        }
        Ok(run)
    }
}
