//! `key=value` run configuration. Every field has a textual form, and
//! `RunConfig::parse(&c.to_text()) == c` for any valid `c`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use dimer_core::free::Weights;
use dimer_core::montecarlo::Regressor;
use dimer_core::par::Execution;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    FreeCorr,
    CoeffA,
    HaldaneCheck,
    Mc,
    VarianceFit,
    Enumerate,
}

impl Command {
    pub const ALL: [Command; 6] =
        [Command::FreeCorr, Command::CoeffA, Command::HaldaneCheck, Command::Mc, Command::VarianceFit, Command::Enumerate];

    pub fn name(self) -> &'static str {
        match self {
            Command::FreeCorr => "free-corr",
            Command::CoeffA => "coeff-a",
            Command::HaldaneCheck => "haldane-check",
            Command::Mc => "mc",
            Command::VarianceFit => "variance-fit",
            Command::Enumerate => "enumerate",
        }
    }

    fn parse(s: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SupportKind {
    Full,
    Sector,
    Component,
}

impl SupportKind {
    pub fn name(self) -> &'static str {
        match self {
            SupportKind::Full => "full",
            SupportKind::Sector => "sector",
            SupportKind::Component => "component",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub weights: Weights,
    pub lambda: f64,
    pub side: usize,
    /// `None` means the command's default list.
    pub radii: Option<Vec<usize>>,
    pub xmax: i64,
    pub sweeps: usize,
    /// `None` means a tenth of the sweeps.
    pub burn_in: Option<usize>,
    pub seed: u64,
    pub chains: usize,
    pub stride: usize,
    pub checkpoint_every: usize,
    pub resume: bool,
    pub regressors: Vec<Regressor>,
    /// 0 means the single triple `weights`.
    pub sweep_n: usize,
    pub sweep_lo: f64,
    pub sweep_hi: f64,
    pub sweep_seed: u64,
    pub sweep_file: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub support: SupportKind,
    pub write_configs: bool,
    pub residual_tol: f64,
    pub haldane_tol: f64,
    pub quad_tol: f64,
    pub exec: Execution,
    pub out: PathBuf,
}

pub const DEFAULT_OUT: &str = "dimers-out";

const KEYS: [&str; 28] = [
    "command",
    "t1",
    "t2",
    "t3",
    "lambda",
    "side",
    "radii",
    "xmax",
    "sweeps",
    "burn_in",
    "seed",
    "chains",
    "stride",
    "checkpoint_every",
    "resume",
    "regressors",
    "sweep_n",
    "sweep_lo",
    "sweep_hi",
    "sweep_seed",
    "sweep_file",
    "input",
    "support",
    "write_configs",
    "residual_tol",
    "haldane_tol",
    "quad_tol",
    "exec",
];

fn bad(key: &str, value: &str) -> CliError {
    CliError::Usage(format!("bad value for {key}: {value:?}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| bad(key, value))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value.split(',').map(|x| num(key, x)).collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn opt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn defaults(command: Command, out: PathBuf) -> Self {
        let (side, sweeps) = match command {
            Command::Enumerate => (4, 10_000),
            _ => (32, 10_000),
        };
        RunConfig {
            command,
            weights: Weights::uniform(),
            lambda: 0.0,
            side,
            radii: None,
            xmax: 3,
            sweeps,
            burn_in: None,
            seed: 1,
            chains: 4,
            stride: 1,
            checkpoint_every: 1000,
            resume: false,
            regressors: Regressor::ALL.to_vec(),
            sweep_n: 20,
            sweep_lo: 0.5,
            sweep_hi: 1.8,
            sweep_seed: 99,
            sweep_file: None,
            input: None,
            support: SupportKind::Component,
            write_configs: false,
            residual_tol: 1e-8,
            haldane_tol: 1e-6,
            quad_tol: 1e-12,
            exec: Execution::Parallel,
            out,
        }
    }

    /// Sets one key. Weights are validated as a triple in `validate`, so
    /// `t1`, `t2`, `t3` may be set in any order.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key {
            "command" => self.command = Command::parse(v).ok_or_else(|| bad(key, v))?,
            "t1" => self.weights.t1 = num(key, v)?,
            "t2" => self.weights.t2 = num(key, v)?,
            "t3" => self.weights.t3 = num(key, v)?,
            "weights" => {
                let t: Vec<f64> = list(key, v)?;
                if t.len() != 3 {
                    return Err(bad(key, v));
                }
                (self.weights.t1, self.weights.t2, self.weights.t3) = (t[0], t[1], t[2]);
            }
            "lambda" => self.lambda = num(key, v)?,
            "side" => self.side = num(key, v)?,
            "radii" => self.radii = if v == "auto" { None } else { Some(list(key, v)?) },
            "xmax" => self.xmax = num(key, v)?,
            "sweeps" => self.sweeps = num(key, v)?,
            "burn_in" => self.burn_in = if v == "auto" { None } else { Some(num(key, v)?) },
            "seed" => self.seed = num(key, v)?,
            "chains" => self.chains = num(key, v)?,
            "stride" => self.stride = num(key, v)?,
            "checkpoint_every" => self.checkpoint_every = num(key, v)?,
            "resume" => self.resume = num(key, v)?,
            "regressors" => {
                self.regressors = v
                    .split(',')
                    .map(|s| Regressor::parse(s.trim()).map_err(|_| bad(key, v)))
                    .collect::<Result<_, _>>()?
            }
            "sweep_n" => self.sweep_n = num(key, v)?,
            "sweep_lo" => self.sweep_lo = num(key, v)?,
            "sweep_hi" => self.sweep_hi = num(key, v)?,
            "sweep_seed" => self.sweep_seed = num(key, v)?,
            "sweep_file" => self.sweep_file = (!v.is_empty()).then(|| PathBuf::from(v)),
            "input" => self.input = (!v.is_empty()).then(|| PathBuf::from(v)),
            "support" => {
                self.support = match v {
                    "full" => SupportKind::Full,
                    "sector" => SupportKind::Sector,
                    "component" => SupportKind::Component,
                    _ => return Err(bad(key, v)),
                }
            }
            "write_configs" => self.write_configs = num(key, v)?,
            "residual_tol" => self.residual_tol = num(key, v)?,
            "haldane_tol" => self.haldane_tol = num(key, v)?,
            "quad_tol" => self.quad_tol = num(key, v)?,
            "exec" => {
                self.exec = match v {
                    "parallel" => Execution::Parallel,
                    "sequential" => Execution::Sequential,
                    _ => return Err(bad(key, v)),
                }
            }
            "out" => self.out = PathBuf::from(v),
            _ => return Err(CliError::Usage(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "command" => self.command.name().into(),
            "t1" => self.weights.t1.to_string(),
            "t2" => self.weights.t2.to_string(),
            "t3" => self.weights.t3.to_string(),
            "lambda" => self.lambda.to_string(),
            "side" => self.side.to_string(),
            "radii" => self.radii.as_ref().map(|r| join(r)).unwrap_or_else(|| "auto".into()),
            "xmax" => self.xmax.to_string(),
            "sweeps" => self.sweeps.to_string(),
            "burn_in" => self.burn_in.map(|b| b.to_string()).unwrap_or_else(|| "auto".into()),
            "seed" => self.seed.to_string(),
            "chains" => self.chains.to_string(),
            "stride" => self.stride.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "resume" => self.resume.to_string(),
            "regressors" => self.regressors.iter().map(|r| r.name()).collect::<Vec<_>>().join(","),
            "sweep_n" => self.sweep_n.to_string(),
            "sweep_lo" => self.sweep_lo.to_string(),
            "sweep_hi" => self.sweep_hi.to_string(),
            "sweep_seed" => self.sweep_seed.to_string(),
            "sweep_file" => opt_path(&self.sweep_file),
            "input" => opt_path(&self.input),
            "support" => self.support.name().into(),
            "write_configs" => self.write_configs.to_string(),
            "residual_tol" => self.residual_tol.to_string(),
            "haldane_tol" => self.haldane_tol.to_string(),
            "quad_tol" => self.quad_tol.to_string(),
            "exec" => match self.exec {
                Execution::Parallel => "parallel".into(),
                Execution::Sequential => "sequential".into(),
            },
            "out" => self.out.display().to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in KEYS.iter().chain(&["out"]) {
            writeln!(s, "{k}={}", self.get(k)).unwrap();
        }
        s
    }

    /// Splits config text into `(key, value)` pairs, skipping blank lines
    /// and `#` comments.
    pub fn pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
        let mut out = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    /// Parses a full config. A `command` key is required.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let pairs = Self::pairs(text)?;
        let map: BTreeMap<_, _> = pairs.iter().cloned().collect();
        let command = map
            .get("command")
            .and_then(|c| Command::parse(c))
            .ok_or_else(|| CliError::Usage("config needs a valid command key".into()))?;
        let mut c = RunConfig::defaults(command, PathBuf::from(DEFAULT_OUT));
        for (k, v) in &pairs {
            c.set(k, v)?;
        }
        Ok(c)
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.sweeps / 10)
    }

    pub fn radii_or_default(&self) -> Vec<usize> {
        if let Some(r) = &self.radii {
            return r.clone();
        }
        match self.command {
            Command::FreeCorr => vec![8, 16, 32, 64, 128],
            // R = 1 has a deterministic variance on this lattice
            _ => {
                let r: Vec<usize> = (1..).map(|k| 1usize << k).take_while(|r| 4 * r <= self.side).collect();
                if r.is_empty() {
                    vec![1]
                } else {
                    r
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        Weights::new(self.weights.t1, self.weights.t2, self.weights.t3).map_err(|e| CliError::Usage(e.to_string()))?;
        if !self.lambda.is_finite() {
            return usage("lambda must be finite".into());
        }
        for (name, v) in [
            ("residual_tol", self.residual_tol),
            ("haldane_tol", self.haldane_tol),
            ("quad_tol", self.quad_tol),
        ] {
            if !(v > 0.0) {
                return usage(format!("{name} must be positive"));
            }
        }
        let needs_side = matches!(self.command, Command::Mc | Command::VarianceFit | Command::Enumerate);
        if needs_side && (self.side < 2 || self.side % 2 != 0) {
            return usage(format!("side must be even and at least 2, got {}", self.side));
        }
        if self.radii_or_default().iter().any(|&r| r == 0) {
            return usage("radii must be positive".into());
        }
        match self.command {
            Command::FreeCorr if self.xmax < 0 => return usage("xmax must be non-negative".into()),
            Command::Mc => {
                if self.sweeps <= self.burn_in() {
                    return usage(format!("sweeps ({}) must exceed burn_in ({})", self.sweeps, self.burn_in()));
                }
                if self.chains == 0 || self.stride == 0 || self.checkpoint_every == 0 {
                    return usage("chains, stride and checkpoint_every must be positive".into());
                }
                if self.radii_or_default().is_empty() {
                    return usage(format!("no radius fits on L = {}", self.side));
                }
            }
            Command::HaldaneCheck => {
                if self.sweep_n > 0 && !(0.0 < self.sweep_lo && self.sweep_lo < self.sweep_hi) {
                    return usage("need 0 < sweep_lo < sweep_hi".into());
                }
            }
            Command::VarianceFit if self.regressors.is_empty() => return usage("no regressors".into()),
            _ => {}
        }
        Ok(())
    }
}
