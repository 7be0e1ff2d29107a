//! `dimers`: batch front-end for the dimer engines.
//!
//! Exit codes: 0 success, 1 failed scientific check, 2 usage error,
//! 3 insufficient samples.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dimer_cli::commands;
use dimer_cli::config::{Command, RunConfig, DEFAULT_OUT};
use dimer_cli::error::CliError;

#[derive(Parser)]
#[command(name = "dimers", version, about = "Interacting dimers: exact free model, first-order theory, Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Free-dimer truncated correlations and height variances.
    #[command(after_help = "Outputs:\n  free_corr.csv     x1,x2,r,rp,corr (type r at lattice x, type rp at the origin)\n  free_var.csv      R,var\n  free_var.dat      same, gnuplot columns\n  free_var_fit.csv  slope,slope_times_pi2 (fit of var against log R)")]
    FreeCorr(Common),
    /// First-order coefficient a, the stiffness A1 and the exponent shift nu1.
    #[command(after_help = "Outputs:\n  coeff_a.csv  t1,t2,t3,a,a_first_order,nu1,tilt,lambda,one_plus_a_lambda")]
    CoeffA(Common),
    /// Checks the amplitude/exponent identity on one triple or a sweep.
    #[command(after_help = "Triples: sweep_n random ones (default), sweep_n=0 for the given weights, or sweep_file=<csv of t1,t2,t3>.\nOutputs:\n  haldane.csv  t1,t2,t3,a,a_first_order,nu1,bracket_residual,arc_residual,status\nExit 1 names every triple that fails.")]
    HaldaneCheck(Common),
    /// Metropolis run measuring height variances, with checkpoints.
    #[command(after_help = "Outputs:\n  samples.csv     R,var,stderr,tau_int,n_samples\n  variance.dat    R var stderr (gnuplot)\n  densities.csv   r,mean,stderr,tau_int,n_samples,exact,z (exact for L <= 4, on the flip component of the columnar state)\n  fit.csv         regressor,a_hat,err,chi2,dof,first_order_target\n  sweeps.csv      chains,sweeps,proposed,flippable,accepted\n  checkpoint.txt  resumable state, written every checkpoint_every sweeps (resume with --resume)\nExit 3 on insufficient samples; partial outputs are kept.")]
    Mc(Common),
    /// Refits a samples.csv against the chosen regressors.
    #[command(after_help = "Input: input=<samples.csv> (default <out>/samples.csv) with columns R,var,stderr.\nOutputs:\n  variance_fit.csv  regressor,a_hat,err,chi2,dof,intercept")]
    VarianceFit(Common),
    /// Exhaustive enumeration on a small torus.
    #[command(after_help = "Outputs:\n  enumerate.csv            side,support,count,log_z,z_determinants\n  enumerate_densities.csv  r,density\n  configs.txt              one configuration per line (write_configs=true)")]
    Enumerate(Common),
}

/// Options shared by every subcommand. Precedence: flags, then `--set`,
/// then the config file, then `DIMERS_OUT_DIR` for the output directory.
#[derive(Args)]
struct Common {
    /// key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. --set sweeps=20000 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// t1,t2,t3
    #[arg(long)]
    weights: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    /// Torus side L.
    #[arg(long)]
    side: Option<String>,
    /// Comma-separated radii, or "auto".
    #[arg(long)]
    radii: Option<String>,
    #[arg(long)]
    sweeps: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    chains: Option<String>,
    /// Resume from <out>/checkpoint.txt.
    #[arg(long)]
    resume: bool,
    /// Output directory.
    #[arg(long, env = "DIMERS_OUT_DIR")]
    out: Option<PathBuf>,
}

fn build_config(command: Command, c: &Common) -> Result<RunConfig, CliError> {
    let env_out = std::env::var_os("DIMERS_OUT_DIR").map(PathBuf::from);
    let mut cfg = RunConfig::defaults(command, env_out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)));
    if let Some(path) = &c.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        for (k, v) in RunConfig::pairs(&text)? {
            cfg.set(&k, &v)?;
        }
    }
    // the subcommand on the command line wins over a `command` key, so a
    // manifest can be fed to another subcommand
    cfg.command = command;
    for kv in &c.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    let flags = [
        ("weights", &c.weights),
        ("lambda", &c.lambda),
        ("side", &c.side),
        ("radii", &c.radii),
        ("sweeps", &c.sweeps),
        ("seed", &c.seed),
        ("chains", &c.chains),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    if c.resume {
        cfg.resume = true;
    }
    // clap fills `out` from the environment too; only an explicit value
    // should beat the config file
    if let Some(o) = &c.out {
        if env_out.as_ref() != Some(o) {
            cfg.out = o.clone();
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (command, common) = match &cli.command {
        Sub::FreeCorr(c) => (Command::FreeCorr, c),
        Sub::CoeffA(c) => (Command::CoeffA, c),
        Sub::HaldaneCheck(c) => (Command::HaldaneCheck, c),
        Sub::Mc(c) => (Command::Mc, c),
        Sub::VarianceFit(c) => (Command::VarianceFit, c),
        Sub::Enumerate(c) => (Command::Enumerate, c),
    };
    let cfg = build_config(command, common)?;
    match command {
        Command::FreeCorr => commands::free_corr(&cfg),
        Command::CoeffA => commands::coeff_a(&cfg),
        Command::HaldaneCheck => commands::haldane_check(&cfg),
        Command::Mc => commands::mc(&cfg),
        Command::VarianceFit => commands::variance_fit(&cfg),
        Command::Enumerate => commands::enumerate(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dimers: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
