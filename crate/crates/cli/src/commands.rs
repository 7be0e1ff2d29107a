use std::f64::consts::PI;
use std::fs;

use dimer_core::free::{torus_partition_function, FreeDimer, Weights};
use dimer_core::lattice::{enumerate_matchings, DimerConfig, EdgeType, TorusGeometry};
use dimer_core::montecarlo::stats::{ols_slope, weighted_line_fit};
use dimer_core::montecarlo::{
    exact_type_density, interaction_count, ExactEnsemble, MCParams, PlaquetteConvention, Support,
    VarianceRun,
};
use dimer_core::perturbation::{sample_generic_weights, FirstOrder, HaldaneRow};
use dimer_core::quadrature::QuadConfig;
use dimer_core::DimerError;

use crate::config::{RunConfig, SupportKind};
use crate::error::CliError;
use crate::output::{f, Output};

fn type_name(r: EdgeType) -> String {
    r.number().to_string()
}

pub fn free_corr(cfg: &RunConfig) -> Result<(), CliError> {
    let mut out = Output::create(&cfg.out)?;
    let fd = FreeDimer::with_quadrature(&cfg.weights, QuadConfig::with_tol(cfg.quad_tol))?.with_execution(cfg.exec);
    let n = cfg.xmax;
    let mut points = Vec::new();
    for x1 in -n..=n {
        for x2 in -n..=n {
            for r in EdgeType::ALL {
                let v = r.lattice_offset();
                points.push([x1 + v[0], x2 + v[1]]);
                points.push([v[0] - x1, v[1] - x2]);
            }
        }
    }
    fd.kernel().prefetch(&points, cfg.exec)?;
    let mut rows = Vec::new();
    for x1 in -n..=n {
        for x2 in -n..=n {
            for r in EdgeType::ALL {
                for rp in EdgeType::ALL {
                    let c = fd.dimer_correlation([x1, x2], r, rp)?;
                    rows.push(vec![x1.to_string(), x2.to_string(), type_name(r), type_name(rp), f(c)]);
                }
            }
        }
    }
    out.csv("free_corr.csv", &["x1", "x2", "r", "rp", "corr"], &rows)?;

    let radii = cfg.radii_or_default();
    let vars = radii.iter().map(|&r| fd.height_variance(r)).collect::<Result<Vec<f64>, DimerError>>()?;
    let rows: Vec<Vec<String>> = radii.iter().zip(&vars).map(|(r, v)| vec![r.to_string(), f(*v)]).collect();
    out.csv("free_var.csv", &["R", "var"], &rows)?;
    out.dat("free_var.dat", &["R", "var"], &radii.iter().zip(&vars).map(|(&r, &v)| vec![r as f64, v]).collect::<Vec<_>>())?;
    if radii.len() >= 2 {
        let lx: Vec<f64> = radii.iter().map(|&r| (r as f64).ln()).collect();
        let slope = ols_slope(&lx, &vars);
        out.csv("free_var_fit.csv", &["slope", "slope_times_pi2"], &[vec![f(slope), f(slope * PI * PI)]])?;
        println!("variance slope {slope:.6} (pi^2 x slope = {:.4})", slope * PI * PI);
    }
    out.manifest(cfg, "ok")?;
    println!("wrote {}", out.path("free_corr.csv").display());
    Ok(())
}

pub fn coeff_a(cfg: &RunConfig) -> Result<(), CliError> {
    let mut out = Output::create(&cfg.out)?;
    let fo = FirstOrder::new(&cfg.weights)?;
    let a = fo.coefficient_a();
    let a1 = fo.a_first_order()?;
    let nu1 = fo.nu_first_order_formula()?;
    let tilt = if fo.has_zero_tilt() { "zero" } else { "generic" };
    let w = cfg.weights;
    out.csv(
        "coeff_a.csv",
        &["t1", "t2", "t3", "a", "a_first_order", "nu1", "tilt", "lambda", "one_plus_a_lambda"],
        &[vec![f(w.t1), f(w.t2), f(w.t3), f(a), f(a1), f(nu1), tilt.into(), f(cfg.lambda), f(1.0 + a * cfg.lambda)]],
    )?;
    out.manifest(cfg, "ok")?;
    println!("a = {a:.12}  A1 = {a1:.12}  nu1 = {nu1:.12}  ({tilt} tilt)");
    Ok(())
}

fn haldane_triples(cfg: &RunConfig) -> Result<Vec<Weights>, CliError> {
    if let Some(path) = &cfg.sweep_file {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let mut ws = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let t: Vec<f64> = rec
                .iter()
                .map(|x| x.trim().parse().map_err(|_| CliError::Usage(format!("bad weight {x:?} in {}", path.display()))))
                .collect::<Result<_, _>>()?;
            if t.len() != 3 {
                return Err(CliError::Usage(format!("{}: rows need t1,t2,t3", path.display())));
            }
            ws.push(Weights::new(t[0], t[1], t[2]).map_err(|e| CliError::Usage(e.to_string()))?);
        }
        return Ok(ws);
    }
    if cfg.sweep_n == 0 {
        return Ok(vec![cfg.weights]);
    }
    Ok(sample_generic_weights(cfg.sweep_n, cfg.sweep_lo, cfg.sweep_hi, cfg.sweep_seed))
}

pub fn haldane_check(cfg: &RunConfig) -> Result<(), CliError> {
    let mut out = Output::create(&cfg.out)?;
    let triples = haldane_triples(cfg)?;
    let results = cfg.exec.map(&triples, HaldaneRow::compute);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (w, res) in triples.iter().zip(&results) {
        let mut row = vec![f(w.t1), f(w.t2), f(w.t3)];
        match res {
            Ok(h) => {
                let pass = h.passes(cfg.residual_tol, cfg.haldane_tol);
                row.extend([f(h.a), f(h.a_first_order), f(h.nu1), f(h.bracket_residual), f(h.arc_residual)]);
                row.push(if pass { "pass".into() } else { "fail".into() });
                if !pass {
                    failures.push(format!("{w}: |A1 - nu1| = {:.3e}, residuals {:.3e} {:.3e}", (h.a_first_order - h.nu1).abs(), h.bracket_residual, h.arc_residual));
                }
            }
            Err(e) => {
                row.extend(vec![String::new(); 5]);
                row.push(format!("error: {e}"));
                failures.push(format!("{w}: {e}"));
            }
        }
        rows.push(row);
    }
    out.csv(
        "haldane.csv",
        &["t1", "t2", "t3", "a", "a_first_order", "nu1", "bracket_residual", "arc_residual", "status"],
        &rows,
    )?;
    let status = if failures.is_empty() { "ok" } else { "check-failed" };
    out.manifest(cfg, status)?;
    println!("{} of {} triples pass", triples.len() - failures.len(), triples.len());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(failures.join("; ")))
    }
}

fn mc_params(cfg: &RunConfig) -> MCParams {
    let mut p = MCParams::new(cfg.side, cfg.weights, cfg.lambda, cfg.sweeps, cfg.seed);
    p.burn_in = cfg.burn_in();
    p.measurement_stride = cfg.stride;
    p
}

const CHECKPOINT: &str = "checkpoint.txt";

fn open_run(cfg: &RunConfig, out: &Output) -> Result<VarianceRun, CliError> {
    let params = mc_params(cfg);
    let radii = cfg.radii_or_default();
    let path = out.path(CHECKPOINT);
    if cfg.resume && path.exists() {
        let run = VarianceRun::from_checkpoint(&fs::read_to_string(&path)?)?;
        if run.params() != &params || run.radii() != radii.as_slice() || run.chains() != cfg.chains {
            return Err(CliError::Usage(format!("{} belongs to a different configuration", path.display())));
        }
        eprintln!("resuming at sweep {}", run.sweeps_done());
        return Ok(run);
    }
    Ok(VarianceRun::new(params, &radii, cfg.chains)?)
}

pub fn mc(cfg: &RunConfig) -> Result<(), CliError> {
    let mut out = Output::create(&cfg.out)?;
    let mut run = open_run(cfg, &out)?;
    while !run.is_complete() {
        run.advance(cfg.checkpoint_every, cfg.exec);
        out.text(CHECKPOINT, &run.to_checkpoint())?;
    }
    match mc_outputs(cfg, &run, &mut out) {
        Ok(()) => {
            out.manifest(cfg, "ok")?;
            Ok(())
        }
        Err(e) => {
            out.manifest(cfg, if matches!(e, CliError::Insufficient(_)) { "insufficient-samples" } else { "error" })?;
            Err(e)
        }
    }
}

fn mc_outputs(cfg: &RunConfig, run: &VarianceRun, out: &mut Output) -> Result<(), CliError> {
    let stats = run.sweep_stats();
    out.csv(
        "sweeps.csv",
        &["chains", "sweeps", "proposed", "flippable", "accepted"],
        &[vec![
            run.chains().to_string(),
            run.sweeps_done().to_string(),
            stats.proposed.to_string(),
            stats.flippable.to_string(),
            stats.accepted.to_string(),
        ]],
    )?;
    // densities first: they stay meaningful when the variance series are too
    // short
    let exact = if cfg.side <= 4 {
        let start = DimerConfig::columnar(TorusGeometry::new(cfg.side)?);
        Some(ExactEnsemble::new(cfg.side, &cfg.weights, cfg.lambda, &Support::FlipComponent(start))?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for r in EdgeType::ALL {
        let e = run.type_density(r)?;
        let (ex, z) = match &exact {
            Some(ens) => {
                let x = exact_type_density(ens, r);
                (f(x), f(e.z_score(x)))
            }
            None => (String::new(), String::new()),
        };
        rows.push(vec![type_name(r), f(e.mean), f(e.stderr), f(e.tau_int), e.n_samples.to_string(), ex, z]);
    }
    out.csv("densities.csv", &["r", "mean", "stderr", "tau_int", "n_samples", "exact", "z"], &rows)?;

    let est = run.estimates()?;
    let rows: Vec<Vec<String>> = est
        .iter()
        .map(|(r, e)| vec![r.to_string(), f(e.mean), f(e.stderr), f(e.tau_int), e.n_samples.to_string()])
        .collect();
    out.csv("samples.csv", &["R", "var", "stderr", "tau_int", "n_samples"], &rows)?;
    out.dat(
        "variance.dat",
        &["R", "var", "stderr"],
        &est.iter().map(|(r, e)| vec![*r as f64, e.mean, e.stderr]).collect::<Vec<_>>(),
    )?;
    if est.len() >= 2 {
        let a = FirstOrder::new(&cfg.weights).map(|fo| fo.coefficient_a()).ok();
        let mut rows = Vec::new();
        for &reg in &cfg.regressors {
            let fit = run.fit(reg)?;
            let target = a.map(|a| f(1.0 + a * cfg.lambda)).unwrap_or_default();
            println!("{:<10} A_hat {:.4} +- {:.4}  chi2 {:.2}/{}", reg.name(), fit.a_hat, fit.err, fit.line.chi2, fit.line.dof);
            rows.push(vec![
                reg.name().into(),
                f(fit.a_hat),
                f(fit.err),
                f(fit.line.chi2),
                fit.line.dof.to_string(),
                target,
            ]);
        }
        out.csv("fit.csv", &["regressor", "a_hat", "err", "chi2", "dof", "first_order_target"], &rows)?;
    }
    Ok(())
}

pub fn variance_fit(cfg: &RunConfig) -> Result<(), CliError> {
    let input = cfg.input.clone().unwrap_or_else(|| cfg.out.join("samples.csv"));
    let mut rd = csv::Reader::from_path(&input)?;
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| CliError::Usage(format!("{}: no {name} column", input.display())))
    };
    let (ci, cv, cs) = (col("R")?, col("var")?, col("stderr")?);
    let (mut radii, mut y, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rd.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
        let bad = |v: String| CliError::Usage(format!("{}: bad number {v:?}", input.display()));
        radii.push(get(ci).parse::<usize>().map_err(|_| bad(get(ci)))?);
        y.push(get(cv).parse::<f64>().map_err(|_| bad(get(cv)))?);
        s.push(get(cs).parse::<f64>().map_err(|_| bad(get(cs)))?);
    }
    if radii.len() < 2 {
        return Err(CliError::Insufficient(format!("{} has fewer than two radii", input.display())));
    }
    let mut out = Output::create(&cfg.out)?;
    let mut rows = Vec::new();
    for &reg in &cfg.regressors {
        let x = radii.iter().map(|&r| reg.eval(cfg.side, &cfg.weights, r)).collect::<Result<Vec<f64>, DimerError>>()?;
        let fit = weighted_line_fit(&x, &y, &s)?;
        let (a, err) = (PI * PI * fit.slope, PI * PI * fit.cov[0][0].sqrt());
        println!("{:<10} A_hat {a:.4} +- {err:.4}  chi2 {:.2}/{}", reg.name(), fit.chi2, fit.dof);
        rows.push(vec![reg.name().into(), f(a), f(err), f(fit.chi2), fit.dof.to_string(), f(fit.intercept)]);
    }
    out.csv("variance_fit.csv", &["regressor", "a_hat", "err", "chi2", "dof", "intercept"], &rows)?;
    out.manifest(cfg, "ok")?;
    Ok(())
}

pub fn enumerate(cfg: &RunConfig) -> Result<(), CliError> {
    let mut out = Output::create(&cfg.out)?;
    let g = TorusGeometry::new(cfg.side)?;
    let t = cfg.weights.all();
    let (configs, probs, log_z) = match cfg.support {
        SupportKind::Full => {
            let configs = enumerate_matchings(&g)?;
            let logs: Vec<f64> = configs
                .iter()
                .map(|c| c.log_weight(&t) + cfg.lambda * interaction_count(c, PlaquetteConvention::AboveBelow) as f64)
                .collect();
            let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logs.iter().map(|l| (l - m).exp()).sum();
            let probs = logs.iter().map(|l| (l - m).exp() / z).collect::<Vec<_>>();
            (configs, probs, m + z.ln())
        }
        kind => {
            let start = DimerConfig::columnar(g);
            let support = if kind == SupportKind::Sector { Support::Sector(start) } else { Support::FlipComponent(start) };
            let ens = ExactEnsemble::new(cfg.side, &cfg.weights, cfg.lambda, &support)?;
            (ens.configs().to_vec(), ens.probabilities().to_vec(), ens.log_partition_function())
        }
    };
    let z_det = if cfg.support == SupportKind::Full && cfg.lambda == 0.0 {
        f(torus_partition_function(&cfg.weights, cfg.side)?)
    } else {
        String::new()
    };
    out.csv(
        "enumerate.csv",
        &["side", "support", "count", "log_z", "z_determinants"],
        &[vec![cfg.side.to_string(), cfg.support.name().to_string(), configs.len().to_string(), f(log_z), z_det]],
    )?;
    let n_black = g.n_black() as f64;
    let mut rows = Vec::new();
    for r in EdgeType::ALL {
        let d: f64 = configs.iter().zip(&probs).map(|(c, p)| p * c.type_counts()[r.index()] as f64 / n_black).sum();
        rows.push(vec![type_name(r), f(d)]);
    }
    out.csv("enumerate_densities.csv", &["r", "density"], &rows)?;
    if cfg.write_configs {
        let body: String = configs.iter().map(|c| c.to_line() + "\n").collect();
        out.text("configs.txt", &body)?;
    }
    out.manifest(cfg, "ok")?;
    println!("{} configurations, log Z = {log_z:.12}", configs.len());
    Ok(())
}
