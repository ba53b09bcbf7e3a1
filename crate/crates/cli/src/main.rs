//! `fsi`: command-line front end of the solver and its experiment harnesses.
//!
//! Exit status: 0 when every verdict passes, 1 when an experiment fails,
//! 2 on usage or configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use fsi_core::config::RunConfig;
use fsi_core::experiments::{
    convergence_from_sweep, kappa_sweep, lemma_key_scalar, lemma_key_trial, mms_convergence, prepare, random_profile,
    random_solid_field, rng, run_prepared, RunOutcome,
};
use fsi_core::field::VectorField;
use fsi_core::mesh::build_mesh;
use fsi_core::output::{timeseries_csv, write_text, RunSummary, Verdict};
use fsi_core::verify;
use fsi_core::FsiError;

#[derive(Parser, Debug)]
#[command(name = "fsi", version, about = "Lagrangian fluid-structure solver and verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// Configuration file (sectioned `key = value`).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Comma-separated kappa values. A single value sets kappa for one-off
    /// runs; `sweep-kappa` uses the whole list.
    #[arg(long, value_name = "LIST")]
    kappa: Option<String>,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// March one trajectory and write its time series and summary.
    Run(Common),
    /// Repeat the run over a list of kappa values and compare existence times.
    SweepKappa(Common),
    /// Check the `eps L(u_t) + L(u) = g` bound over random loads.
    LemmaKey(Common),
    /// Build the initial-data hierarchy and report the compatibility conditions.
    CheckCompat(Common),
    /// Temporal and spatial convergence ladders on manufactured solutions.
    Mms(Common),
    /// The full invariant suite (criteria 1-9).
    Verify(Common),
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<FsiError> for Failure {
    fn from(e: FsiError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn help_text() -> String {
    let mut s = String::from("Configuration keys and their defaults:\n\n");
    for line in RunConfig::default().emit().lines() {
        s.push_str("  ");
        s.push_str(line);
        s.push('\n');
    }
    s.push_str("\nThe environment variable FSI_THREADS caps sweep parallelism.\n");
    s
}

fn parse_kappas(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|x| {
            let x = x.trim();
            x.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| Failure::Usage(format!("invalid kappa value `{x}`")))
        })
        .collect()
}

/// Load the configuration and apply command-line overrides.
fn load(common: &Common, sweep: bool) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::from_path(&common.config)
        .map_err(|e| Failure::Usage(format!("{}: {e}", common.config.display())))?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(list) = &common.kappa {
        let ks = parse_kappas(list)?;
        if sweep {
            cfg.experiment.kappas = ks;
        } else if let [k] = ks[..] {
            cfg.params.kappa = k;
        } else {
            return Err(Failure::Usage("--kappa takes a single value outside sweep-kappa".into()));
        }
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

struct Reporter {
    quiet: bool,
}

impl Reporter {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

fn finish(dir: &Path, summary: &RunSummary, started: Instant, rep: &Reporter) -> Result<bool, Failure> {
    summary.write(&dir.join("summary.txt"))?;
    write_text(&dir.join("timing.txt"), &format!("wall_clock_s = {}\n", started.elapsed().as_secs_f64()))?;
    for v in &summary.verdicts {
        rep.say(format!("{} {}", v.label(), v.name));
    }
    Ok(summary.all_pass())
}

fn cmd_run(cfg: &RunConfig, rep: &Reporter) -> Result<bool, Failure> {
    let started = Instant::now();
    let prep = prepare(cfg)?;
    let dir = &cfg.output_dir;
    write_text(&dir.join("mesh.txt"), &prep.mesh.dump())?;
    let trajectory = run_prepared(cfg, &prep, false)?;
    let outcome = RunOutcome {
        config: cfg.clone(),
        trajectory,
        report: prep.report.clone(),
        norms: prep.compat.norms(),
    };
    write_text(&dir.join("timeseries.csv"), &timeseries_csv(&outcome.trajectory.records))?;
    rep.say(format!("t* = {}", outcome.trajectory.t_star));
    finish(dir, &outcome.summary(), started, rep)
}

fn cmd_sweep(cfg: &RunConfig, rep: &Reporter) -> Result<bool, Failure> {
    let started = Instant::now();
    let x = &cfg.experiment;
    let table = kappa_sweep(cfg, &x.kappas, x.kappas.contains(&x.reference_kappa))?;
    let dir = &cfg.output_dir;
    let mut s = RunSummary {
        config: Some(cfg.clone()),
        ..Default::default()
    };
    for row in &table.rows {
        let sub = dir.join(format!("kappa_{}", row.kappa));
        write_text(&sub.join("timeseries.csv"), &timeseries_csv(&row.records))?;
        row.summary.write(&sub.join("summary.txt"))?;
        s.push(format!("kappa_{}.t_star", row.kappa), row.t_star);
        s.push(format!("kappa_{}.z_proxy", row.kappa), row.z_proxy);
        rep.say(format!("kappa = {}: t* = {}", row.kappa, row.t_star));
    }
    let ratio = table.time_ratio();
    s.verdicts.push(
        Verdict::new("kappa_uniform_time", table.all_completed() || ratio >= x.min_time_ratio)
            .with("time_ratio", ratio)
            .with("all_completed", table.all_completed()),
    );
    if x.kappas.contains(&x.reference_kappa) && table.rows.len() > 1 {
        let mesh = build_mesh(&cfg.geometry)?;
        let v = match convergence_from_sweep(&mesh, &table, x.reference_kappa, cfg.params.dt) {
            Ok(conv) => {
                let mut v = Verdict::new("kappa_convergence", conv.strictly_decreasing());
                for (k, d) in &conv.rows {
                    v = v.with(format!("distance_{k}"), d);
                }
                v
            }
            Err(e) => Verdict::new("kappa_convergence", false).with("error", e),
        };
        s.verdicts.push(v);
    }
    finish(dir, &s, started, rep)
}

fn cmd_lemma(cfg: &RunConfig, rep: &Reporter) -> Result<bool, Failure> {
    let started = Instant::now();
    let mesh = build_mesh(&cfg.geometry)?;
    let c = cfg.params.elasticity(mesh.dim)?;
    let eps = &cfg.experiment.lemma_eps;
    let (t_end, dt) = (cfg.params.t_end, cfg.params.dt);
    let mut r = rng(cfg.experiment.seed);
    let mut s = RunSummary {
        config: Some(cfg.clone()),
        ..Default::default()
    };
    let mut pass = true;
    for trial in 0..3 {
        let u0: VectorField = random_solid_field(&mesh, &mut r).scaled(0.1);
        let g = random_profile(&mesh, &mut r, t_end);
        let report = lemma_key_trial(&mesh, &c, &u0, &g, eps, t_end, dt)?;
        let ok = report.holds(1e-8) && report.valid;
        pass &= ok;
        s.push(format!("trial{trial}.bound"), report.bound);
        for (e, (sup, err)) in report.eps_values.iter().zip(report.sup_norms.iter().zip(&report.integration_error)) {
            s.push(format!("trial{trial}.eps_{e}.sup"), sup);
            s.push(format!("trial{trial}.eps_{e}.integration_error"), err);
        }
        rep.say(format!("trial {trial}: bound {} worst sup {}", report.bound, report.sup_norms.iter().copied().fold(0.0, f64::max)));
    }
    s.verdicts.push(Verdict::new("lemma_key_bound", pass));
    let phi = random_solid_field(&mesh, &mut r);
    let mut worst: f64 = 0.0;
    for &e in eps {
        worst = worst.max(lemma_key_scalar(&mesh, &phi, 1.0, e, t_end, dt)?);
    }
    s.verdicts.push(Verdict::new("lemma_key_scalar", worst <= 1e-10).with("max_deviation", worst));
    finish(&cfg.output_dir, &s, started, rep)
}

fn cmd_compat(cfg: &RunConfig, rep: &Reporter) -> Result<bool, Failure> {
    let started = Instant::now();
    let prep = prepare(cfg)?;
    let mut s = RunSummary {
        config: Some(cfg.clone()),
        ..Default::default()
    };
    for (k, v) in prep.compat.norms() {
        s.push(format!("hierarchy.{k}"), v);
    }
    let verdict = match &prep.report {
        Some(r) => {
            let mut v = Verdict::new("compatibility", r.compatible()).with("tol", r.tol);
            for (k, val) in r.entries() {
                v = v.with(k, val);
                rep.say(format!("{k} = {val}"));
            }
            v
        }
        None => Verdict::new("compatibility", true).with("status", "no fluid phase"),
    };
    s.verdicts.push(verdict);
    finish(&cfg.output_dir, &s, started, rep)
}

fn cmd_mms(cfg: &RunConfig, rep: &Reporter) -> Result<bool, Failure> {
    let started = Instant::now();
    let (t, sp) = mms_convergence(cfg)?;
    let mut s = RunSummary {
        config: Some(cfg.clone()),
        ..Default::default()
    };
    let mut row = |label: &str, table: &fsi_core::experiments::RateTable, ok: bool| {
        let mut v = Verdict::new(label, ok).with("rate", table.rate).with("monotone", table.monotone);
        for (h, e) in table.steps.iter().zip(&table.errors) {
            v = v.with(format!("error_{h}"), e);
        }
        rep.say(format!("{label} rate {}", table.rate));
        s.verdicts.push(v);
    };
    row("mms_temporal", &t, t.monotone && (t.rate - 1.0).abs() <= 0.2);
    row("mms_spatial", &sp, sp.monotone && sp.rate >= 1.8);
    finish(&cfg.output_dir, &s, started, rep)
}

fn cmd_verify(cfg: &RunConfig, rep: &Reporter) -> Result<bool, Failure> {
    let started = Instant::now();
    let results = verify::run_all(cfg, |r| rep.say(r.line()));
    let s = RunSummary {
        verdicts: results.iter().map(|r| r.verdict()).collect(),
        values: Vec::new(),
        config: Some(cfg.clone()),
    };
    finish(&cfg.output_dir, &s, started, rep)
}

fn dispatch(cmd: &Command) -> Result<bool, Failure> {
    let (common, sweep) = match cmd {
        Command::SweepKappa(c) => (c, true),
        Command::Run(c) | Command::LemmaKey(c) | Command::CheckCompat(c) | Command::Mms(c) | Command::Verify(c) => (c, false),
    };
    let cfg = load(common, sweep)?;
    let rep = Reporter { quiet: common.quiet };
    match cmd {
        Command::Run(_) => cmd_run(&cfg, &rep),
        Command::SweepKappa(_) => cmd_sweep(&cfg, &rep),
        Command::LemmaKey(_) => cmd_lemma(&cfg, &rep),
        Command::CheckCompat(_) => cmd_compat(&cfg, &rep),
        Command::Mms(_) => cmd_mms(&cfg, &rep),
        Command::Verify(_) => cmd_verify(&cfg, &rep),
    }
}

fn main() -> ExitCode {
    let help = help_text();
    let mut command = Cli::command().after_long_help(help.clone());
    command = command.mut_subcommands(|sc| sc.after_long_help(help.clone()));
    let cli = match command.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
