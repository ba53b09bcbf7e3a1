//! Experiment harnesses: single runs, the kappa sweep, kappa convergence,
//! perturbation growth, the `eps L(u_t) + L(u) = g` bound, norm proxies and
//! manufactured-solution convergence ladders.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::compat::{build_compat, check_compatibility, CompatContext, CompatData, CompatReport};
use crate::config::RunConfig;
use crate::error::{FsiError, Result};
use crate::field::{h1_seminorm_sq, l2_inner, VectorField};
use crate::kinematics::{zero_mat, Mat};
use crate::linalg::{solve_newton, BandMatrix};
use crate::mesh::{build_mesh, GeometrySpec, Phase, PhaseMesh, PhaseSelector, Point, SolidShape, MAX_DIM};
use crate::operators::{elastic_flux, linear_l, ElasticityTensor};
use crate::output::{RunSummary, Verdict};
use crate::presets::{BodyForce, InitialData};
use crate::scalar::{Dual, Scalar};
use crate::stepper::{local_grad, DeformationState, DiagnosticsRecord, RunOptions, SolverParams, Stepper, Trajectory};

/// Mesh, initial velocity and compatibility hierarchy for one configuration.
pub struct Prepared {
    pub mesh: PhaseMesh,
    pub u0: VectorField,
    pub compat: CompatData,
    /// `None` when the mesh has no fluid and the hierarchy is taken as zero.
    pub report: Option<CompatReport>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let mesh = build_mesh(&cfg.geometry)?;
    let u0 = cfg.initial.build(&mesh)?;
    prepare_with(cfg, mesh, u0)
}

/// As [`prepare`], with an explicit initial velocity.
pub fn prepare_with(cfg: &RunConfig, mesh: PhaseMesh, u0: VectorField) -> Result<Prepared> {
    u0.check(&mesh)?;
    if !mesh.has_phase(Phase::Fluid) {
        let mut compat = CompatData::zero(&mesh);
        compat.u0 = u0.clone();
        return Ok(Prepared {
            mesh,
            u0,
            compat,
            report: None,
        });
    }
    let (compat, report) = {
        let mut ctx = CompatContext::new(&mesh, cfg.params.nu, cfg.params.elasticity(mesh.dim)?, cfg.forcing.clone());
        ctx.cg_tol = cfg.params.cg_tol;
        ctx.tol = cfg.experiment.compat_tol;
        let compat = build_compat(&ctx, &u0)?;
        let report = check_compatibility(&ctx, &compat)?;
        (compat, report)
    };
    Ok(Prepared {
        mesh,
        u0,
        compat,
        report: Some(report),
    })
}

pub fn run_options(cfg: &RunConfig, keep_states: bool) -> RunOptions {
    let every = cfg.experiment.checkpoint_every;
    RunOptions {
        keep_states,
        checkpoint: (every > 0).then(|| (cfg.output_dir.join("checkpoints"), every)),
        z_ceiling: cfg.experiment.z_ceiling,
    }
}

pub fn run_prepared(cfg: &RunConfig, prep: &Prepared, keep_states: bool) -> Result<Trajectory> {
    let stepper = Stepper::new(&prep.mesh, cfg.params.clone(), cfg.forcing.clone(), &prep.compat)?;
    stepper.run(&prep.u0, &run_options(cfg, keep_states))
}

/// A finished run with what its summary needs.
pub struct RunOutcome {
    pub config: RunConfig,
    pub trajectory: Trajectory,
    pub report: Option<CompatReport>,
    pub norms: Vec<(String, f64)>,
}

pub fn run_config(cfg: &RunConfig, keep_states: bool) -> Result<RunOutcome> {
    let prep = prepare(cfg)?;
    let trajectory = run_prepared(cfg, &prep, keep_states)?;
    Ok(RunOutcome {
        config: cfg.clone(),
        trajectory,
        report: prep.report,
        norms: prep.compat.norms(),
    })
}

impl RunOutcome {
    /// The run verdict passes iff the march reached `t_end`.
    pub fn summary(&self) -> RunSummary {
        let tr = &self.trajectory;
        let mut v = Verdict::new("run", tr.completed()).with("t_star", tr.t_star).with("steps", tr.records.len() - 1);
        if let Some(f) = &tr.failure {
            v = v.with("failure", f);
        }
        let mut s = RunSummary {
            verdicts: vec![v],
            values: Vec::new(),
            config: Some(self.config.clone()),
        };
        fill_run_values(&mut s, "", tr, self.report.as_ref(), &self.norms);
        s
    }
}

fn fill_run_values(s: &mut RunSummary, prefix: &str, tr: &Trajectory, report: Option<&CompatReport>, norms: &[(String, f64)]) {
    s.push(format!("{prefix}t_star"), tr.t_star);
    if let Some(last) = tr.records.last() {
        s.push(format!("{prefix}final.kinetic"), last.kinetic);
        s.push(format!("{prefix}final.elastic"), last.elastic);
        s.push(format!("{prefix}final.v_h1"), last.v_h1);
        s.push(format!("{prefix}final.eta_h2_solid"), last.eta_h2_solid);
        s.push(format!("{prefix}final.q_l2"), last.q_l2);
        s.push(format!("{prefix}final.min_det"), last.min_det);
        s.push(format!("{prefix}final.z_proxy"), last.z_proxy);
    }
    for (k, v) in norms {
        s.push(format!("{prefix}hierarchy.{k}"), v);
    }
    match report {
        Some(r) => {
            for (k, v) in r.entries() {
                s.push(format!("{prefix}compat.{k}"), v);
            }
            s.push(format!("{prefix}compat.status"), if r.compatible() { "compatible" } else { "incompatible" });
        }
        None => s.push(format!("{prefix}compat.status"), "not-applicable"),
    }
}

// ---------------------------------------------------------------------------
// eps L(u_t) + L(u) = g

#[derive(Clone, Debug, PartialEq)]
pub struct LemmaKeyReport {
    pub eps_values: Vec<f64>,
    /// `sup_t ||L(u)(t)||` per eps.
    pub sup_norms: Vec<f64>,
    /// `sup_t ||g(t)|| + ||L(u0)||`.
    pub bound: f64,
    pub slack: Vec<f64>,
    /// `|sup(dt) - sup(dt/2)|` per eps.
    pub integration_error: Vec<f64>,
    /// Whether every integration error is below `0.01 * bound`.
    pub valid: bool,
}

impl LemmaKeyReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.slack.iter().all(|s| *s >= -tol)
    }
}

fn solid_norm(mesh: &PhaseMesh, y: &VectorField) -> f64 {
    l2_inner(mesh, PhaseSelector::Solid, y, y).sqrt()
}

/// Norms `||y(t_n)||` of the solution of `eps y' + y = g`, `y(0) = y0`, with
/// `g` linear in time on each step (exact update).
fn lemma_trace(mesh: &PhaseMesh, y0: &VectorField, g: &dyn Fn(f64) -> VectorField, eps: f64, t_end: f64, dt: f64) -> Vec<(f64, f64)> {
    let n = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    let e = (-dt / eps).exp();
    let one_e = -(-dt / eps).exp_m1();
    let slope_w = dt - eps * one_e;
    let mut y = y0.clone();
    let mut g_prev = g(0.0);
    let mut out = vec![(0.0, solid_norm(mesh, &y))];
    for k in 1..=n {
        let t = k as f64 * dt;
        let g_next = g(t);
        for (i, yi) in y.values.iter_mut().enumerate() {
            let gn = g_prev.values[i];
            let slope = (g_next.values[i] - gn) / dt;
            *yi = e * *yi + one_e * gn + slope * slope_w;
        }
        out.push((t, solid_norm(mesh, &y)));
        g_prev = g_next;
    }
    out
}

/// Integrate `eps L(u_t) + L(u) = g` through `y = L(u)` for each `eps` and
/// compare `sup_t ||y||` with `sup_t ||g|| + ||L(u0)||`.
pub fn lemma_key_trial(
    mesh: &PhaseMesh,
    c: &ElasticityTensor,
    u0: &VectorField,
    g: &dyn Fn(f64) -> VectorField,
    eps_list: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<LemmaKeyReport> {
    for &e in eps_list {
        if !(e > 0.0 && e.is_finite()) {
            return Err(FsiError::Param {
                field: "eps".into(),
                reason: format!("must be positive, got {e}"),
            });
        }
    }
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(FsiError::Param {
            field: "dt".into(),
            reason: "step and horizon must be positive".into(),
        });
    }
    let y0 = linear_l(u0, c, mesh)?.strong(mesh);
    let n = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    let g_sup = (0..=n).map(|k| solid_norm(mesh, &g(k as f64 * dt))).fold(0.0, f64::max);
    let bound = g_sup + solid_norm(mesh, &y0);
    let mut sup_norms = Vec::new();
    let mut slack = Vec::new();
    let mut integration_error = Vec::new();
    for &eps in eps_list {
        let coarse = lemma_trace(mesh, &y0, g, eps, t_end, dt).into_iter().map(|p| p.1).fold(0.0, f64::max);
        let fine = lemma_trace(mesh, &y0, g, eps, t_end, 0.5 * dt).into_iter().map(|p| p.1).fold(0.0, f64::max);
        sup_norms.push(coarse);
        slack.push(bound - coarse);
        integration_error.push((coarse - fine).abs());
    }
    let valid = integration_error.iter().all(|e| *e <= 0.01 * bound);
    Ok(LemmaKeyReport {
        eps_values: eps_list.to_vec(),
        sup_norms,
        bound,
        slack,
        integration_error,
        valid,
    })
}

/// Single-mode reduction: with `g = g0 phi`, `||phi|| = 1`, `u0 = 0` the
/// field solution is `y(t) phi` with scalar `y`. Returns the largest
/// deviation of `||y(t_n)||` from `g0 (1 - exp(-t/eps))`.
pub fn lemma_key_scalar(mesh: &PhaseMesh, phi: &VectorField, g0: f64, eps: f64, t_end: f64, dt: f64) -> Result<f64> {
    let nrm = solid_norm(mesh, phi);
    if nrm == 0.0 {
        return Err(FsiError::Shape("reduction direction vanishes on the solid".into()));
    }
    let unit = phi.scaled(1.0 / nrm);
    let g = move |_t: f64| unit.scaled(g0);
    let trace = lemma_trace(mesh, &VectorField::zeros(mesh), &g, eps, t_end, dt);
    Ok(trace
        .into_iter()
        .map(|(t, y)| (y - g0.abs() * -(-t / eps).exp_m1()).abs())
        .fold(0.0, f64::max))
}

/// Smooth random field supported on solid nodes.
pub fn random_solid_field(mesh: &PhaseMesh, rng: &mut impl Rng) -> VectorField {
    let d = mesh.dim;
    let pi = std::f64::consts::PI;
    let modes = 3;
    let coef: Vec<f64> = (0..d * modes * modes).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut f = VectorField::from_fn(mesh, |x| {
        let mut v = [0.0; MAX_DIM];
        for i in 0..d {
            for m in 0..modes {
                for n in 0..modes {
                    let a = coef[(i * modes + m) * modes + n];
                    v[i] += a * ((m + 1) as f64 * pi * x[0]).sin() * ((n + 1) as f64 * pi * x[1]).cos();
                }
            }
        }
        v
    });
    for n in 0..mesh.num_nodes() {
        if !mesh.node_in(n, Phase::Solid) {
            f.set_node(n, &[0.0; MAX_DIM]);
        }
    }
    f
}

/// Random time profile `g(t) = sin(omega t + theta) phi1 + (t / t_end) phi2`.
pub fn random_profile(mesh: &PhaseMesh, rng: &mut impl Rng, t_end: f64) -> impl Fn(f64) -> VectorField + Send + Sync {
    let phi1 = random_solid_field(mesh, rng);
    let phi2 = random_solid_field(mesh, rng);
    let omega: f64 = rng.gen_range(1.0..20.0);
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    move |t| {
        let mut g = phi1.scaled((omega * t + theta).sin());
        g.axpy(t / t_end, &phi2);
        g
    }
}

// ---------------------------------------------------------------------------
// kappa sweep

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub kappa: f64,
    pub t_star: f64,
    pub z_proxy: f64,
    pub completed: bool,
    pub failure: Option<String>,
    pub records: Vec<DiagnosticsRecord>,
    /// Accepted states, kept only when requested.
    pub states: Vec<DeformationState>,
    pub summary: RunSummary,
}

#[derive(Clone, Debug)]
pub struct SweepTable {
    pub t_end: f64,
    /// Sorted by kappa, largest first.
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn all_completed(&self) -> bool {
        self.rows.iter().all(|r| r.completed)
    }

    /// `min T* / max T*`.
    pub fn time_ratio(&self) -> f64 {
        let lo = self.rows.iter().map(|r| r.t_star).fold(f64::INFINITY, f64::min);
        let hi = self.rows.iter().map(|r| r.t_star).fold(0.0, f64::max);
        if hi > 0.0 {
            lo / hi
        } else {
            0.0
        }
    }
}

/// Thread pool honouring `FSI_THREADS` (unset or 0: rayon's default).
pub fn sweep_pool() -> Result<rayon::ThreadPool> {
    let n = match std::env::var("FSI_THREADS") {
        Ok(s) => s.trim().parse::<usize>().map_err(|e| FsiError::Param {
            field: "FSI_THREADS".into(),
            reason: format!("`{s}`: {e}"),
        })?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| FsiError::Experiment(format!("thread pool: {e}")))
}

/// Run the base configuration once per kappa. Solver failures are recorded in
/// the rows; only setup errors are returned.
pub fn kappa_sweep(base: &RunConfig, kappas: &[f64], keep_states: bool) -> Result<SweepTable> {
    let mut ks = kappas.to_vec();
    ks.sort_by(|a, b| b.total_cmp(a));
    ks.dedup();
    let prep = prepare(base)?;
    let pool = sweep_pool()?;
    let rows: Vec<Result<SweepRow>> = pool.install(|| {
        ks.par_iter()
            .map(|&k| {
                let mut cfg = base.with_kappa(k);
                if cfg.experiment.checkpoint_every > 0 {
                    cfg.output_dir = cfg.output_dir.join(format!("kappa_{k}"));
                }
                let tr = run_prepared(&cfg, &prep, keep_states)?;
                let outcome = RunOutcome {
                    config: cfg,
                    trajectory: tr,
                    report: prep.report.clone(),
                    norms: prep.compat.norms(),
                };
                let summary = outcome.summary();
                let tr = outcome.trajectory;
                Ok(SweepRow {
                    kappa: k,
                    t_star: tr.t_star,
                    z_proxy: tr.records.last().map_or(0.0, |r| r.z_proxy),
                    completed: tr.completed(),
                    failure: tr.failure,
                    records: tr.records,
                    states: tr.states,
                    summary,
                })
            })
            .collect()
    });
    Ok(SweepTable {
        t_end: base.params.t_end,
        rows: rows.into_iter().collect::<Result<_>>()?,
    })
}

/// Distance of each run to the reference run in discrete `L2(0,T;H1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub reference_kappa: f64,
    /// `(kappa, distance)`, kappa descending, reference excluded.
    pub rows: Vec<(f64, f64)>,
}

impl ConvergenceTable {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].1 < w[0].1)
    }
}

fn h1_sq(mesh: &PhaseMesh, u: &VectorField) -> f64 {
    l2_inner(mesh, PhaseSelector::Both, u, u) + h1_seminorm_sq(mesh, PhaseSelector::Both, u)
}

fn diff(a: &VectorField, b: &VectorField) -> VectorField {
    let mut d = a.clone();
    d.axpy(-1.0, b);
    d
}

/// Distances from a sweep that kept its states.
pub fn convergence_from_sweep(mesh: &PhaseMesh, table: &SweepTable, reference_kappa: f64, dt: f64) -> Result<ConvergenceTable> {
    if let Some(r) = table.rows.iter().find(|r| !r.completed) {
        return Err(FsiError::Experiment(format!(
            "run with kappa = {} stopped at t = {} before the common horizon",
            r.kappa, r.t_star
        )));
    }
    let reference = table
        .rows
        .iter()
        .find(|r| r.kappa == reference_kappa)
        .ok_or_else(|| FsiError::Experiment(format!("no run with the reference kappa {reference_kappa}")))?;
    let mut rows = Vec::new();
    for r in &table.rows {
        if r.kappa == reference_kappa {
            continue;
        }
        if r.states.len() != reference.states.len() || r.states.is_empty() {
            return Err(FsiError::Experiment("sweep did not keep matching state histories".into()));
        }
        let s: f64 = r
            .states
            .iter()
            .zip(&reference.states)
            .skip(1)
            .map(|(a, b)| dt * h1_sq(mesh, &diff(&a.v, &b.v)))
            .sum();
        rows.push((r.kappa, s.sqrt()));
    }
    Ok(ConvergenceTable { reference_kappa, rows })
}

pub fn kappa_convergence(base: &RunConfig, kappas: &[f64], reference_kappa: f64) -> Result<ConvergenceTable> {
    let mut all = kappas.to_vec();
    all.push(reference_kappa);
    let table = kappa_sweep(base, &all, true)?;
    let mesh = build_mesh(&base.geometry)?;
    convergence_from_sweep(&mesh, &table, reference_kappa, base.params.dt)
}

// ---------------------------------------------------------------------------
// perturbation growth

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationRow {
    pub delta: f64,
    /// `sup_t ||v_delta - v|| / delta`.
    pub ratio: f64,
    /// `||v_delta(T) - v(T)|| / delta`.
    pub final_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationTable {
    pub rows: Vec<PerturbationRow>,
}

impl PerturbationTable {
    /// `max r / min r - 1` over the nonzero deltas.
    pub fn spread(&self) -> f64 {
        let rs: Vec<f64> = self.rows.iter().filter(|r| r.delta > 0.0).map(|r| r.ratio).collect();
        let lo = rs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = rs.iter().copied().fold(0.0, f64::max);
        if rs.is_empty() || lo <= 0.0 {
            return f64::INFINITY;
        }
        hi / lo - 1.0
    }
}

/// Perturb `u0` along the unit-norm vortex field and measure the growth of
/// the velocity difference.
pub fn perturbation_study(base: &RunConfig, deltas: &[f64]) -> Result<PerturbationTable> {
    let prep = prepare(base)?;
    let base_tr = run_prepared(base, &prep, true)?;
    if !base_tr.completed() {
        return Err(FsiError::Experiment(format!(
            "base run failed at t = {}: {}",
            base_tr.t_star,
            base_tr.failure.unwrap_or_default()
        )));
    }
    let dir = InitialData::Vortices { amplitude: 1.0 }.build(&prep.mesh)?;
    let pool = sweep_pool()?;
    let rows: Vec<Result<PerturbationRow>> = pool.install(|| {
        deltas
            .par_iter()
            .map(|&delta| {
                if delta == 0.0 {
                    return Ok(PerturbationRow {
                        delta,
                        ratio: 0.0,
                        final_ratio: 0.0,
                    });
                }
                let mut u0 = prep.u0.clone();
                u0.axpy(delta, &dir);
                let p = prepare_with(base, prep.mesh.clone(), u0)?;
                let tr = run_prepared(base, &p, true)?;
                if !tr.completed() {
                    return Err(FsiError::Experiment(format!(
                        "perturbed run (delta = {delta}) failed at t = {}",
                        tr.t_star
                    )));
                }
                let gaps: Vec<f64> = tr
                    .states
                    .iter()
                    .zip(&base_tr.states)
                    .map(|(a, b)| {
                        let e = diff(&a.v, &b.v);
                        l2_inner(&prep.mesh, PhaseSelector::Both, &e, &e).sqrt()
                    })
                    .collect();
                Ok(PerturbationRow {
                    delta,
                    ratio: gaps.iter().copied().fold(0.0, f64::max) / delta,
                    final_ratio: gaps.last().copied().unwrap_or(0.0) / delta,
                })
            })
            .collect()
    });
    Ok(PerturbationTable {
        rows: rows.into_iter().collect::<Result<_>>()?,
    })
}

// ---------------------------------------------------------------------------
// energy and norm proxies

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergySample {
    pub t: f64,
    pub kinetic: f64,
    pub elastic: f64,
    pub total: f64,
}

pub fn energy_trace(tr: &Trajectory) -> Vec<EnergySample> {
    tr.records
        .iter()
        .map(|r| EnergySample {
            t: r.t,
            kinetic: r.kinetic,
            elastic: r.elastic,
            total: r.energy,
        })
        .collect()
}

/// Largest per-step energy increase, relative to `E(0)`.
pub fn max_energy_increase(trace: &[EnergySample]) -> f64 {
    let e0 = trace.first().map_or(0.0, |s| s.total);
    let inc = trace.windows(2).map(|w| w[1].total - w[0].total).fold(f64::NEG_INFINITY, f64::max);
    if e0 > 0.0 {
        inc / e0
    } else {
        inc
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZtNorm {
    pub value: f64,
    /// Set when difference-quotient terms are included.
    pub proxy: bool,
}

/// Discrete proxy of the solution-space norm over steps `0..=upto`:
/// `sum dt ||v||_H1^2 + sup ||eta - X||_{H2,s}^2 + sup ||q||^2`, optionally
/// with `sum dt ||D v||_H1^2 + sum dt ||D^2 v||^2` from difference quotients.
pub fn zt_norm(mesh: &PhaseMesh, tr: &Trajectory, dt: f64, upto: usize, difference_quotients: bool) -> Result<ZtNorm> {
    let recs = &tr.records[..=upto.min(tr.records.len() - 1)];
    let mut value: f64 = recs.iter().skip(1).map(|r| dt * r.v_h1 * r.v_h1).sum();
    value += recs.iter().map(|r| r.eta_h2_solid * r.eta_h2_solid).fold(0.0, f64::max);
    value += recs.iter().map(|r| r.q_l2 * r.q_l2).fold(0.0, f64::max);
    if difference_quotients {
        if tr.states.len() < 4 {
            return Err(FsiError::Experiment(format!(
                "difference quotients need at least 4 stored states, found {}",
                tr.states.len()
            )));
        }
        let st = &tr.states[..=upto.min(tr.states.len() - 1)];
        for w in st.windows(2) {
            value += dt * h1_sq(mesh, &diff(&w[1].v, &w[0].v).scaled(1.0 / dt));
        }
        for w in st.windows(3) {
            let mut dd = diff(&w[2].v, &w[1].v);
            dd.axpy(-1.0, &diff(&w[1].v, &w[0].v));
            let dd = dd.scaled(1.0 / (dt * dt));
            value += dt * l2_inner(mesh, PhaseSelector::Both, &dd, &dd);
        }
    }
    Ok(ZtNorm {
        value,
        proxy: difference_quotients,
    })
}

// ---------------------------------------------------------------------------
// manufactured solutions

#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    pub label: String,
    /// Refinement parameter (`h` or `dt`), coarse to fine.
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log step`.
    pub rate: f64,
    pub monotone: bool,
}

impl RateTable {
    pub fn new(label: &str, steps: Vec<f64>, errors: Vec<f64>) -> Self {
        let xs: Vec<f64> = steps.iter().map(|s| s.ln()).collect();
        let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let monotone = errors.windows(2).all(|w| w[1] < w[0]);
        RateTable {
            label: label.into(),
            steps,
            errors,
            rate: sxy / sxx,
            monotone,
        }
    }
}

fn ladder_check(xs: &[f64], what: &str) -> Result<()> {
    if xs.len() < 3 {
        return Err(FsiError::Param {
            field: what.into(),
            reason: format!("a convergence ladder needs at least 3 levels, got {}", xs.len()),
        });
    }
    Ok(())
}

/// Stream-function velocity `curl (sin^2(pi x) sin^2(pi y))`, zero on the wall.
fn swirl(x: &Point) -> Point {
    let pi = std::f64::consts::PI;
    let (sx, cx) = (pi * x[0]).sin_cos();
    let (sy, cy) = (pi * x[1]).sin_cos();
    [2.0 * pi * sx * sx * sy * cy, -2.0 * pi * sx * cx * sy * sy, 0.0]
}

/// Backward Euler on a fluid-only frozen mesh with exact semi-discrete
/// solution `T(t) phi`; the load `T' M phi + T K phi` is read off the
/// assembled residual. Error: `max_n ||v_n - T(t_n) phi||`.
pub fn mms_temporal(params: &SolverParams, h: f64, dts: &[f64]) -> Result<RateTable> {
    ladder_check(dts, "dt")?;
    let spec = GeometrySpec {
        dim: 2,
        extent: [1.0, 1.0, 0.0],
        solids: Vec::new(),
        h,
    };
    let mesh = build_mesh(&spec)?;
    // small amplitude keeps the accumulated configuration injective
    let mut phi = VectorField::from_fn(&mesh, swirl).scaled(1e-2);
    phi.clear_boundary(&mesh);
    let zero = CompatData::zero(&mesh);
    let tt = |t: f64| 1.0 + (4.0 * t).sin();
    let dtt = |t: f64| 4.0 * (4.0 * t).cos();
    let t_end = 0.5;

    let probe_params = SolverParams {
        frozen: true,
        dt: 1.0,
        t_end: 1.0,
        ..params.clone()
    };
    let probe = Stepper::new(&mesh, probe_params, BodyForce::Zero, &zero)?;
    let at = |v: &VectorField| DeformationState {
        t: 0.0,
        eta: VectorField::identity(&mesh),
        v: v.clone(),
        q: vec![0.0; mesh.num_cells()],
    };
    let k_phi = VectorField {
        dim: 2,
        values: probe.assemble_residual(&at(&phi), &at(&phi))?,
    };
    let mk = VectorField {
        dim: 2,
        values: probe.assemble_residual(&at(&phi), &at(&VectorField::zeros(&mesh)))?,
    };
    let m_phi = diff(&mk, &k_phi);

    let mut errors = Vec::new();
    for &dt in dts {
        let p = SolverParams {
            frozen: true,
            dt,
            t_end,
            ..params.clone()
        };
        let (m_phi, k_phi) = (m_phi.clone(), k_phi.clone());
        let stepper = Stepper::new(&mesh, p, BodyForce::Zero, &zero)?.with_load(Box::new(move |t| {
            let mut l = m_phi.scaled(dtt(t));
            l.axpy(tt(t), &k_phi);
            l
        }));
        let opts = RunOptions {
            keep_states: true,
            checkpoint: None,
            z_ceiling: f64::INFINITY,
        };
        let tr = stepper.run(&phi.scaled(tt(0.0)), &opts)?;
        if let Some(f) = tr.failure {
            return Err(FsiError::Experiment(format!("temporal ladder run failed: {f}")));
        }
        let err = tr
            .states
            .iter()
            .map(|s| {
                let e = diff(&s.v, &phi.scaled(tt(s.t)));
                l2_inner(&mesh, PhaseSelector::Both, &e, &e).sqrt()
            })
            .fold(0.0, f64::max);
        errors.push(err);
    }
    Ok(RateTable::new("temporal", dts.to_vec(), errors))
}

/// Gradient of the manufactured displacement
/// `u = alpha (sin(pi x) sin(pi y), x^2 y)`.
fn manufactured_grad<S: Scalar>(alpha: f64, x: &[S; MAX_DIM]) -> Mat<S> {
    let pi = std::f64::consts::PI;
    let mut g = zero_mat::<S>();
    let (px, py) = (x[0] * pi, x[1] * pi);
    g[0][0] = px.cos() * py.sin() * (alpha * pi);
    g[0][1] = px.sin() * py.cos() * (alpha * pi);
    g[1][0] = x[0] * x[1] * (2.0 * alpha);
    g[1][1] = x[0] * x[0] * alpha;
    g
}

fn manufactured_u(alpha: f64, x: &Point) -> Point {
    let pi = std::f64::consts::PI;
    [alpha * (pi * x[0]).sin() * (pi * x[1]).sin(), alpha * x[0] * x[0] * x[1], 0.0]
}

/// `f = -div P(I + grad u)` by forward differentiation of the closed-form gradient.
fn manufactured_force(c: &ElasticityTensor, alpha: f64, x: &Point) -> Point {
    let xs: [Dual<3>; MAX_DIM] = [Dual::var(x[0], 0), Dual::var(x[1], 1), Dual::var(x[2], 2)];
    let mut f = manufactured_grad(alpha, &xs);
    for i in 0..2 {
        f[i][i] += Dual::constant(1.0);
    }
    let p = elastic_flux(c, &f);
    let mut out = [0.0; MAX_DIM];
    for i in 0..2 {
        for j in 0..2 {
            out[i] -= p[i][j].d[j];
        }
    }
    out
}

struct SteadySolid<'m> {
    mesh: &'m PhaseMesh,
    c: ElasticityTensor,
    fixed: Vec<bool>,
    target: Vec<f64>,
    load: Vec<f64>,
    grads: Vec<Vec<Point>>,
}

impl SteadySolid<'_> {
    fn element<S: Scalar>(&self, u: &[S]) -> Vec<S> {
        let mesh = self.mesh;
        let d = mesh.dim;
        let vol = mesh.cell_volume();
        let mut r = vec![S::zero(); u.len()];
        for (q, g) in self.grads.iter().enumerate() {
            let w = mesh.gauss.weights[q] * vol;
            let mut f = local_grad(d, u, g);
            for i in 0..d {
                f[i][i] += S::one();
            }
            let p = elastic_flux(&self.c, &f);
            for (a, ga) in g.iter().enumerate() {
                for i in 0..d {
                    let mut s = S::zero();
                    for k in 0..d {
                        s += p[i][k] * ga[k];
                    }
                    r[a * d + i] += s * w;
                }
            }
        }
        r
    }

    fn gather(&self, c: usize, u: &[f64]) -> Vec<f64> {
        let d = self.mesh.dim;
        self.mesh.cells[c].iter().flat_map(|&n| u[n * d..n * d + d].to_vec()).collect()
    }

    fn residual(&self, u: &[f64]) -> Vec<f64> {
        let d = self.mesh.dim;
        let mut r: Vec<f64> = self.load.iter().map(|x| -x).collect();
        for c in self.mesh.cells_in(PhaseSelector::Solid) {
            let re = self.element(&self.gather(c, u));
            for (a, &n) in self.mesh.cells[c].iter().enumerate() {
                for i in 0..d {
                    r[n * d + i] += re[a * d + i];
                }
            }
        }
        for (k, &fx) in self.fixed.iter().enumerate() {
            if fx {
                r[k] = u[k] - self.target[k];
            }
        }
        r
    }

    fn jacobian(&self, u: &[f64]) -> BandMatrix {
        let mesh = self.mesh;
        let d = mesh.dim;
        let bw = d * (mesh.node_bandwidth() + 1);
        let mut jac = BandMatrix::new(mesh.num_dofs(), bw, bw);
        for c in mesh.cells_in(PhaseSelector::Solid) {
            let ul: Vec<Dual<8>> = self.gather(c, u).iter().enumerate().map(|(k, &x)| Dual::var(x, k)).collect();
            let re = self.element(&ul);
            let nodes = &mesh.cells[c];
            for (a, &na) in nodes.iter().enumerate() {
                for i in 0..d {
                    let row = na * d + i;
                    if self.fixed[row] {
                        continue;
                    }
                    for (b, &nb) in nodes.iter().enumerate() {
                        for j in 0..d {
                            jac.add(row, nb * d + j, re[a * d + i].d[b * d + j]);
                        }
                    }
                }
            }
        }
        for (k, &fx) in self.fixed.iter().enumerate() {
            if fx {
                jac.add(k, k, 1.0);
            }
        }
        jac
    }
}

/// Steady nonlinear solid problem `-div P(grad eta) = f` with the
/// manufactured displacement imposed off the solid-interior nodes.
/// Error: `||u_h - u||_{L2(solid)}` by Gauss quadrature.
pub fn mms_spatial(lambda: f64, mu: f64, hs: &[f64]) -> Result<RateTable> {
    ladder_check(hs, "h")?;
    let alpha = 0.05;
    let mut errors = Vec::new();
    for &h in hs {
        let mesh = build_mesh(&GeometrySpec {
            dim: 2,
            extent: [1.0, 1.0, 0.0],
            solids: vec![SolidShape::Box {
                lo: [0.25, 0.25, 0.0],
                hi: [0.75, 0.75, 0.0],
            }],
            h,
        })?;
        let d = 2;
        let c = ElasticityTensor::new(lambda, mu, d)?;
        let exact = VectorField::from_fn(&mesh, |x| manufactured_u(alpha, x));
        let mut fixed = vec![false; mesh.num_dofs()];
        for n in 0..mesh.num_nodes() {
            if !mesh.is_phase_interior(n, Phase::Solid) {
                fixed[n * d] = true;
                fixed[n * d + 1] = true;
            }
        }
        let vol = mesh.cell_volume();
        let mut load = vec![0.0; mesh.num_dofs()];
        for cell in mesh.cells_in(PhaseSelector::Solid) {
            for (q, vals) in mesh.gauss.values.iter().enumerate() {
                let x = mesh.map_point(cell, &mesh.gauss.points[q]);
                let f = manufactured_force(&c, alpha, &x);
                let w = mesh.gauss.weights[q] * vol;
                for (a, &n) in mesh.cells[cell].iter().enumerate() {
                    for i in 0..d {
                        load[n * d + i] += w * vals[a] * f[i];
                    }
                }
            }
        }
        let prob = SteadySolid {
            mesh: &mesh,
            c,
            fixed,
            target: exact.values.clone(),
            load,
            grads: mesh.gauss.ref_grads.iter().map(|g| mesh.physical_grads(g)).collect(),
        };
        let (u, rep) = solve_newton(|x| Ok(prob.residual(x)), |x| Ok(prob.jacobian(x)), exact.values.clone(), 1e-12, 30)?;
        if !rep.converged {
            return Err(FsiError::Newton(format!("steady solid solve stalled at residual {:e}", rep.residual)));
        }
        let uh = VectorField { dim: d, values: u };
        let mut err = 0.0;
        for cell in mesh.cells_in(PhaseSelector::Solid) {
            for (q, vals) in mesh.gauss.values.iter().enumerate() {
                let x = mesh.map_point(cell, &mesh.gauss.points[q]);
                let ue = manufactured_u(alpha, &x);
                let v = crate::field::interpolate_vector(&mesh, &uh, cell, vals);
                err += mesh.gauss.weights[q] * vol * ((v[0] - ue[0]).powi(2) + (v[1] - ue[1]).powi(2));
            }
        }
        errors.push(err.sqrt());
    }
    Ok(RateTable::new("spatial", hs.to_vec(), errors))
}

/// Default ladders: `dt = 0.05 / 2^k`, `k = 0..4` on `h = 1/8`, and `h = 1/8, 1/16, 1/32`.
pub fn mms_convergence(cfg: &RunConfig) -> Result<(RateTable, RateTable)> {
    let dts = [0.05, 0.025, 0.0125, 0.00625];
    let temporal = mms_temporal(&cfg.params, 0.125, &dts)?;
    let spatial = mms_spatial(cfg.params.lambda, cfg.params.mu, &[0.125, 0.0625, 0.03125])?;
    Ok((temporal, spatial))
}

/// Seeded generator shared by the randomized harnesses.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
