//! Backward-Euler march of the regularized, penalized system on the
//! reference mesh.
//!
//! Unknown per step: the nodal velocity `v_new`. The configuration follows as
//! `eta_new = eta_old + dt v_new` and every nonlinear coefficient (cofactor,
//! elastic stress, `f o eta`) is evaluated at `eta_new`. The weak residual is
//!
//! ```text
//! M (v_new - v_old)/dt
//!   + int_f nu grad v (a a^T) : grad phi - |K| q_K a_K^T : grad phi(x_K)
//!   + int_s (kappa c:grad v + P(eta_new)) : grad phi
//!   - int_f f(t, eta_new) phi - int_s f(t, x) phi - kappa <h(t), phi> [- kappa <g(t), phi>]
//! ```
//!
//! with the cellwise pressure `q_K = q0 + t q1 + t^2/2 q2 - a_K : grad v_K / eps`
//! evaluated at cell centres.

use std::path::PathBuf;

use crate::compat::{CompatData, KappaForcing};
use crate::error::{FsiError, Result};
use crate::field::{h1_seminorm_sq, l2_inner, recover_vector_gradient, VectorField};
use crate::kinematics::{adjugate, det, displacement, identity, zero_mat, Mat};
use crate::linalg::{norm2, solve_newton, BandMatrix};
use crate::mesh::{Phase, PhaseMesh, PhaseSelector, Point, MAX_DIM};
use crate::operators::{elastic_energy_density, elastic_flux, linear_flux, viscous_flux, ElasticityTensor};
use crate::presets::{write_field, BodyForce};
use crate::scalar::{Dual, Scalar};

/// Physical and numerical parameters of one march.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverParams {
    pub nu: f64,
    pub lambda: f64,
    pub mu: f64,
    pub kappa: f64,
    pub eps_pen: f64,
    pub dt: f64,
    pub t_end: f64,
    pub newton_tol: f64,
    pub newton_maxit: usize,
    pub cg_tol: f64,
    /// Add the interface forcing `g` on the traction balance.
    pub include_g: bool,
    /// Freeze the fluid cofactor at the identity (and `f` at reference points).
    pub frozen: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            nu: 1.0,
            lambda: 1.0,
            mu: 1.0,
            kappa: 1e-2,
            eps_pen: 1e-4,
            dt: 1e-3,
            t_end: 0.2,
            newton_tol: 1e-10,
            newton_maxit: 25,
            cg_tol: 1e-12,
            include_g: true,
            frozen: false,
        }
    }
}

fn param_err(field: &str, reason: &str) -> FsiError {
    FsiError::Param {
        field: field.into(),
        reason: reason.into(),
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("nu", self.nu),
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("eps_pen", self.eps_pen),
            ("dt", self.dt),
            ("t_end", self.t_end),
            ("newton_tol", self.newton_tol),
            ("cg_tol", self.cg_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(param_err(name, &format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(param_err("kappa", &format!("must be non-negative, got {}", self.kappa)));
        }
        if self.newton_maxit == 0 {
            return Err(param_err("newton_maxit", "must be at least 1"));
        }
        if self.dt > self.t_end {
            return Err(param_err("dt", &format!("dt = {} exceeds t_end = {}", self.dt, self.t_end)));
        }
        Ok(())
    }

    pub fn elasticity(&self, dim: usize) -> Result<ElasticityTensor> {
        ElasticityTensor::new(self.lambda, self.mu, dim)
    }

    /// Number of steps to reach `t_end`.
    pub fn num_steps(&self) -> usize {
        ((self.t_end / self.dt) - 1e-9).ceil().max(1.0) as usize
    }
}

/// `(t, eta, v, q)`; `q` is per cell (zero on solid cells).
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationState {
    pub t: f64,
    pub eta: VectorField,
    pub v: VectorField,
    pub q: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub newton_iterations: usize,
    pub residual: f64,
    /// `(sum_K |K| (a_K : grad v_K)^2)^(1/2)` over fluid cells.
    pub constraint: f64,
    pub min_det: f64,
    pub kinetic: f64,
    pub elastic: f64,
}

/// One line of the per-step diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub kinetic: f64,
    pub elastic: f64,
    pub energy: f64,
    pub v_h1: f64,
    pub eta_h2_solid: f64,
    pub q_l2: f64,
    pub constraint: f64,
    pub min_det: f64,
    pub newton_iterations: usize,
    pub residual: f64,
    /// Running discrete proxy of the solution-space norm.
    pub z_proxy: f64,
}

/// Weak nodal load added to the right-hand side, as a function of time.
pub type LoadFn<'a> = Box<dyn Fn(f64) -> VectorField + Send + Sync + 'a>;

/// Everything fixed during a march.
pub struct Stepper<'a> {
    pub mesh: &'a PhaseMesh,
    pub params: SolverParams,
    pub elasticity: ElasticityTensor,
    pub force: BodyForce,
    q_hier: [Vec<f64>; 3],
    forcing: KappaForcing,
    load: Option<LoadFn<'a>>,
    gauss_grads: Vec<Vec<Point>>,
    centre_grads: Vec<Point>,
    mass: Vec<Vec<f64>>,
    dirichlet: Vec<bool>,
    solid_cell: Vec<bool>,
}

pub(crate) fn local_grad<S: Scalar>(d: usize, vals: &[S], grads: &[Point]) -> Mat<S> {
    let mut m = zero_mat::<S>();
    for (a, g) in grads.iter().enumerate() {
        for i in 0..d {
            let va = vals[a * d + i];
            for k in 0..d {
                m[i][k] += va * g[k];
            }
        }
    }
    m
}

impl<'a> Stepper<'a> {
    pub fn new(mesh: &'a PhaseMesh, params: SolverParams, force: BodyForce, compat: &CompatData) -> Result<Self> {
        params.validate()?;
        let elasticity = params.elasticity(mesh.dim)?;
        compat.u0.check(mesh)?;
        let forcing = KappaForcing::new(&compat.u0, &compat.w[0], &compat.w[1], &elasticity, mesh)?;
        let rule = &mesh.gauss;
        let gauss_grads: Vec<Vec<Point>> = rule.ref_grads.iter().map(|g| mesh.physical_grads(g)).collect();
        let centre_grads = mesh.physical_grads(&mesh.centre.ref_grads[0]);
        let npc = mesh.nodes_per_cell();
        let vol = mesh.cell_volume();
        let mut mass = vec![vec![0.0; npc]; npc];
        for (q, vals) in rule.values.iter().enumerate() {
            for a in 0..npc {
                for b in 0..npc {
                    mass[a][b] += rule.weights[q] * vol * vals[a] * vals[b];
                }
            }
        }
        let d = mesh.dim;
        let mut dirichlet = vec![false; mesh.num_dofs()];
        for n in 0..mesh.num_nodes() {
            if mesh.boundary_node[n] {
                for i in 0..d {
                    dirichlet[n * d + i] = true;
                }
            }
        }
        let solid_cell = (0..mesh.num_cells()).map(|c| mesh.phase[c] == Phase::Solid).collect();
        Ok(Stepper {
            mesh,
            params,
            elasticity,
            force,
            q_hier: compat.q.clone(),
            forcing,
            load: None,
            gauss_grads,
            centre_grads,
            mass,
            dirichlet,
            solid_cell,
        })
    }

    pub fn with_load(mut self, load: LoadFn<'a>) -> Self {
        self.load = Some(load);
        self
    }

    fn q_hier_at(&self, c: usize, t: f64) -> f64 {
        let nodes = &self.mesh.cells[c];
        let w = 1.0 / nodes.len() as f64;
        let avg = |q: &[f64]| nodes.iter().map(|&n| q[n]).sum::<f64>() * w;
        avg(&self.q_hier[0]) + t * avg(&self.q_hier[1]) + 0.5 * t * t * avg(&self.q_hier[2])
    }

    fn gather(&self, c: usize, f: &[f64]) -> Vec<f64> {
        let d = self.mesh.dim;
        let mut out = Vec::with_capacity(self.mesh.nodes_per_cell() * d);
        for &n in &self.mesh.cells[c] {
            out.extend_from_slice(&f[n * d..n * d + d]);
        }
        out
    }

    /// Element residual without the static right-hand side.
    fn element<S: Scalar>(&self, c: usize, t: f64, v: &[S], v_old: &[f64], disp_old: &[f64]) -> Vec<S> {
        let mesh = self.mesh;
        let d = mesh.dim;
        let npc = mesh.nodes_per_cell();
        let p = &self.params;
        let dt = p.dt;
        let vol = mesh.cell_volume();
        let rule = &mesh.gauss;
        let solid = self.solid_cell[c];
        let mut r = vec![S::zero(); npc * d];
        for a in 0..npc {
            for b in 0..npc {
                let m = self.mass[a][b] / dt;
                for i in 0..d {
                    r[a * d + i] += (v[b * d + i] - v_old[b * d + i]) * m;
                }
            }
        }
        let disp: Vec<S> = v.iter().zip(disp_old).map(|(&x, &u)| x * dt + u).collect();
        let with_id = |mut m: Mat<S>| {
            for i in 0..d {
                m[i][i] += S::one();
            }
            m
        };
        for (q, g) in self.gauss_grads.iter().enumerate() {
            let w = rule.weights[q] * vol;
            let gv = local_grad(d, v, g);
            let f = with_id(local_grad(d, &disp, g));
            let flux = if solid {
                let lin = linear_flux(&self.elasticity, &gv);
                let el = elastic_flux(&self.elasticity, &f);
                let mut t = zero_mat::<S>();
                for i in 0..d {
                    for k in 0..d {
                        t[i][k] = lin[i][k] * p.kappa + el[i][k];
                    }
                }
                t
            } else {
                let a = if p.frozen { identity::<S>(d) } else { adjugate(d, &f) };
                viscous_flux(d, p.nu, &a, &gv)
            };
            for a in 0..npc {
                for i in 0..d {
                    let mut s = S::zero();
                    for k in 0..d {
                        s += flux[i][k] * g[a][k];
                    }
                    r[a * d + i] += s * w;
                }
            }
            if !self.force.is_zero() {
                let x = mesh.map_point(c, &rule.points[q]);
                let mut xs = [S::zero(); MAX_DIM];
                for k in 0..d {
                    xs[k] = S::cst(x[k]);
                    if !(solid || p.frozen) {
                        for a in 0..npc {
                            xs[k] += disp[a * d + k] * rule.values[q][a];
                        }
                    }
                }
                let fv = self.force.eval(d, S::cst(t), &xs);
                for a in 0..npc {
                    let wa = w * rule.values[q][a];
                    for i in 0..d {
                        r[a * d + i] -= fv[i] * wa;
                    }
                }
            }
        }
        if !solid {
            let g = &self.centre_grads;
            let gv = local_grad(d, v, g);
            let a = if p.frozen {
                identity::<S>(d)
            } else {
                adjugate(d, &with_id(local_grad(d, &disp, g)))
            };
            let mut div = S::zero();
            for i in 0..d {
                for k in 0..d {
                    div += a[k][i] * gv[i][k];
                }
            }
            let qv = div * (-1.0 / p.eps_pen) + self.q_hier_at(c, t);
            for b in 0..npc {
                for i in 0..d {
                    let mut s = S::zero();
                    for k in 0..d {
                        s += a[k][i] * g[b][k];
                    }
                    r[b * d + i] -= qv * s * vol;
                }
            }
        }
        r
    }

    /// `kappa h(t)`, optionally `kappa g(t)`, and the external load.
    /// The weak `h` already carries the interface flux `g`; dropping `g`
    /// means adding its weak form back to cancel that flux.
    fn static_rhs(&self, t: f64) -> VectorField {
        let p = &self.params;
        let mut rhs = self.forcing.h_at(t).scaled(p.kappa);
        if !p.include_g {
            rhs.axpy(p.kappa, &self.forcing.g_at(t));
        }
        if let Some(load) = &self.load {
            rhs.axpy(1.0, &load(t));
        }
        rhs
    }

    fn residual_with(&self, t: f64, old: &DeformationState, disp_old: &VectorField, rhs: &VectorField, v: &[f64]) -> Vec<f64> {
        let mesh = self.mesh;
        let d = mesh.dim;
        let mut r: Vec<f64> = rhs.values.iter().map(|x| -x).collect();
        for c in 0..mesh.num_cells() {
            let vl = self.gather(c, v);
            let vo = self.gather(c, &old.v.values);
            let uo = self.gather(c, &disp_old.values);
            let re = self.element(c, t, &vl, &vo, &uo);
            for (a, &n) in mesh.cells[c].iter().enumerate() {
                for i in 0..d {
                    r[n * d + i] += re[a * d + i];
                }
            }
        }
        for (k, &fixed) in self.dirichlet.iter().enumerate() {
            if fixed {
                r[k] = v[k];
            }
        }
        r
    }

    fn jacobian_with<const N: usize>(&self, t: f64, old: &DeformationState, disp_old: &VectorField, v: &[f64]) -> BandMatrix {
        let mesh = self.mesh;
        let d = mesh.dim;
        let n = mesh.num_dofs();
        let bw = d * (mesh.node_bandwidth() + 1);
        let mut jac = BandMatrix::new(n, bw, bw);
        for c in 0..mesh.num_cells() {
            let vl: Vec<Dual<N>> = self.gather(c, v).iter().enumerate().map(|(k, &x)| Dual::var(x, k)).collect();
            let vo = self.gather(c, &old.v.values);
            let uo = self.gather(c, &disp_old.values);
            let re = self.element(c, t, &vl, &vo, &uo);
            let nodes = &mesh.cells[c];
            for (a, &na) in nodes.iter().enumerate() {
                for i in 0..d {
                    let row = na * d + i;
                    if self.dirichlet[row] {
                        continue;
                    }
                    let dr = &re[a * d + i].d;
                    for (b, &nb) in nodes.iter().enumerate() {
                        for j in 0..d {
                            jac.add(row, nb * d + j, dr[b * d + j]);
                        }
                    }
                }
            }
        }
        for (k, &fixed) in self.dirichlet.iter().enumerate() {
            if fixed {
                jac.add(k, k, 1.0);
            }
        }
        jac
    }

    fn jacobian(&self, t: f64, old: &DeformationState, disp_old: &VectorField, v: &[f64]) -> Result<BandMatrix> {
        match self.mesh.nodes_per_cell() * self.mesh.dim {
            2 => Ok(self.jacobian_with::<2>(t, old, disp_old, v)),
            8 => Ok(self.jacobian_with::<8>(t, old, disp_old, v)),
            24 => Ok(self.jacobian_with::<24>(t, old, disp_old, v)),
            k => Err(FsiError::Shape(format!("no Jacobian kernel for {k} element unknowns"))),
        }
    }

    /// Residual of `new` relative to `old`; `new.eta` is ignored and rebuilt
    /// as `old.eta + dt new.v`.
    pub fn assemble_residual(&self, new: &DeformationState, old: &DeformationState) -> Result<Vec<f64>> {
        new.v.check(self.mesh)?;
        old.eta.check(self.mesh)?;
        let t = old.t + self.params.dt;
        let disp_old = displacement(&old.eta, self.mesh);
        let rhs = self.static_rhs(t);
        Ok(self.residual_with(t, old, &disp_old, &rhs, &new.v.values))
    }

    /// Initial state `(0, Id, u0, q(0))`.
    pub fn initial_state(&self, u0: &VectorField) -> Result<DeformationState> {
        u0.check(self.mesh)?;
        let mut st = DeformationState {
            t: 0.0,
            eta: VectorField::identity(self.mesh),
            v: u0.clone(),
            q: Vec::new(),
        };
        st.q = self.penalty_pressure(&st)?;
        Ok(st)
    }

    /// Cellwise `q0 + t q1 + t^2/2 q2 - a_K : grad v_K / eps` at cell centres.
    pub fn penalty_pressure(&self, state: &DeformationState) -> Result<Vec<f64>> {
        Ok(self.centre_divergence(state)?
            .into_iter()
            .enumerate()
            .map(|(c, div)| match div {
                Some(dv) => self.q_hier_at(c, state.t) - dv / self.params.eps_pen,
                None => 0.0,
            })
            .collect())
    }

    /// `a_K : grad v_K` per fluid cell, `None` on solid cells.
    pub fn centre_divergence(&self, state: &DeformationState) -> Result<Vec<Option<f64>>> {
        let mesh = self.mesh;
        let d = mesh.dim;
        state.eta.check(mesh)?;
        state.v.check(mesh)?;
        let disp = displacement(&state.eta, mesh);
        Ok((0..mesh.num_cells())
            .map(|c| {
                if self.solid_cell[c] {
                    return None;
                }
                let g = &self.centre_grads;
                let gv = local_grad(d, &self.gather(c, &state.v.values), g);
                let mut f = local_grad(d, &self.gather(c, &disp.values), g);
                for i in 0..d {
                    f[i][i] += 1.0;
                }
                let a = if self.params.frozen { identity::<f64>(d) } else { adjugate(d, &f) };
                let mut div = 0.0;
                for i in 0..d {
                    for k in 0..d {
                        div += a[k][i] * gv[i][k];
                    }
                }
                Some(div)
            })
            .collect())
    }

    pub fn constraint_residual(&self, state: &DeformationState) -> Result<f64> {
        let vol = self.mesh.cell_volume();
        Ok(self
            .centre_divergence(state)?
            .into_iter()
            .flatten()
            .map(|x| vol * x * x)
            .sum::<f64>()
            .sqrt())
    }

    /// Smallest `det grad eta` over all Gauss points.
    pub fn min_det(&self, eta: &VectorField) -> f64 {
        let mesh = self.mesh;
        let d = mesh.dim;
        let disp = displacement(eta, mesh);
        let mut m = f64::INFINITY;
        for c in 0..mesh.num_cells() {
            let u = self.gather(c, &disp.values);
            for g in &self.gauss_grads {
                let mut f = local_grad(d, &u, g);
                for i in 0..d {
                    f[i][i] += 1.0;
                }
                m = m.min(det(d, &f));
            }
        }
        m
    }

    /// One backward-Euler step. Fails without advancing on Newton failure or
    /// loss of injectivity.
    pub fn step(&self, state: &DeformationState) -> Result<(DeformationState, StepReport)> {
        let p = &self.params;
        let t = state.t + p.dt;
        let disp_old = displacement(&state.eta, self.mesh);
        let rhs = self.static_rhs(t);
        let (v, rep) = solve_newton(
            |x| Ok(self.residual_with(t, state, &disp_old, &rhs, x)),
            |x| self.jacobian(t, state, &disp_old, x),
            state.v.values.clone(),
            p.newton_tol,
            p.newton_maxit,
        )?;
        if !rep.converged {
            return Err(FsiError::Newton(format!(
                "no convergence at t = {t} after {} iterations, residual {:e}",
                rep.iterations, rep.residual
            )));
        }
        let v = VectorField { dim: self.mesh.dim, values: v };
        let mut eta = state.eta.clone();
        eta.axpy(p.dt, &v);
        let min_det = self.min_det(&eta);
        if min_det <= 0.0 {
            return Err(FsiError::Injectivity { min_det });
        }
        let mut next = DeformationState { t, eta, v, q: Vec::new() };
        next.q = self.penalty_pressure(&next)?;
        let report = StepReport {
            newton_iterations: rep.iterations,
            residual: rep.residual,
            constraint: self.constraint_residual(&next)?,
            min_det,
            kinetic: kinetic_energy(self.mesh, &next.v),
            elastic: elastic_energy(self.mesh, &self.elasticity, &next.eta),
        };
        Ok((next, report))
    }

    /// Re-evaluate the residual norm of an accepted step.
    pub fn residual_norm(&self, new: &DeformationState, old: &DeformationState) -> Result<f64> {
        Ok(norm2(&self.assemble_residual(new, old)?))
    }

    /// March from `u0` until `t_end` or the first failure.
    pub fn run(&self, u0: &VectorField, opts: &RunOptions) -> Result<Trajectory> {
        let mesh = self.mesh;
        let mut state = self.initial_state(u0)?;
        let mut tracker = ZTracker::default();
        let mut records = vec![self.record(0, &state, None, &mut tracker)];
        let mut states = if opts.keep_states { vec![state.clone()] } else { Vec::new() };
        let reference = records[0].z_proxy;
        let mut failure = None;
        let nsteps = self.params.num_steps();
        for k in 1..=nsteps {
            match self.step(&state) {
                Ok((next, rep)) => {
                    let rec = self.record(k, &next, Some(&rep), &mut tracker);
                    let blown = reference > 0.0 && rec.z_proxy > opts.z_ceiling * reference;
                    records.push(rec);
                    state = next;
                    if opts.keep_states {
                        states.push(state.clone());
                    }
                    if let Some((dir, every)) = &opts.checkpoint {
                        if *every > 0 && k % every == 0 {
                            std::fs::create_dir_all(dir)?;
                            std::fs::write(dir.join(format!("eta_{k:06}.txt")), write_field(&state.eta))?;
                            std::fs::write(dir.join(format!("v_{k:06}.txt")), write_field(&state.v))?;
                        }
                    }
                    if blown {
                        failure = Some(format!("norm proxy exceeded {:e} times its initial value", opts.z_ceiling));
                        break;
                    }
                }
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            }
        }
        let _ = mesh;
        let t_star = if failure.is_some() { state.t } else { self.params.t_end };
        Ok(Trajectory {
            records,
            states,
            final_state: state,
            t_star,
            failure,
        })
    }

    fn record(&self, step: usize, st: &DeformationState, rep: Option<&StepReport>, z: &mut ZTracker) -> DiagnosticsRecord {
        let mesh = self.mesh;
        let kinetic = rep.map_or_else(|| kinetic_energy(mesh, &st.v), |r| r.kinetic);
        let elastic = rep.map_or_else(|| elastic_energy(mesh, &self.elasticity, &st.eta), |r| r.elastic);
        let v_h1_sq = l2_inner(mesh, PhaseSelector::Both, &st.v, &st.v) + h1_seminorm_sq(mesh, PhaseSelector::Both, &st.v);
        let eta_h2_sq = h2_solid_sq(mesh, &displacement(&st.eta, mesh));
        let vol = mesh.cell_volume();
        let q_l2_sq: f64 = st.q.iter().map(|q| vol * q * q).sum();
        if step > 0 {
            z.integral += self.params.dt * v_h1_sq;
        }
        z.sup_eta = z.sup_eta.max(eta_h2_sq);
        z.sup_q = z.sup_q.max(q_l2_sq);
        DiagnosticsRecord {
            step,
            t: st.t,
            kinetic,
            elastic,
            energy: kinetic + elastic,
            v_h1: v_h1_sq.sqrt(),
            eta_h2_solid: eta_h2_sq.sqrt(),
            q_l2: q_l2_sq.sqrt(),
            constraint: rep.map_or_else(|| self.constraint_residual(st).unwrap_or(f64::NAN), |r| r.constraint),
            min_det: rep.map_or_else(|| self.min_det(&st.eta), |r| r.min_det),
            newton_iterations: rep.map_or(0, |r| r.newton_iterations),
            residual: rep.map_or(0.0, |r| r.residual),
            z_proxy: z.integral + z.sup_eta + z.sup_q,
        }
    }
}

#[derive(Default)]
struct ZTracker {
    integral: f64,
    sup_eta: f64,
    sup_q: f64,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub keep_states: bool,
    /// Directory and cadence (in steps) for field dumps.
    pub checkpoint: Option<(PathBuf, usize)>,
    /// Blow-up threshold for the norm proxy, relative to its initial value.
    pub z_ceiling: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            keep_states: false,
            checkpoint: None,
            z_ceiling: 1e6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    /// Every accepted state when requested, starting at `t = 0`.
    pub states: Vec<DeformationState>,
    pub final_state: DeformationState,
    /// Failure time, or `t_end` if the march completed.
    pub t_star: f64,
    pub failure: Option<String>,
}

impl Trajectory {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

/// `1/2 v^T M v` with the consistent mass.
pub fn kinetic_energy(mesh: &PhaseMesh, v: &VectorField) -> f64 {
    0.5 * l2_inner(mesh, PhaseSelector::Both, v, v)
}

/// `1/4 int_s c (F^T F - I) : (F^T F - I)`.
pub fn elastic_energy(mesh: &PhaseMesh, c: &ElasticityTensor, eta: &VectorField) -> f64 {
    let d = mesh.dim;
    let disp = displacement(eta, mesh);
    let rule = &mesh.gauss;
    let grads: Vec<Vec<Point>> = rule.ref_grads.iter().map(|g| mesh.physical_grads(g)).collect();
    let vol = mesh.cell_volume();
    let mut e = 0.0;
    for cell in mesh.cells_in(PhaseSelector::Solid) {
        let mut u = Vec::with_capacity(mesh.nodes_per_cell() * d);
        for &n in &mesh.cells[cell] {
            u.extend_from_slice(&disp.values[n * d..n * d + d]);
        }
        for (q, g) in grads.iter().enumerate() {
            let mut f = local_grad(d, &u, g);
            for i in 0..d {
                f[i][i] += 1.0;
            }
            e += rule.weights[q] * vol * elastic_energy_density(c, &f);
        }
    }
    e
}

/// Discrete `||u||^2_{H^2}` over the solid: L2 and H1 parts by quadrature,
/// second derivatives as cell gradients of the recovered nodal gradient.
pub fn h2_solid_sq(mesh: &PhaseMesh, u: &VectorField) -> f64 {
    if !mesh.has_phase(Phase::Solid) {
        return 0.0;
    }
    let d = mesh.dim;
    let base = l2_inner(mesh, PhaseSelector::Solid, u, u) + h1_seminorm_sq(mesh, PhaseSelector::Solid, u);
    let rg = recover_vector_gradient(mesh, Phase::Solid, u);
    let g = mesh.physical_grads(&mesh.centre.ref_grads[0]);
    let vol = mesh.cell_volume();
    let mut second = 0.0;
    for c in mesh.cells_in(PhaseSelector::Solid) {
        for i in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let s: f64 = mesh.cells[c].iter().enumerate().map(|(a, &n)| rg[n][i][k] * g[a][l]).sum();
                    second += vol * s * s;
                }
            }
        }
    }
    base + second
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, GeometrySpec};

    fn setup(h: f64) -> PhaseMesh {
        build_mesh(&GeometrySpec::centred_box(2, 0.5, h)).unwrap()
    }

    #[test]
    fn validation_rejects_long_steps() {
        let p = SolverParams { dt: 2.0, t_end: 1.0, ..Default::default() };
        assert!(matches!(p.validate(), Err(FsiError::Param { field, .. }) if field == "dt"));
        let p = SolverParams { eps_pen: 0.0, ..Default::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn zero_state_is_an_equilibrium() {
        let mesh = setup(0.25);
        let st = Stepper::new(&mesh, SolverParams::default(), BodyForce::Zero, &CompatData::zero(&mesh)).unwrap();
        let s0 = st.initial_state(&VectorField::zeros(&mesh)).unwrap();
        let (s1, rep) = st.step(&s0).unwrap();
        assert_eq!(rep.newton_iterations, 0);
        assert_eq!(s1.v, s0.v);
        assert_eq!(s1.eta, s0.eta);
        assert!((s1.t - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn jacobian_matches_differences() {
        let mesh = setup(0.25);
        let params = SolverParams { kappa: 0.3, eps_pen: 0.1, dt: 0.05, ..Default::default() };
        let st = Stepper::new(&mesh, params, BodyForce::Oscillating { amp: 1.0, omega: 3.0 }, &CompatData::zero(&mesh)).unwrap();
        let mut v = VectorField::from_fn(&mesh, |x| [(2.0 * x[1]).sin(), x[0] * x[1], 0.0]);
        v.clear_boundary(&mesh);
        let old = DeformationState {
            t: 0.1,
            eta: VectorField::from_fn(&mesh, |x| [x[0] + 0.02 * x[1] * x[1], x[1] - 0.01 * x[0], 0.0]),
            v: v.scaled(0.5),
            q: vec![0.0; mesh.num_cells()],
        };
        let disp = displacement(&old.eta, &mesh);
        let rhs = st.static_rhs(0.15);
        let jac = st.jacobian(0.15, &old, &disp, &v.values).unwrap();
        let h = 1e-6;
        for k in [10, 17, 23, 40] {
            let mut vp = v.values.clone();
            vp[k] += h;
            let mut vm = v.values.clone();
            vm[k] -= h;
            let rp = st.residual_with(0.15, &old, &disp, &rhs, &vp);
            let rm = st.residual_with(0.15, &old, &disp, &rhs, &vm);
            for row in 0..mesh.num_dofs() {
                let fd = (rp[row] - rm[row]) / (2.0 * h);
                assert!((fd - jac.get(row, k)).abs() < 1e-5 * (1.0 + fd.abs()), "row {row} col {k}");
            }
        }
    }
}
