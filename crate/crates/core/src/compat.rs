//! Initial-data hierarchy `(q0, w1, q1, w2, q2, w3)`, the artificial-viscosity
//! forcings `h`, `g`, and the compatibility checks on the interface and the
//! container wall.
//!
//! Time derivatives at `t = 0` are taken along the configuration
//! `eta(t) = Id + t u0 + t^2/2 w1 + t^3/6 w2` with Taylor-series arithmetic.
//! For order `n`:
//!
//! * `V_n = d^n(f o eta) + div(nu d^n Phi - A_n)` with `Phi = grad w (a a^T)`
//!   and `A_n = sum_{k>=1} C(n,k) d^k a^T q_{n-k}`,
//! * `s_n = sum_{k>=1} C(n+1,k) d^k a : grad w_{n+1-k}`,
//! * `q_n` solves `lap q_n = div V_n + s_n` in the fluid with `dq_n/dN = V_n . N`
//!   on the container wall and interface values from the normal traction balance,
//! * `w_{n+1} = V_n - grad q_n` in the fluid and `d^n f + div(d^n P)` in the solid.
//!
//! `q_n` needs `w_n`, so the members are built in the order
//! `q0, w1, q1, w2, q2, w3`.

use std::sync::Arc;

use crate::error::{FsiError, Result};
use crate::field::{interpolate_scalar, interpolate_vector, recover_divergence, recover_gradient, recover_vector_gradient, VectorField};
use crate::kinematics::{adjugate, cell_gradient, displacement, zero_mat, Mat};
use crate::linalg::{solve_spd, CsrMatrix, SparseSystem};
use crate::mesh::{Phase, PhaseMesh, PhaseSelector, Point, MAX_DIM};
use crate::operators::{
    assemble_flux, elastic_flux, facet_samples, linear_l_tilde, viscous_flux, ElasticityTensor,
    InterfaceField,
};
use crate::presets::BodyForce;
use crate::kinematics::{Sampling, TensorField};
use crate::scalar::{Jet, Scalar};

/// Closed-form interface values `q_n(x)` indexed by order.
pub type PressureData = Arc<dyn Fn(usize, &Point) -> f64 + Send + Sync>;

/// How the pressure members are fixed on the interface.
#[derive(Clone)]
pub enum PressureBoundary {
    /// Normal component of the interface traction balance.
    Traction,
    /// Prescribed values, for manufactured solutions.
    Prescribed(PressureData),
}

impl std::fmt::Debug for PressureBoundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PressureBoundary::Traction => f.write_str("Traction"),
            PressureBoundary::Prescribed(_) => f.write_str("Prescribed(..)"),
        }
    }
}

/// Inputs shared by every builder.
#[derive(Clone, Debug)]
pub struct CompatContext<'a> {
    pub mesh: &'a PhaseMesh,
    pub nu: f64,
    pub elasticity: ElasticityTensor,
    pub force: BodyForce,
    pub boundary: PressureBoundary,
    /// Relative residual for the pressure solves.
    pub cg_tol: f64,
    /// Violations above this are reported as incompatible.
    pub tol: f64,
}

impl<'a> CompatContext<'a> {
    pub fn new(mesh: &'a PhaseMesh, nu: f64, elasticity: ElasticityTensor, force: BodyForce) -> Self {
        CompatContext {
            mesh,
            nu,
            elasticity,
            force,
            boundary: PressureBoundary::Traction,
            cg_tol: 1e-12,
            tol: 1e-6,
        }
    }
}

/// The full hierarchy. Velocity members are single nodal fields (solid-side
/// values on interface nodes, zero on the container wall); the one-sided
/// values are kept for the checks.
#[derive(Clone, Debug)]
pub struct CompatData {
    pub u0: VectorField,
    /// `w1, w2, w3`.
    pub w: [VectorField; 3],
    pub w_fluid: [VectorField; 3],
    pub w_solid: [VectorField; 3],
    /// `q0, q1, q2`, nodal on the fluid (zero elsewhere).
    pub q: [Vec<f64>; 3],
}

impl CompatData {
    /// All members zero.
    pub fn zero(mesh: &PhaseMesh) -> Self {
        let z = VectorField::zeros(mesh);
        let zq = vec![0.0; mesh.num_nodes()];
        CompatData {
            u0: z.clone(),
            w: [z.clone(), z.clone(), z.clone()],
            w_fluid: [z.clone(), z.clone(), z.clone()],
            w_solid: [z.clone(), z.clone(), z],
            q: [zq.clone(), zq.clone(), zq],
        }
    }

    /// Norms of each member, for summaries.
    pub fn norms(&self) -> Vec<(String, f64)> {
        let mut out = vec![("u0".to_string(), self.u0.max_abs())];
        for (k, w) in self.w.iter().enumerate() {
            out.push((format!("w{}", k + 1), w.max_abs()));
        }
        for (k, q) in self.q.iter().enumerate() {
            out.push((format!("q{k}"), q.iter().fold(0.0f64, |m, x| m.max(x.abs()))));
        }
        out
    }
}

/// Matrix of Taylor series `base + sum_k derivs[k] t^(k+shift) / (k+shift)!`.
fn series(d: usize, base: Option<&Mat<f64>>, derivs: &[Mat<f64>]) -> Mat<Jet> {
    let mut m = zero_mat::<Jet>();
    for i in 0..d {
        for j in 0..d {
            let mut der = Vec::with_capacity(4);
            if let Some(b) = base {
                der.push(b[i][j]);
            }
            der.extend(derivs.iter().map(|g| g[i][j]));
            m[i][j] = Jet::from_derivatives(&der);
        }
    }
    m
}

fn derivative_mat(d: usize, m: &Mat<Jet>, n: usize) -> Mat<f64> {
    let mut out = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..d {
        for j in 0..d {
            out[i][j] = m[i][j].derivative(n);
        }
    }
    out
}

fn identity_f64(d: usize) -> Mat<f64> {
    crate::kinematics::identity(d)
}

/// Time derivatives `d^n a(0)`, `n = 0..=3`, of the cofactor along
/// `grad eta(t) = I + t G0 + t^2/2 G1 + t^3/6 G2`.
pub fn cofactor_jet(d: usize, grads: &[Mat<f64>]) -> [Mat<f64>; 4] {
    let f = series(d, Some(&identity_f64(d)), grads);
    let a = adjugate(d, &f);
    [0, 1, 2, 3].map(|n| derivative_mat(d, &a, n))
}

/// Fluid quantities of order `n` at one point.
#[derive(Clone, Copy, Debug)]
struct FluidPoint {
    /// `d^n [grad w (a a^T)]`
    phi: Mat<f64>,
    /// `[i][k] = sum_{k>=1} C(n,k) d^k a^k_i q_{n-k}`
    pres: Mat<f64>,
    s: f64,
    force: Point,
}

#[derive(Clone, Copy, Debug)]
struct SolidPoint {
    stress: Mat<f64>,
    force: Point,
}

impl CompatContext<'_> {
    fn dim(&self) -> usize {
        self.mesh.dim
    }

    /// `grads` and `vals` hold `u0 .. w_n` at the point, `qs` holds `q_0 .. q_{n-1}`.
    fn fluid_point(&self, n: usize, grads: &[Mat<f64>], vals: &[Point], qs: &[f64], x: &Point) -> FluidPoint {
        let d = self.dim();
        let f = series(d, Some(&identity_f64(d)), &grads[..grads.len().min(3)]);
        let gw = series(d, None, grads);
        let a = adjugate(d, &f);
        let phi = viscous_flux(d, 1.0, &a, &gw);
        let qj = Jet::from_derivatives(qs);
        let mut pres = [[0.0; MAX_DIM]; MAX_DIM];
        let mut s = Jet::zero();
        for i in 0..d {
            for k in 0..d {
                pres[i][k] = (a[k][i] * qj).derivative(n);
                s += a[k][i] * gw[i][k];
            }
        }
        let mut eta = [Jet::zero(); MAX_DIM];
        for i in 0..d {
            let mut der = vec![x[i]];
            der.extend(vals.iter().take(3).map(|v| v[i]));
            eta[i] = Jet::from_derivatives(&der);
        }
        let fj = self.force.eval(d, Jet::time(), &eta);
        let mut force = [0.0; MAX_DIM];
        for i in 0..d {
            force[i] = fj[i].derivative(n);
        }
        FluidPoint {
            phi: derivative_mat(d, &phi, n),
            pres,
            s: s.derivative(n + 1),
            force,
        }
    }

    fn solid_point(&self, n: usize, grads: &[Mat<f64>], x: &Point) -> SolidPoint {
        let d = self.dim();
        let f = series(d, Some(&identity_f64(d)), &grads[..grads.len().min(3)]);
        let p = elastic_flux(&self.elasticity, &f);
        let mut xj = [Jet::zero(); MAX_DIM];
        for i in 0..d {
            xj[i] = Jet::constant(x[i]);
        }
        let fj = self.force.eval(d, Jet::time(), &xj);
        let mut force = [0.0; MAX_DIM];
        for i in 0..d {
            force[i] = fj[i].derivative(n);
        }
        SolidPoint {
            stress: derivative_mat(d, &p, n),
            force,
        }
    }
}

/// Divergence of a flux on one phase: weak form over lumped mass at
/// phase-interior nodes, recovered divergence of the nodal flux elsewhere.
fn phase_divergence(mesh: &PhaseMesh, phase: Phase, gauss: &TensorField, nodal: &[Mat<f64>]) -> VectorField {
    let d = mesh.dim;
    let weak = assemble_flux(mesh, gauss);
    let mass = mesh.lumped_mass(PhaseSelector::from(phase));
    let mut out = recover_divergence(mesh, phase, nodal);
    for n in 0..mesh.num_nodes() {
        if mesh.is_phase_interior(n, phase) {
            for i in 0..d {
                out.values[n * d + i] = -weak.values[n * d + i] / mass[n];
            }
        } else if !mesh.node_in(n, phase) {
            for i in 0..d {
                out.values[n * d + i] = 0.0;
            }
        }
    }
    out
}

/// Unit normal (into the solid) at each interface node, averaged over the
/// adjacent interface facets.
pub fn interface_node_normals(mesh: &PhaseMesh) -> Vec<Option<Point>> {
    let mut acc = vec![[0.0; MAX_DIM]; mesh.num_nodes()];
    let mut hit = vec![false; mesh.num_nodes()];
    for f in &mesh.interface_facets {
        for &n in &f.nodes {
            for k in 0..mesh.dim {
                acc[n][k] += f.normal[k];
            }
            hit[n] = true;
        }
    }
    acc.into_iter()
        .zip(hit)
        .map(|(v, h)| {
            if !h {
                return None;
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                None
            } else {
                Some(v.map(|x| x / norm))
            }
        })
        .collect()
}

/// Everything needed at order `n` before the pressure solve.
struct OrderData {
    v: VectorField,
    s_gauss: Vec<f64>,
    fluid_nodal: Vec<Option<FluidPoint>>,
    solid_nodal: Vec<Option<SolidPoint>>,
    solid_div: VectorField,
}

impl CompatContext<'_> {
    fn evaluate_order(
        &self,
        n: usize,
        fluid_jet: &[VectorField],
        solid_jet: &[VectorField],
        qs: &[Vec<f64>],
    ) -> Result<OrderData> {
        let mesh = self.mesh;
        let d = mesh.dim;
        let rule = &mesh.gauss;
        let pg: Vec<Vec<Point>> = rule.ref_grads.iter().map(|g| mesh.physical_grads(g)).collect();
        let nn = mesh.num_nodes();

        // fluid: Gauss-point and nodal evaluations
        let fluid_cells: Vec<usize> = mesh.cells_in(PhaseSelector::Fluid).collect();
        let mut flux_g = Vec::with_capacity(fluid_cells.len() * rule.len());
        let mut s_gauss = Vec::with_capacity(fluid_cells.len() * rule.len());
        for &c in &fluid_cells {
            for q in 0..rule.len() {
                let grads: Vec<Mat<f64>> = fluid_jet.iter().map(|w| cell_gradient(mesh, w, c, &pg[q])).collect();
                let vals: Vec<Point> = fluid_jet.iter().map(|w| interpolate_vector(mesh, w, c, &rule.values[q])).collect();
                let qv: Vec<f64> = qs.iter().map(|p| interpolate_scalar(mesh, p, c, &rule.values[q])).collect();
                let x = mesh.map_point(c, &rule.points[q]);
                let fp = self.fluid_point(n, &grads, &vals, &qv, &x);
                flux_g.push(fluid_total_flux(d, self.nu, &fp));
                s_gauss.push(fp.s);
            }
        }
        let rg: Vec<_> = fluid_jet.iter().map(|w| recover_vector_gradient(mesh, Phase::Fluid, w)).collect();
        let mut fluid_nodal = vec![None; nn];
        let mut flux_n = vec![[[0.0; MAX_DIM]; MAX_DIM]; nn];
        let mut v = VectorField::zeros(mesh);
        for node in 0..nn {
            if !mesh.node_in(node, Phase::Fluid) {
                continue;
            }
            let grads: Vec<Mat<f64>> = rg.iter().map(|g| g[node]).collect();
            let vals: Vec<Point> = fluid_jet.iter().map(|w| w.node(node)).collect();
            let qv: Vec<f64> = qs.iter().map(|p| p[node]).collect();
            let fp = self.fluid_point(n, &grads, &vals, &qv, &mesh.nodes[node]);
            flux_n[node] = fluid_total_flux(d, self.nu, &fp);
            for i in 0..d {
                v.values[node * d + i] = fp.force[i];
            }
            fluid_nodal[node] = Some(fp);
        }
        if !fluid_cells.is_empty() {
            let gauss = TensorField {
                dim: d,
                phase: PhaseSelector::Fluid,
                sampling: Sampling::Gauss,
                cells: fluid_cells,
                points_per_cell: rule.len(),
                values: flux_g,
            };
            let div = phase_divergence(mesh, Phase::Fluid, &gauss, &flux_n);
            v.axpy(1.0, &div);
        }

        // solid
        let solid_cells: Vec<usize> = mesh.cells_in(PhaseSelector::Solid).collect();
        let mut solid_nodal = vec![None; nn];
        let mut solid_div = VectorField::zeros(mesh);
        if !solid_cells.is_empty() {
            let mut stress_g = Vec::with_capacity(solid_cells.len() * rule.len());
            for &c in &solid_cells {
                for q in 0..rule.len() {
                    let grads: Vec<Mat<f64>> = solid_jet.iter().map(|w| cell_gradient(mesh, w, c, &pg[q])).collect();
                    let x = mesh.map_point(c, &rule.points[q]);
                    stress_g.push(self.solid_point(n, &grads, &x).stress);
                }
            }
            let rgs: Vec<_> = solid_jet.iter().map(|w| recover_vector_gradient(mesh, Phase::Solid, w)).collect();
            let mut stress_n = vec![[[0.0; MAX_DIM]; MAX_DIM]; nn];
            for node in 0..nn {
                if !mesh.node_in(node, Phase::Solid) {
                    continue;
                }
                let grads: Vec<Mat<f64>> = rgs.iter().map(|g| g[node]).collect();
                let sp = self.solid_point(n, &grads, &mesh.nodes[node]);
                stress_n[node] = sp.stress;
                for i in 0..d {
                    solid_div.values[node * d + i] = sp.force[i];
                }
                solid_nodal[node] = Some(sp);
            }
            let gauss = TensorField {
                dim: d,
                phase: PhaseSelector::Solid,
                sampling: Sampling::Gauss,
                cells: solid_cells,
                points_per_cell: rule.len(),
                values: stress_g,
            };
            let div = phase_divergence(mesh, Phase::Solid, &gauss, &stress_n);
            solid_div.axpy(1.0, &div);
        }
        Ok(OrderData {
            v,
            s_gauss,
            fluid_nodal,
            solid_nodal,
            solid_div,
        })
    }

    fn pressure_matrix(&self) -> CsrMatrix {
        let mesh = self.mesh;
        let d = mesh.dim;
        let rule = &mesh.gauss;
        let pg: Vec<Vec<Point>> = rule.ref_grads.iter().map(|g| mesh.physical_grads(g)).collect();
        let npc = mesh.nodes_per_cell();
        let vol = mesh.cell_volume();
        let mut ke = vec![vec![0.0; npc]; npc];
        for (q, g) in pg.iter().enumerate() {
            for a in 0..npc {
                for b in 0..npc {
                    let dotp: f64 = (0..d).map(|k| g[a][k] * g[b][k]).sum();
                    ke[a][b] += rule.weights[q] * vol * dotp;
                }
            }
        }
        let mut trip = Vec::new();
        for c in mesh.cells_in(PhaseSelector::Fluid) {
            for (a, &na) in mesh.cells[c].iter().enumerate() {
                for (b, &nb) in mesh.cells[c].iter().enumerate() {
                    trip.push((na, nb, ke[a][b]));
                }
            }
        }
        CsrMatrix::from_triplets(mesh.num_nodes(), mesh.num_nodes(), trip)
    }

    /// Solve for `q_n` given the order data.
    fn solve_pressure(&self, n: usize, od: &OrderData, qs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mesh = self.mesh;
        if !mesh.has_phase(Phase::Fluid) {
            return Err(FsiError::Phase("mesh has no fluid cells".into()));
        }
        let d = mesh.dim;
        let rule = &mesh.gauss;
        let pg: Vec<Vec<Point>> = rule.ref_grads.iter().map(|g| mesh.physical_grads(g)).collect();
        let vol = mesh.cell_volume();
        let mut rhs = vec![0.0; mesh.num_nodes()];
        for (ci, c) in mesh.cells_in(PhaseSelector::Fluid).enumerate() {
            for q in 0..rule.len() {
                let vq = interpolate_vector(mesh, &od.v, c, &rule.values[q]);
                let sq = od.s_gauss[ci * rule.len() + q];
                let w = rule.weights[q] * vol;
                for (a, &na) in mesh.cells[c].iter().enumerate() {
                    let vg: f64 = (0..d).map(|k| vq[k] * pg[q][a][k]).sum();
                    rhs[na] += w * (vg - sq * rule.values[q][a]);
                }
            }
        }
        let mut sys = SparseSystem::new(self.pressure_matrix(), rhs);
        let normals = interface_node_normals(mesh);
        for node in 0..mesh.num_nodes() {
            if !mesh.node_in(node, Phase::Fluid) {
                sys.dirichlet.insert(node, 0.0);
            } else if mesh.is_interface_node(node) {
                let val = match &self.boundary {
                    PressureBoundary::Prescribed(p) => p(n, &mesh.nodes[node]),
                    PressureBoundary::Traction => {
                        let nrm = normals[node].unwrap_or([0.0; MAX_DIM]);
                        let fp = od.fluid_nodal[node].expect("fluid node");
                        let sp = od.solid_nodal[node].expect("solid node");
                        normal_traction_jump(d, self.nu, &fp, &sp, &nrm)
                    }
                };
                sys.dirichlet.insert(node, val);
            }
        }
        if !mesh.has_phase(Phase::Solid) {
            // pure Neumann: fix the additive constant at the first fluid node
            let first = (0..mesh.num_nodes()).find(|&k| mesh.node_in(k, Phase::Fluid)).unwrap();
            let val = match &self.boundary {
                PressureBoundary::Prescribed(p) => p(n, &mesh.nodes[first]),
                PressureBoundary::Traction => 0.0,
            };
            sys.dirichlet.insert(first, val);
        }
        let _ = qs;
        let maxit = 20 * mesh.num_nodes() + 100;
        let (q, rep) = solve_spd(&sys, self.cg_tol, maxit)?;
        if !rep.converged {
            return Err(FsiError::Linear(format!(
                "pressure solve of order {n} stalled at residual {:e}",
                rep.residual
            )));
        }
        Ok(q)
    }

    fn velocity_sides(&self, od: &OrderData, qn: &[f64]) -> (VectorField, VectorField) {
        let mesh = self.mesh;
        let d = mesh.dim;
        let gq = recover_gradient(mesh, Phase::Fluid, qn);
        let mut wf = od.v.clone();
        for node in 0..mesh.num_nodes() {
            if mesh.node_in(node, Phase::Fluid) {
                for i in 0..d {
                    wf.values[node * d + i] -= gq[node][i];
                }
            }
        }
        (wf, od.solid_div.clone())
    }
}

fn fluid_total_flux(d: usize, nu: f64, fp: &FluidPoint) -> Mat<f64> {
    let mut t = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..d {
        for j in 0..d {
            t[i][j] = nu * fp.phi[i][j] - fp.pres[i][j];
        }
    }
    t
}

fn mat_vec(d: usize, m: &Mat<f64>, v: &Point) -> Point {
    let mut out = [0.0; MAX_DIM];
    for i in 0..d {
        for j in 0..d {
            out[i] += m[i][j] * v[j];
        }
    }
    out
}

/// `nu (d^n Phi N).N - (A_n N).N - (d^n P N).N`.
fn normal_traction_jump(d: usize, nu: f64, fp: &FluidPoint, sp: &SolidPoint, nrm: &Point) -> f64 {
    let t = fluid_total_flux(d, nu, fp);
    let tf = mat_vec(d, &t, nrm);
    let ts = mat_vec(d, &sp.stress, nrm);
    (0..d).map(|k| (tf[k] - ts[k]) * nrm[k]).sum()
}

/// Merge the one-sided members: solid values on solid nodes, fluid values
/// elsewhere, zero on the container wall.
fn merge(mesh: &PhaseMesh, wf: &VectorField, ws: &VectorField) -> VectorField {
    let mut w = wf.clone();
    for node in 0..mesh.num_nodes() {
        if mesh.node_in(node, Phase::Solid) {
            w.set_node(node, &ws.node(node));
        }
    }
    w.clear_boundary(mesh);
    w
}

fn check_u0(ctx: &CompatContext<'_>, u0: &VectorField) -> Result<()> {
    u0.check(ctx.mesh)?;
    if !ctx.mesh.has_phase(Phase::Fluid) {
        return Err(FsiError::Phase("mesh has no fluid cells".into()));
    }
    Ok(())
}

/// `q0`: `lap q0 = div f(0) + a_t(0) : grad u0` in the fluid, with
/// `q0 = nu (grad u0 N).N` on the interface and `dq0/dN = (f(0) + nu lap u0).N` on the wall.
pub fn build_q0(ctx: &CompatContext<'_>, u0: &VectorField) -> Result<Vec<f64>> {
    check_u0(ctx, u0)?;
    let jet = [u0.clone()];
    let od = ctx.evaluate_order(0, &jet, &jet, &[])?;
    ctx.solve_pressure(0, &od, &[])
}

/// `w1 = nu lap u0 - grad q0 + f(0)` in the fluid and `f(0)` in the solid.
/// Returns `(merged, fluid side, solid side)`.
pub fn build_w1(ctx: &CompatContext<'_>, u0: &VectorField, q0: &[f64]) -> Result<(VectorField, VectorField, VectorField)> {
    check_u0(ctx, u0)?;
    let jet = [u0.clone()];
    let od = ctx.evaluate_order(0, &jet, &jet, &[])?;
    let (wf, ws) = ctx.velocity_sides(&od, q0);
    Ok((merge(ctx.mesh, &wf, &ws), wf, ws))
}

/// One step of the hierarchy: given `u0 .. w_n` (one-sided) and `q_0 .. q_{n-1}`,
/// returns `q_n` and the one-sided `w_{n+1}`.
pub fn hierarchy_step(
    ctx: &CompatContext<'_>,
    fluid_jet: &[VectorField],
    solid_jet: &[VectorField],
    qs: &[Vec<f64>],
) -> Result<(Vec<f64>, VectorField, VectorField)> {
    let n = qs.len();
    if fluid_jet.len() != n + 1 || solid_jet.len() != n + 1 || n > 2 {
        return Err(FsiError::Shape(format!(
            "hierarchy order {n} needs {} velocity members",
            n + 1
        )));
    }
    let od = ctx.evaluate_order(n, fluid_jet, solid_jet, qs)?;
    let qn = ctx.solve_pressure(n, &od, qs)?;
    let (wf, ws) = ctx.velocity_sides(&od, &qn);
    Ok((qn, wf, ws))
}

/// `(q1, q2)`. The second member needs `w2`, which is built on the way.
pub fn build_pressure_hierarchy(
    ctx: &CompatContext<'_>,
    u0: &VectorField,
    w1: (&VectorField, &VectorField),
    q0: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let fj = [u0.clone(), w1.0.clone()];
    let sj = [u0.clone(), w1.1.clone()];
    let qs = [q0.to_vec()];
    let (q1, w2f, w2s) = hierarchy_step(ctx, &fj, &sj, &qs)?;
    let fj = [u0.clone(), w1.0.clone(), w2f];
    let sj = [u0.clone(), w1.1.clone(), w2s];
    let (q2, _, _) = hierarchy_step(ctx, &fj, &sj, &[q0.to_vec(), q1.clone()])?;
    Ok((q1, q2))
}

/// `(w2, w3)` as one-sided pairs `(fluid, solid)`.
pub fn build_velocity_hierarchy(
    ctx: &CompatContext<'_>,
    u0: &VectorField,
    w1: (&VectorField, &VectorField),
    q: [&[f64]; 3],
) -> Result<((VectorField, VectorField), (VectorField, VectorField))> {
    let mesh = ctx.mesh;
    let fj = [u0.clone(), w1.0.clone()];
    let sj = [u0.clone(), w1.1.clone()];
    let od = ctx.evaluate_order(1, &fj, &sj, &[q[0].to_vec()])?;
    let (w2f, w2s) = ctx.velocity_sides(&od, q[1]);
    let fj = [u0.clone(), w1.0.clone(), w2f.clone()];
    let sj = [u0.clone(), w1.1.clone(), w2s.clone()];
    let od = ctx.evaluate_order(2, &fj, &sj, &[q[0].to_vec(), q[1].to_vec()])?;
    let (w3f, w3s) = ctx.velocity_sides(&od, q[2]);
    let _ = mesh;
    Ok(((w2f, w2s), (w3f, w3s)))
}

/// Build the whole hierarchy from `u0`.
pub fn build_compat(ctx: &CompatContext<'_>, u0: &VectorField) -> Result<CompatData> {
    let mesh = ctx.mesh;
    check_u0(ctx, u0)?;
    let mut fj = vec![u0.clone()];
    let mut sj = vec![u0.clone()];
    let mut qs: Vec<Vec<f64>> = Vec::new();
    for _ in 0..3 {
        let (qn, wf, ws) = hierarchy_step(ctx, &fj, &sj, &qs)?;
        qs.push(qn);
        fj.push(wf);
        sj.push(ws);
    }
    let w = [1, 2, 3].map(|k| merge(mesh, &fj[k], &sj[k]));
    Ok(CompatData {
        u0: u0.clone(),
        w,
        w_fluid: [fj[1].clone(), fj[2].clone(), fj[3].clone()],
        w_solid: [sj[1].clone(), sj[2].clone(), sj[3].clone()],
        q: [qs[0].clone(), qs[1].clone(), qs[2].clone()],
    })
}

/// `h(t)` and `g(t)` coefficients for `U(t) = u0 + t w1 + t^2/2 w2`, stored
/// in weak form: `h_k = -<[c grad w_k],_j, phi>` with the phase-boundary term
/// dropped, i.e. `int_s c grad w_k : grad phi`, and `g_k = int_Gamma (c grad w_k N) . phi`.
#[derive(Clone, Debug)]
pub struct KappaForcing {
    pub h: [VectorField; 3],
    pub g: [VectorField; 3],
}

impl KappaForcing {
    pub fn new(u0: &VectorField, w1: &VectorField, w2: &VectorField, c: &ElasticityTensor, mesh: &PhaseMesh) -> Result<Self> {
        if !mesh.has_phase(Phase::Solid) {
            let z = VectorField::zeros(mesh);
            return Ok(KappaForcing {
                h: [z.clone(), z.clone(), z.clone()],
                g: [z.clone(), z.clone(), z],
            });
        }
        let mut h = Vec::new();
        let mut g = Vec::new();
        for w in [u0, w1, w2] {
            h.push(linear_l_tilde(w, c, mesh)?.weak.scaled(-1.0));
            g.push(interface_flux(w, c, mesh)?.weak(mesh));
        }
        Ok(KappaForcing {
            h: [h[0].clone(), h[1].clone(), h[2].clone()],
            g: [g[0].clone(), g[1].clone(), g[2].clone()],
        })
    }

    fn combine(parts: &[VectorField; 3], t: f64) -> VectorField {
        let mut out = parts[0].clone();
        out.axpy(t, &parts[1]);
        out.axpy(0.5 * t * t, &parts[2]);
        out
    }

    pub fn h_at(&self, t: f64) -> VectorField {
        Self::combine(&self.h, t)
    }

    pub fn g_at(&self, t: f64) -> VectorField {
        Self::combine(&self.g, t)
    }

    pub fn is_zero(&self) -> bool {
        self.h.iter().chain(self.g.iter()).all(|f| f.max_abs() == 0.0)
    }
}

/// `[c^{ijkl} w^k,_l] N_j` on the interface from the solid side.
pub fn interface_flux(w: &VectorField, c: &ElasticityTensor, mesh: &PhaseMesh) -> Result<InterfaceField> {
    let samples = facet_samples(mesh)?;
    let d = mesh.dim;
    let values = samples
        .iter()
        .map(|s| {
            let g = crate::operators::gradient_at(mesh, w, s.solid_cell, &s.xi_solid);
            let sig = c.apply(&g);
            mat_vec(d, &sig, &s.normal)
        })
        .collect();
    Ok(InterfaceField { samples, values })
}

/// `(h(t), g(t))` in weak form.
pub fn forcing_hg(
    t: f64,
    u0: &VectorField,
    w1: &VectorField,
    w2: &VectorField,
    c: &ElasticityTensor,
    mesh: &PhaseMesh,
) -> Result<(VectorField, VectorField)> {
    let k = KappaForcing::new(u0, w1, w2, c, mesh)?;
    Ok((k.h_at(t), k.g_at(t)))
}

/// Maximum violation per compatibility condition.
#[derive(Clone, Debug, PartialEq)]
pub struct CompatReport {
    /// `|[grad u0 N]_tan|` on the interface.
    pub c1_shear: f64,
    /// `|w1|`, `|w2|` on the container wall before they are zeroed.
    pub c1_wall: f64,
    /// `|nu lap u0 - grad q0 + f(0) - f(0)|` on the interface, i.e. the jump of `w1`.
    pub c1_interface: f64,
    /// Tangential traction balance, first time derivative.
    pub c2: f64,
    /// Tangential traction balance, second time derivative.
    pub c3: f64,
    /// Jump of `w2` across the interface.
    pub c4: f64,
    pub tol: f64,
}

impl CompatReport {
    pub fn max_violation(&self) -> f64 {
        [self.c1_shear, self.c1_wall, self.c1_interface, self.c2, self.c3, self.c4]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn compatible(&self) -> bool {
        self.max_violation() <= self.tol
    }

    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("c1_shear", self.c1_shear),
            ("c1_wall", self.c1_wall),
            ("c1_interface", self.c1_interface),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
        ]
    }
}

fn tangential(d: usize, v: &Point, nrm: &Point) -> f64 {
    let vn: f64 = (0..d).map(|k| v[k] * nrm[k]).sum();
    (0..d).map(|k| (v[k] - vn * nrm[k]).powi(2)).sum::<f64>().sqrt()
}

/// Evaluate the compatibility conditions for a built hierarchy.
pub fn check_compatibility(ctx: &CompatContext<'_>, data: &CompatData) -> Result<CompatReport> {
    let mesh = ctx.mesh;
    let d = mesh.dim;
    let mut rep = CompatReport {
        c1_shear: 0.0,
        c1_wall: 0.0,
        c1_interface: 0.0,
        c2: 0.0,
        c3: 0.0,
        c4: 0.0,
        tol: ctx.tol,
    };
    for node in 0..mesh.num_nodes() {
        if mesh.boundary_node[node] {
            for w in &data.w_fluid[..2] {
                let v = w.node(node);
                rep.c1_wall = rep.c1_wall.max(v[..d].iter().fold(0.0, |m, x| m.max(x.abs())));
            }
        }
        if mesh.is_interface_node(node) {
            for (k, slot) in [(0, &mut rep.c1_interface), (1, &mut rep.c4)] {
                let a = data.w_fluid[k].node(node);
                let b = data.w_solid[k].node(node);
                let jump = (0..d).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
                *slot = slot.max(jump);
            }
        }
    }
    if mesh.interface_facets.is_empty() {
        return Ok(rep);
    }
    let samples = facet_samples(mesh)?;
    let rule_grads = |xi: &Point| mesh.physical_grads(&crate::mesh::shape_ref_grads(d, xi));
    let fj = [data.u0.clone(), data.w_fluid[0].clone(), data.w_fluid[1].clone()];
    let sj = [data.u0.clone(), data.w_solid[0].clone(), data.w_solid[1].clone()];
    for s in &samples {
        let gf = rule_grads(&s.xi_fluid);
        let gs = rule_grads(&s.xi_solid);
        let shape_f = crate::mesh::shape_values(d, &s.xi_fluid);
        let grad_u0 = cell_gradient(mesh, &data.u0, s.fluid_cell, &gf);
        rep.c1_shear = rep.c1_shear.max(tangential(d, &mat_vec(d, &grad_u0, &s.normal), &s.normal));
        for (n, slot) in [(1usize, &mut rep.c2), (2usize, &mut rep.c3)] {
            let grads_f: Vec<Mat<f64>> = fj[..=n].iter().map(|w| cell_gradient(mesh, w, s.fluid_cell, &gf)).collect();
            let vals: Vec<Point> = fj[..=n].iter().map(|w| interpolate_vector(mesh, w, s.fluid_cell, &shape_f)).collect();
            let qv: Vec<f64> = data.q[..n].iter().map(|q| interpolate_scalar(mesh, q, s.fluid_cell, &shape_f)).collect();
            let fp = ctx.fluid_point(n, &grads_f, &vals, &qv, &s.x);
            let grads_s: Vec<Mat<f64>> = sj[..=n].iter().map(|w| cell_gradient(mesh, w, s.solid_cell, &gs)).collect();
            let sp = ctx.solid_point(n, &grads_s, &s.x);
            let t = fluid_total_flux(d, ctx.nu, &fp);
            let tf = mat_vec(d, &t, &s.normal);
            let ts = mat_vec(d, &sp.stress, &s.normal);
            let mut diff = [0.0; MAX_DIM];
            for k in 0..d {
                diff[k] = tf[k] - ts[k];
            }
            *slot = slot.max(tangential(d, &diff, &s.normal));
        }
    }
    Ok(rep)
}

/// Time derivative of `a^j_i u^i,_j`-type sources: `d a(Id + t u)/dt` at zero,
/// per fluid Gauss point, contracted with `grad u`. Used to expose the
/// right-hand side of the `q0` problem.
pub fn q0_source(ctx: &CompatContext<'_>, u0: &VectorField) -> Result<Vec<f64>> {
    let jet = [u0.clone()];
    let od = ctx.evaluate_order(0, &jet, &jet, &[])?;
    Ok(od.s_gauss)
}

/// Solid displacement `eta - Id` helper re-exported for the stepper's checks.
pub fn solid_displacement(eta: &VectorField, mesh: &PhaseMesh) -> VectorField {
    displacement(eta, mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::adjugate;
    use crate::mesh::{build_mesh, GeometrySpec};

    fn ctx(mesh: &PhaseMesh, force: BodyForce) -> CompatContext<'_> {
        CompatContext::new(mesh, 0.5, ElasticityTensor::new(2.0, 1.0, mesh.dim).unwrap(), force)
    }

    #[test]
    fn zero_data_gives_zero_hierarchy() {
        let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 0.125)).unwrap();
        let c = ctx(&mesh, BodyForce::Zero);
        let data = build_compat(&c, &VectorField::zeros(&mesh)).unwrap();
        for w in &data.w {
            assert_eq!(w.max_abs(), 0.0);
        }
        for q in &data.q {
            assert!(q.iter().all(|x| *x == 0.0));
        }
        let rep = check_compatibility(&c, &data).unwrap();
        assert_eq!(rep.max_violation(), 0.0);
    }

    #[test]
    fn constant_force_passes_to_w1() {
        let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 0.125)).unwrap();
        let c = ctx(&mesh, BodyForce::Uniform { value: [0.3, -0.2, 0.0], power: 0 });
        let u0 = VectorField::zeros(&mesh);
        let q0 = build_q0(&c, &u0).unwrap();
        // dq0/dN = f.N on the wall with q0 = 0 on the interface is not constant-free;
        // the fluid w1 = f - grad q0 equals f only where q0 is flat, the solid one exactly
        let (_, _, ws) = build_w1(&c, &u0, &q0).unwrap();
        for n in 0..mesh.num_nodes() {
            if mesh.node_in(n, Phase::Solid) {
                assert!((ws.values[2 * n] - 0.3).abs() < 1e-14);
                assert!((ws.values[2 * n + 1] + 0.2).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cofactor_rate_matches_differences() {
        let g0 = [[0.3, -0.7, 0.2], [1.1, 0.4, -0.5], [0.6, 0.9, -0.8]];
        let g1 = [[-0.2, 0.5, 0.1], [0.3, -0.6, 0.4], [0.7, 0.2, 0.3]];
        let jet = cofactor_jet(3, &[g0, g1]);
        let h = 1e-4;
        let at = |t: f64| {
            let mut f = identity_f64(3);
            for i in 0..3 {
                for j in 0..3 {
                    f[i][j] += t * g0[i][j] + 0.5 * t * t * g1[i][j];
                }
            }
            adjugate(3, &f)
        };
        let (p, m, z) = (at(h), at(-h), at(0.0));
        for i in 0..3 {
            for j in 0..3 {
                let d1 = (p[i][j] - m[i][j]) / (2.0 * h);
                let d2 = (p[i][j] - 2.0 * z[i][j] + m[i][j]) / (h * h);
                assert!((d1 - jet[1][i][j]).abs() < 1e-6);
                assert!((d2 - jet[2][i][j]).abs() < 1e-5);
            }
        }
    }
}
