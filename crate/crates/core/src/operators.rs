//! Elasticity tensor, linearized and St. Venant-Kirchhoff operators, interface
//! traction and the Lagrangian fluid operators.
//!
//! Every operator is realized in weak form. An [`OperatorOutput`] stores
//! `<T, phi_A>` for each nodal test function after integration by parts over
//! the cells of its phase; the flux terms on the phase boundary are dropped.
//! Pointwise strong values are recovered at phase-interior nodes by dividing by
//! the lumped mass.

use crate::error::{FsiError, Result};
use crate::field::VectorField;
use crate::kinematics::{
    adjugate, cell_gradient, contract_ak_i, deformation_gradient, displacement, gradient, identity, matmul, strain_offset, trace,
    transpose, zero_mat, CofactorField, Mat, Sampling, TensorField,
};
use crate::mesh::{shape_ref_grads, shape_values, Phase, PhaseMesh, PhaseSelector, Point, MAX_DIM};
use crate::scalar::Scalar;

/// Isotropic elasticity tensor
/// `c^{ijkl} = lambda delta^{ij} delta^{kl} + mu (delta^{ik} delta^{jl} + delta^{il} delta^{jk})`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElasticityTensor {
    pub lambda: f64,
    pub mu: f64,
    pub dim: usize,
}

impl ElasticityTensor {
    pub fn new(lambda: f64, mu: f64, dim: usize) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(FsiError::Param {
                field: "lambda".into(),
                reason: "must be positive".into(),
            });
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(FsiError::Param {
                field: "mu".into(),
                reason: "must be positive".into(),
            });
        }
        if dim != 2 && dim != 3 {
            return Err(FsiError::Geometry(format!("dimension {dim} not in {{2, 3}}")));
        }
        Ok(ElasticityTensor { lambda, mu, dim })
    }

    /// `c^{ijkl}` with zero-based indices.
    pub fn component(&self, i: usize, j: usize, k: usize, l: usize) -> Result<f64> {
        if [i, j, k, l].iter().any(|&x| x >= self.dim) {
            return Err(FsiError::Index(format!(
                "({i},{j},{k},{l}) outside 0..{}",
                self.dim
            )));
        }
        let dl = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        Ok(self.lambda * dl(i, j) * dl(k, l) + self.mu * (dl(i, k) * dl(j, l) + dl(i, l) * dl(j, k)))
    }

    /// `c^{ijkl} g_{kl} = lambda tr(g) I + mu (g + g^T)`.
    pub fn apply<S: Scalar>(&self, g: &Mat<S>) -> Mat<S> {
        let d = self.dim;
        let tr = trace(d, g) * self.lambda;
        let mut out = zero_mat();
        for i in 0..d {
            for j in 0..d {
                out[i][j] = (g[i][j] + g[j][i]) * self.mu;
            }
            out[i][i] += tr;
        }
        out
    }
}

/// `c^{ijkl} G^k_l`, the flux of the un-symmetrized bracket `[c^{ijkl} u^k,_l],_j`.
pub fn linear_flux<S: Scalar>(c: &ElasticityTensor, g: &Mat<S>) -> Mat<S> {
    c.apply(g)
}

/// First Piola-type stress `P = F (c : (F^T F - I))`; `N(eta) = -div P`.
pub fn elastic_flux<S: Scalar>(c: &ElasticityTensor, f: &Mat<S>) -> Mat<S> {
    let d = c.dim;
    let sigma = c.apply(&strain_offset(d, f));
    matmul(d, f, &sigma)
}

/// Stored energy density `1/4 c^{ijkl} S_ij S_kl` with `S = F^T F - I`.
pub fn elastic_energy_density<S: Scalar>(c: &ElasticityTensor, f: &Mat<S>) -> S {
    let d = c.dim;
    let s = strain_offset(d, f);
    let cs = c.apply(&s);
    let mut e = S::zero();
    for i in 0..d {
        for j in 0..d {
            e += cs[i][j] * s[i][j];
        }
    }
    e * 0.25
}

/// Viscous flux `nu a^j_l a^k_l v^i,_k`, indexed `[i][j]`.
pub fn viscous_flux<S: Scalar>(d: usize, nu: f64, a: &Mat<S>, gv: &Mat<S>) -> Mat<S> {
    let b = matmul(d, a, &transpose(d, a));
    let mut out = matmul(d, gv, &b);
    for row in out.iter_mut().take(d) {
        for x in row.iter_mut().take(d) {
            *x = *x * nu;
        }
    }
    out
}

/// Flux of the pressure term `(a^k_i q),_k` after integration by parts: `-q a^T`.
pub fn pressure_flux<S: Scalar>(d: usize, q: S, a: &Mat<S>) -> Mat<S> {
    let mut out = zero_mat();
    for i in 0..d {
        for k in 0..d {
            out[i][k] = -(q * a[k][i]);
        }
    }
    out
}

/// A vector-valued operator in weak form.
#[derive(Clone, Debug)]
pub struct OperatorOutput {
    pub phase: PhaseSelector,
    /// `weak.values[A * d + i] = <T^i, phi_A>`.
    pub weak: VectorField,
}

impl OperatorOutput {
    /// Pointwise values at nodes interior to the phase (and off the container
    /// boundary); zero elsewhere.
    pub fn strong(&self, mesh: &PhaseMesh) -> VectorField {
        let d = mesh.dim;
        let mass = mesh.lumped_mass(self.phase);
        let mut out = VectorField::zeros(mesh);
        for n in 0..mesh.num_nodes() {
            let interior = match self.phase {
                PhaseSelector::Fluid => mesh.is_phase_interior(n, Phase::Fluid),
                PhaseSelector::Solid => mesh.is_phase_interior(n, Phase::Solid),
                PhaseSelector::Both => !mesh.boundary_node[n],
            };
            if interior {
                for i in 0..d {
                    out.values[n * d + i] = self.weak.values[n * d + i] / mass[n];
                }
            }
        }
        out
    }

    /// `sum_A phi_A . weak_A` for a nodal test field.
    pub fn pair(&self, phi: &VectorField) -> f64 {
        self.weak.values.iter().zip(&phi.values).map(|(a, b)| a * b).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.weak.values.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(FsiError::NonFinite("operator output".into()))
        }
    }
}

/// `weak[A][i] = sum_q w_q T^i_j(x_q) phi_A,_j(x_q)` for a flux sampled on a
/// [`TensorField`] layout.
pub fn assemble_flux(mesh: &PhaseMesh, flux: &TensorField) -> VectorField {
    let d = mesh.dim;
    let rule = flux.sampling.rule(mesh);
    let grads: Vec<Vec<Point>> = rule.ref_grads.iter().map(|g| mesh.physical_grads(g)).collect();
    let vol = mesh.cell_volume();
    let mut out = VectorField::zeros(mesh);
    for (ci, &c) in flux.cells.iter().enumerate() {
        for (q, gq) in grads.iter().enumerate() {
            let t = &flux.values[ci * flux.points_per_cell + q];
            let w = rule.weights[q] * vol;
            for (a, &n) in mesh.cells[c].iter().enumerate() {
                for i in 0..d {
                    let mut s = 0.0;
                    for j in 0..d {
                        s += t[i][j] * gq[a][j];
                    }
                    out.values[n * d + i] += w * s;
                }
            }
        }
    }
    out
}

fn require_phase(mesh: &PhaseMesh, p: Phase) -> Result<()> {
    if mesh.has_phase(p) {
        Ok(())
    } else {
        Err(FsiError::Phase(format!("mesh has no {} cells", p.name())))
    }
}

/// `L(u)^i = [c^{ijkl}(u^k,_l + u^l,_k)],_j` on the solid.
pub fn linear_l(u: &VectorField, c: &ElasticityTensor, mesh: &PhaseMesh) -> Result<OperatorOutput> {
    require_phase(mesh, Phase::Solid)?;
    let g = gradient(u, mesh, PhaseSelector::Solid, Sampling::Gauss)?;
    let flux = g.map(|m| {
        let mut t = linear_flux(c, m);
        for row in t.iter_mut() {
            for x in row.iter_mut() {
                *x *= -2.0;
            }
        }
        t
    });
    Ok(OperatorOutput {
        phase: PhaseSelector::Solid,
        weak: assemble_flux(mesh, &flux),
    })
}

/// Un-symmetrized bracket `[c^{ijkl} u^k,_l],_j` on the solid (equals `L(u) / 2`).
pub fn linear_l_tilde(u: &VectorField, c: &ElasticityTensor, mesh: &PhaseMesh) -> Result<OperatorOutput> {
    let mut out = linear_l(u, c, mesh)?;
    out.weak = out.weak.scaled(0.5);
    Ok(out)
}

/// `N(eta)^i = -c^{mjkl} [(eta,_m . eta,_j - delta_mj) eta^i,_k],_l` on the solid.
pub fn nonlinear_n(eta: &VectorField, c: &ElasticityTensor, mesh: &PhaseMesh) -> Result<OperatorOutput> {
    require_phase(mesh, Phase::Solid)?;
    let g = deformation_gradient(eta, mesh, PhaseSelector::Solid, Sampling::Gauss)?;
    let flux = g.map(|f| elastic_flux(c, f));
    Ok(OperatorOutput {
        phase: PhaseSelector::Solid,
        weak: assemble_flux(mesh, &flux),
    })
}

/// A sample point on the interface, seen from the solid cell.
#[derive(Clone, Debug)]
pub struct FacetSample {
    pub facet: usize,
    pub solid_cell: usize,
    pub fluid_cell: usize,
    /// Reference coordinate inside the solid cell.
    pub xi_solid: Point,
    /// Reference coordinate inside the fluid cell.
    pub xi_fluid: Point,
    pub x: Point,
    pub weight: f64,
    /// Unit normal pointing into the solid.
    pub normal: Point,
}

/// Gauss points of every interface facet.
pub fn facet_samples(mesh: &PhaseMesh) -> Result<Vec<FacetSample>> {
    if mesh.interface_facets.is_empty() {
        return Err(FsiError::Phase("mesh has no interface facets".into()));
    }
    let mut out = Vec::new();
    for (fi, f) in mesh.interface_facets.iter().enumerate() {
        for (xi, w) in mesh.facet_quadrature(f) {
            let mut xf = xi;
            xf[f.axis] = 1.0 - xi[f.axis];
            out.push(FacetSample {
                facet: fi,
                solid_cell: f.solid_cell,
                fluid_cell: f.fluid_cell,
                xi_solid: xi,
                xi_fluid: xf,
                x: mesh.map_point(f.solid_cell, &xi),
                weight: w,
                normal: f.normal,
            });
        }
    }
    Ok(out)
}

/// Gradient of a nodal field at a reference point of a cell.
pub fn gradient_at(mesh: &PhaseMesh, field: &VectorField, c: usize, xi: &Point) -> Mat<f64> {
    let grads = mesh.physical_grads(&shape_ref_grads(mesh.dim, xi));
    cell_gradient(mesh, field, c, &grads)
}

/// Pointwise vector values on the interface facet samples.
#[derive(Clone, Debug)]
pub struct InterfaceField {
    pub samples: Vec<FacetSample>,
    pub values: Vec<Point>,
}

impl InterfaceField {
    /// `weak[A] = int_Gamma value . phi_A`, with `phi_A` traced from the solid side.
    pub fn weak(&self, mesh: &PhaseMesh) -> VectorField {
        let d = mesh.dim;
        let mut out = VectorField::zeros(mesh);
        for (s, v) in self.samples.iter().zip(&self.values) {
            let phi = shape_values(d, &s.xi_solid);
            for (a, &n) in mesh.cells[s.solid_cell].iter().enumerate() {
                for i in 0..d {
                    out.values[n * d + i] += s.weight * phi[a] * v[i];
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Interface traction `G(eta)^i = c^{mjkl}[(eta,_m . eta,_j - delta_mj) eta^i,_k] N_l`
/// with the solid-side gradient.
pub fn traction_g(eta: &VectorField, c: &ElasticityTensor, mesh: &PhaseMesh) -> Result<InterfaceField> {
    eta.check(mesh)?;
    let samples = facet_samples(mesh)?;
    let d = mesh.dim;
    let disp = displacement(eta, mesh);
    let values = samples
        .iter()
        .map(|s| {
            let mut f = gradient_at(mesh, &disp, s.solid_cell, &s.xi_solid);
            for (k, row) in f.iter_mut().enumerate().take(d) {
                row[k] += 1.0;
            }
            let p = elastic_flux(c, &f);
            let mut g = [0.0; MAX_DIM];
            for i in 0..d {
                for l in 0..d {
                    g[i] += p[i][l] * s.normal[l];
                }
            }
            g
        })
        .collect();
    Ok(InterfaceField { samples, values })
}

fn check_fluid_cofactor(a: &CofactorField, mesh: &PhaseMesh) -> Result<()> {
    if a.field.phase != PhaseSelector::Fluid {
        return Err(FsiError::Phase("cofactor field must live on the fluid".into()));
    }
    if a.field.dim != mesh.dim {
        return Err(FsiError::Shape("cofactor dimension differs from mesh".into()));
    }
    Ok(())
}

/// `-nu (a^j_l a^k_l v^i,_k),_j` on the fluid, with `a` on the sampling layout it carries.
pub fn fluid_viscous(
    a: &CofactorField,
    v: &VectorField,
    nu: f64,
    mesh: &PhaseMesh,
) -> Result<OperatorOutput> {
    check_fluid_cofactor(a, mesh)?;
    let g = gradient(v, mesh, PhaseSelector::Fluid, a.field.sampling)?;
    let d = mesh.dim;
    let mut flux = g.clone();
    for (t, (am, gm)) in flux.values.iter_mut().zip(a.field.values.iter().zip(&g.values)) {
        *t = viscous_flux(d, nu, am, gm);
    }
    Ok(OperatorOutput {
        phase: PhaseSelector::Fluid,
        weak: assemble_flux(mesh, &flux),
    })
}

/// Pointwise `a^k_i v^i,_k` on the sample points of `a`.
pub fn lagrangian_div(a: &CofactorField, v: &VectorField, mesh: &PhaseMesh) -> Result<Vec<f64>> {
    let g = gradient(v, mesh, a.field.phase, a.field.sampling)?;
    contract_ak_i(a, &g)
}

/// `(a^k_i q),_k` on the fluid, `q` sampled on the layout of `a`.
pub fn pressure_term(a: &CofactorField, q: &[f64], mesh: &PhaseMesh) -> Result<OperatorOutput> {
    check_fluid_cofactor(a, mesh)?;
    if q.len() != a.field.values.len() {
        return Err(FsiError::Shape(format!(
            "pressure has {} samples, cofactor {}",
            q.len(),
            a.field.values.len()
        )));
    }
    let d = mesh.dim;
    let mut flux = a.field.clone();
    for (t, (am, &qv)) in flux.values.iter_mut().zip(a.field.values.iter().zip(q)) {
        *t = pressure_flux(d, qv, am);
    }
    Ok(OperatorOutput {
        phase: PhaseSelector::Fluid,
        weak: assemble_flux(mesh, &flux),
    })
}

/// The pairing `int a^k_i q phi^i,_k` for a nodal test field.
pub fn pressure_pairing(a: &CofactorField, q: &[f64], phi: &VectorField, mesh: &PhaseMesh) -> Result<f64> {
    Ok(-pressure_term(a, q, mesh)?.pair(phi))
}

/// Cofactor of the identity configuration on a phase, for frozen-coefficient use.
pub fn identity_cofactor(mesh: &PhaseMesh, phase: PhaseSelector, sampling: Sampling) -> Result<CofactorField> {
    let eta = VectorField::identity(mesh);
    let g = gradient(&eta, mesh, phase, sampling)?;
    let d = mesh.dim;
    Ok(CofactorField {
        field: g.map(|_| identity(d)),
        nonpositive_det_points: 0,
        min_det: 1.0,
    })
}

/// Cofactor sampled on a layout, as produced by [`crate::kinematics::cofactor`]
/// but computed directly from a configuration.
pub fn cofactor_of(eta: &VectorField, mesh: &PhaseMesh, phase: PhaseSelector, sampling: Sampling) -> Result<CofactorField> {
    let g = deformation_gradient(eta, mesh, phase, sampling)?;
    let d = mesh.dim;
    let mut cf = crate::kinematics::cofactor(&g);
    cf.field = g.map(|m| adjugate(d, m));
    Ok(cf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, GeometrySpec};

    fn ct(d: usize) -> ElasticityTensor {
        ElasticityTensor::new(1.3, 0.7, d).unwrap()
    }

    #[test]
    fn tensor_components() {
        let c = ct(3);
        assert_eq!(c.component(0, 0, 0, 0).unwrap(), 1.3 + 1.4);
        assert_eq!(c.component(0, 0, 1, 1).unwrap(), 1.3);
        assert_eq!(c.component(0, 1, 0, 1).unwrap(), 0.7);
        assert!(c.component(0, 0, 0, 3).is_err());
        assert!(ct(2).component(2, 0, 0, 0).is_err());
    }

    #[test]
    fn apply_matches_components() {
        let c = ct(3);
        let g = [[0.3, -1.1, 0.4], [0.9, 0.2, -0.6], [0.05, 1.7, -0.8]];
        let t = c.apply(&g);
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    for l in 0..3 {
                        s += c.component(i, j, k, l).unwrap() * g[k][l];
                    }
                }
                assert!((t[i][j] - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn linear_operator_of_quadratic() {
        let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 1.0 / 16.0)).unwrap();
        let c = ct(2);
        let u = VectorField::from_fn(&mesh, |x| [x[0] * x[0], 0.0, 0.0]);
        let s = linear_l(&u, &c, &mesh).unwrap().strong(&mesh);
        let mut seen = 0;
        for n in 0..mesh.num_nodes() {
            if mesh.is_phase_interior(n, Phase::Solid) {
                assert!((s.values[2 * n] - 4.0 * (1.3 + 1.4)).abs() < 1e-9);
                assert!(s.values[2 * n + 1].abs() < 1e-9);
                seen += 1;
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn identity_and_dilation_have_no_interior_force() {
        let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 1.0 / 8.0)).unwrap();
        let c = ct(2);
        let id = VectorField::identity(&mesh);
        assert!(nonlinear_n(&id, &c, &mesh).unwrap().weak.max_abs() == 0.0);
        let dil = id.scaled(1.1);
        let s = nonlinear_n(&dil, &c, &mesh).unwrap().strong(&mesh);
        assert!(s.max_abs() < 1e-12);
        assert_eq!(traction_g(&id, &c, &mesh).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn dilation_traction_closed_form() {
        let mesh = build_mesh(&GeometrySpec::centred_box(3, 0.5, 0.25)).unwrap();
        let c = ct(3);
        let alpha: f64 = 1.05;
        let eta = VectorField::identity(&mesh).scaled(alpha);
        let g = traction_g(&eta, &c, &mesh).unwrap();
        let k = alpha * (alpha * alpha - 1.0) * (3.0 * 1.3 + 2.0 * 0.7);
        for (s, v) in g.samples.iter().zip(&g.values) {
            for i in 0..3 {
                assert!((v[i] - k * s.normal[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn viscous_with_identity_cofactor() {
        let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 1.0 / 16.0)).unwrap();
        let a = identity_cofactor(&mesh, PhaseSelector::Fluid, Sampling::Gauss).unwrap();
        let nu = 0.3;
        let v = VectorField::from_fn(&mesh, |x| [x[1] * x[1], 0.0, 0.0]);
        let s = fluid_viscous(&a, &v, nu, &mesh).unwrap().strong(&mesh);
        for n in 0..mesh.num_nodes() {
            if mesh.is_phase_interior(n, Phase::Fluid) {
                assert!((s.values[2 * n] + 2.0 * nu).abs() < 1e-10);
                assert!(s.values[2 * n + 1].abs() < 1e-10);
            }
        }
    }

    #[test]
    fn divergence_of_position_under_dilation() {
        let mesh = build_mesh(&GeometrySpec::centred_box(3, 0.5, 0.25)).unwrap();
        let alpha = 1.2;
        let eta = VectorField::identity(&mesh).scaled(alpha);
        let a = cofactor_of(&eta, &mesh, PhaseSelector::Fluid, Sampling::Gauss).unwrap();
        let v = VectorField::identity(&mesh);
        for x in lagrangian_div(&a, &v, &mesh).unwrap() {
            assert!((x - 3.0 * alpha * alpha).abs() < 1e-12);
        }
    }
}
