//! Nodal fields on a [`PhaseMesh`] and phase-restricted derivative recovery.

use crate::error::{FsiError, Result};
use crate::mesh::{Phase, PhaseMesh, PhaseSelector, Point, MAX_DIM};

/// Nodal vector field, node-major storage (`values[node * dim + component]`).
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl VectorField {
    pub fn zeros(mesh: &PhaseMesh) -> Self {
        VectorField {
            dim: mesh.dim,
            values: vec![0.0; mesh.num_dofs()],
        }
    }

    /// Nodal interpolant of a closed-form field.
    pub fn from_fn(mesh: &PhaseMesh, f: impl Fn(&Point) -> Point) -> Self {
        let d = mesh.dim;
        let mut values = Vec::with_capacity(mesh.num_dofs());
        for x in &mesh.nodes {
            let v = f(x);
            values.extend_from_slice(&v[..d]);
        }
        VectorField { dim: d, values }
    }

    /// The identity configuration `eta(x) = x`.
    pub fn identity(mesh: &PhaseMesh) -> Self {
        Self::from_fn(mesh, |x| *x)
    }

    pub fn num_nodes(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn node(&self, n: usize) -> Point {
        let mut p = [0.0; MAX_DIM];
        p[..self.dim].copy_from_slice(&self.values[n * self.dim..(n + 1) * self.dim]);
        p
    }

    pub fn set_node(&mut self, n: usize, v: &Point) {
        let d = self.dim;
        self.values[n * d..(n + 1) * d].copy_from_slice(&v[..d]);
    }

    pub fn check(&self, mesh: &PhaseMesh) -> Result<()> {
        if self.dim != mesh.dim || self.values.len() != mesh.num_dofs() {
            return Err(FsiError::Shape(format!(
                "vector field of dim {} with {} entries on a {}-d mesh with {} dofs",
                self.dim,
                self.values.len(),
                mesh.dim,
                mesh.num_dofs()
            )));
        }
        Ok(())
    }

    pub fn axpy(&mut self, alpha: f64, other: &VectorField) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> VectorField {
        VectorField {
            dim: self.dim,
            values: self.values.iter().map(|x| alpha * x).collect(),
        }
    }

    /// Zero every node on the container boundary.
    pub fn clear_boundary(&mut self, mesh: &PhaseMesh) {
        for n in 0..mesh.num_nodes() {
            if mesh.boundary_node[n] {
                self.set_node(n, &[0.0; MAX_DIM]);
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Consistent-mass inner product `int_sel u . w` with Gauss quadrature.
pub fn l2_inner(mesh: &PhaseMesh, sel: PhaseSelector, u: &VectorField, w: &VectorField) -> f64 {
    let d = mesh.dim;
    let vol = mesh.cell_volume();
    let mut s = 0.0;
    for c in mesh.cells_in(sel) {
        for (q, shape) in mesh.gauss.values.iter().enumerate() {
            let a = interpolate_vector(mesh, u, c, shape);
            let b = interpolate_vector(mesh, w, c, shape);
            let dotp: f64 = (0..d).map(|k| a[k] * b[k]).sum();
            s += mesh.gauss.weights[q] * vol * dotp;
        }
    }
    s
}

/// `int_sel |grad u|^2` with Gauss quadrature.
pub fn h1_seminorm_sq(mesh: &PhaseMesh, sel: PhaseSelector, u: &VectorField) -> f64 {
    let d = mesh.dim;
    let vol = mesh.cell_volume();
    let grads: Vec<Vec<Point>> = mesh.gauss.ref_grads.iter().map(|g| mesh.physical_grads(g)).collect();
    let mut s = 0.0;
    for c in mesh.cells_in(sel) {
        for (q, gq) in grads.iter().enumerate() {
            let mut g2 = 0.0;
            for i in 0..d {
                for k in 0..d {
                    let mut x = 0.0;
                    for (a, &n) in mesh.cells[c].iter().enumerate() {
                        x += u.values[n * d + i] * gq[a][k];
                    }
                    g2 += x * x;
                }
            }
            s += mesh.gauss.weights[q] * vol * g2;
        }
    }
    s
}

/// Nodal values of one phase, interpolated at a reference point of cell `c`.
pub fn interpolate_scalar(mesh: &PhaseMesh, nodal: &[f64], c: usize, shape: &[f64]) -> f64 {
    mesh.cells[c].iter().zip(shape).map(|(&n, s)| nodal[n] * s).sum()
}

pub fn interpolate_vector(mesh: &PhaseMesh, f: &VectorField, c: usize, shape: &[f64]) -> Point {
    let d = mesh.dim;
    let mut v = [0.0; MAX_DIM];
    for (&n, s) in mesh.cells[c].iter().zip(shape) {
        for k in 0..d {
            v[k] += f.values[n * d + k] * s;
        }
    }
    v
}

/// Gradient of a nodal scalar at every node, averaged over the cell-centre
/// gradients of the adjacent cells belonging to `phase`. Second order at
/// phase-interior nodes of a uniform grid, first order on phase boundaries.
/// Nodes that touch no cell of `phase` get zero.
pub fn recover_gradient(mesh: &PhaseMesh, phase: Phase, nodal: &[f64]) -> Vec<Point> {
    let d = mesh.dim;
    let grads = mesh.physical_grads(&mesh.centre.ref_grads[0]);
    let mut acc = vec![[0.0; MAX_DIM]; mesh.num_nodes()];
    let mut cnt = vec![0usize; mesh.num_nodes()];
    for c in mesh.cells_in(PhaseSelector::from(phase)) {
        let mut g = [0.0; MAX_DIM];
        for (a, &n) in mesh.cells[c].iter().enumerate() {
            for k in 0..d {
                g[k] += nodal[n] * grads[a][k];
            }
        }
        for &n in &mesh.cells[c] {
            for k in 0..d {
                acc[n][k] += g[k];
            }
            cnt[n] += 1;
        }
    }
    for (a, &c) in acc.iter_mut().zip(&cnt) {
        if c > 0 {
            for x in a.iter_mut() {
                *x /= c as f64;
            }
        }
    }
    acc
}

/// Recovered nodal gradient of a vector field: `out[node][i][k] = d v^i / d x_k`.
pub fn recover_vector_gradient(
    mesh: &PhaseMesh,
    phase: Phase,
    f: &VectorField,
) -> Vec<[[f64; MAX_DIM]; MAX_DIM]> {
    let d = mesh.dim;
    let mut out = vec![[[0.0; MAX_DIM]; MAX_DIM]; mesh.num_nodes()];
    for i in 0..d {
        let comp: Vec<f64> = (0..mesh.num_nodes()).map(|n| f.values[n * d + i]).collect();
        let g = recover_gradient(mesh, phase, &comp);
        for n in 0..mesh.num_nodes() {
            out[n][i] = g[n];
        }
    }
    out
}

/// Recovered divergence of a nodal tensor field, `(div T)^i = T^i_j,_j`.
pub fn recover_divergence(
    mesh: &PhaseMesh,
    phase: Phase,
    t: &[[[f64; MAX_DIM]; MAX_DIM]],
) -> VectorField {
    let d = mesh.dim;
    let mut out = VectorField::zeros(mesh);
    for i in 0..d {
        for j in 0..d {
            let comp: Vec<f64> = t.iter().map(|m| m[i][j]).collect();
            let g = recover_gradient(mesh, phase, &comp);
            for n in 0..mesh.num_nodes() {
                out.values[n * d + i] += g[n][j];
            }
        }
    }
    out
}

/// Recovered Laplacian of a vector field (divergence of the recovered gradient).
pub fn recover_laplacian(mesh: &PhaseMesh, phase: Phase, f: &VectorField) -> VectorField {
    let g = recover_vector_gradient(mesh, phase, f);
    recover_divergence(mesh, phase, &g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, GeometrySpec};

    #[test]
    fn recovered_gradient_exact_for_affine() {
        let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 0.125)).unwrap();
        let f: Vec<f64> = mesh.nodes.iter().map(|x| 2.0 * x[0] - 3.0 * x[1] + 1.0).collect();
        for phase in [Phase::Fluid, Phase::Solid] {
            let g = recover_gradient(&mesh, phase, &f);
            for n in 0..mesh.num_nodes() {
                if mesh.node_in(n, phase) {
                    assert!((g[n][0] - 2.0).abs() < 1e-12);
                    assert!((g[n][1] + 3.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn recovered_laplacian_exact_for_quadratic_interior() {
        let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 1.0 / 32.0)).unwrap();
        let f = VectorField::from_fn(&mesh, |x| [x[0] * x[0] + x[0] * x[1], 3.0 * x[1] * x[1], 0.0]);
        let lap = recover_laplacian(&mesh, Phase::Fluid, &f);
        // interior fluid nodes at least two cells from every phase boundary
        let mut checked = 0;
        for n in 0..mesh.num_nodes() {
            let x = mesh.nodes[n];
            let dist_box = (0..2).map(|k| x[k].min(1.0 - x[k])).fold(f64::INFINITY, f64::min);
            let dist_solid = (0..2)
                .map(|k| (x[k] - 0.5).abs() - 0.25)
                .fold(f64::NEG_INFINITY, f64::max);
            if dist_box > 0.07 && dist_solid > 0.07 {
                assert!((lap.values[2 * n] - 2.0).abs() < 1e-10);
                assert!((lap.values[2 * n + 1] - 6.0).abs() < 1e-10);
                checked += 1;
            }
        }
        assert!(checked > 0);
    }
}
