//! Lagrangian kinematics: deformation gradients, the cofactor matrix
//! `a = [Cof grad eta]^T`, the Jacobian determinant and the Green strain offset.
//!
//! Index convention: `F[i][j] = d eta^i / d x_j` and `a[k][i] = a^k_i`, so that
//! `a^k_i F^i_j = det(F) delta^k_j`, i.e. `a` is the adjugate of `F`.

use crate::error::{FsiError, Result};
use crate::field::VectorField;
use crate::mesh::{PhaseMesh, PhaseSelector, Point, Quadrature, MAX_DIM};
use crate::scalar::Scalar;

pub type Mat<S> = [[S; MAX_DIM]; MAX_DIM];

pub fn zero_mat<S: Scalar>() -> Mat<S> {
    [[S::zero(); MAX_DIM]; MAX_DIM]
}

pub fn identity<S: Scalar>(d: usize) -> Mat<S> {
    let mut m = zero_mat();
    for (k, row) in m.iter_mut().enumerate().take(d) {
        row[k] = S::one();
    }
    m
}

pub fn transpose<S: Scalar>(d: usize, m: &Mat<S>) -> Mat<S> {
    let mut t = zero_mat();
    for i in 0..d {
        for j in 0..d {
            t[i][j] = m[j][i];
        }
    }
    t
}

pub fn matmul<S: Scalar>(d: usize, a: &Mat<S>, b: &Mat<S>) -> Mat<S> {
    let mut c = zero_mat();
    for i in 0..d {
        for j in 0..d {
            let mut s = S::zero();
            for k in 0..d {
                s += a[i][k] * b[k][j];
            }
            c[i][j] = s;
        }
    }
    c
}

/// `sum_ij a[i][j] b[i][j]`
pub fn ddot<S: Scalar>(d: usize, a: &Mat<S>, b: &Mat<S>) -> S {
    let mut s = S::zero();
    for i in 0..d {
        for j in 0..d {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

pub fn trace<S: Scalar>(d: usize, a: &Mat<S>) -> S {
    let mut s = S::zero();
    for k in 0..d {
        s += a[k][k];
    }
    s
}

pub fn lift<S: Scalar>(d: usize, m: &Mat<f64>) -> Mat<S> {
    let mut out = zero_mat();
    for i in 0..d {
        for j in 0..d {
            out[i][j] = S::cst(m[i][j]);
        }
    }
    out
}

pub fn lower<S: Scalar>(d: usize, m: &Mat<S>) -> Mat<f64> {
    let mut out = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..d {
        for j in 0..d {
            out[i][j] = m[i][j].re();
        }
    }
    out
}

/// Determinant by closed form.
pub fn det<S: Scalar>(d: usize, f: &Mat<S>) -> S {
    match d {
        2 => f[0][0] * f[1][1] - f[0][1] * f[1][0],
        3 => {
            f[0][0] * (f[1][1] * f[2][2] - f[1][2] * f[2][1])
                - f[0][1] * (f[1][0] * f[2][2] - f[1][2] * f[2][0])
                + f[0][2] * (f[1][0] * f[2][1] - f[1][1] * f[2][0])
        }
        _ => panic!("unsupported dimension {d}"),
    }
}

/// `a = Cof(F)^T`, from closed-form minors; no inversion involved.
pub fn adjugate<S: Scalar>(d: usize, f: &Mat<S>) -> Mat<S> {
    let mut a = zero_mat();
    match d {
        2 => {
            a[0][0] = f[1][1];
            a[0][1] = -f[0][1];
            a[1][0] = -f[1][0];
            a[1][1] = f[0][0];
        }
        3 => {
            for i in 0..3 {
                for j in 0..3 {
                    // cofactor C[j][i] goes to a[i][j]
                    let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                    let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                    a[i][j] = f[r0][c0] * f[r1][c1] - f[r0][c1] * f[r1][c0];
                }
            }
        }
        _ => panic!("unsupported dimension {d}"),
    }
    a
}

/// Cofactor matrix `Cof(F)` itself (the transpose of [`adjugate`]).
pub fn cofactor_matrix<S: Scalar>(d: usize, f: &Mat<S>) -> Mat<S> {
    transpose(d, &adjugate(d, f))
}

/// Green strain offset `F^T F - I`, i.e. `eta,_m . eta,_j - delta_mj`.
pub fn strain_offset<S: Scalar>(d: usize, f: &Mat<S>) -> Mat<S> {
    let mut s = zero_mat();
    for m in 0..d {
        for j in m..d {
            let mut v = S::zero();
            for i in 0..d {
                v += f[i][m] * f[i][j];
            }
            if m == j {
                v = v - 1.0;
            }
            s[m][j] = v;
            s[j][m] = v;
        }
    }
    s
}

/// Where a [`TensorField`] is sampled inside each cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    /// Three-point Gauss rule per axis.
    Gauss,
    /// Cell centre only.
    Centre,
}

impl Sampling {
    pub fn rule(self, mesh: &PhaseMesh) -> &Quadrature {
        match self {
            Sampling::Gauss => &mesh.gauss,
            Sampling::Centre => &mesh.centre,
        }
    }
}

/// A `d x d` matrix per sample point of the cells of one phase.
#[derive(Clone, Debug)]
pub struct TensorField {
    pub dim: usize,
    pub phase: PhaseSelector,
    pub sampling: Sampling,
    /// Cells in sampling order.
    pub cells: Vec<usize>,
    pub points_per_cell: usize,
    pub values: Vec<Mat<f64>>,
}

impl TensorField {
    /// Physical coordinates of every sample point, in storage order.
    pub fn points(&self, mesh: &PhaseMesh) -> Vec<Point> {
        let rule = self.sampling.rule(mesh);
        self.cells
            .iter()
            .flat_map(|&c| rule.points.iter().map(move |xi| mesh.map_point(c, xi)))
            .collect()
    }

    /// Physical quadrature weights matching [`TensorField::points`].
    pub fn weights(&self, mesh: &PhaseMesh) -> Vec<f64> {
        let rule = self.sampling.rule(mesh);
        let vol = mesh.cell_volume();
        self.cells
            .iter()
            .flat_map(|_| rule.weights.iter().map(move |w| w * vol))
            .collect()
    }

    fn same_layout(&self, other: &TensorField) -> bool {
        self.dim == other.dim
            && self.phase == other.phase
            && self.sampling == other.sampling
            && self.cells == other.cells
    }

    pub fn map(&self, f: impl Fn(&Mat<f64>) -> Mat<f64>) -> TensorField {
        TensorField {
            values: self.values.iter().map(f).collect(),
            cells: self.cells.clone(),
            ..*self
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for m in &self.values {
            for row in m.iter().take(self.dim) {
                if row[..self.dim].iter().any(|x| !x.is_finite()) {
                    return Err(FsiError::NonFinite("tensor field entry".into()));
                }
            }
        }
        Ok(())
    }
}

/// `a = [Cof F]^T` sampled on the layout of its source gradient.
#[derive(Clone, Debug)]
pub struct CofactorField {
    pub field: TensorField,
    /// Number of sample points at which `det F <= 0`. The cofactor is still
    /// valid there; the stepper treats a nonzero count as loss of injectivity.
    pub nonpositive_det_points: usize,
    pub min_det: f64,
}

#[derive(Clone, Debug)]
pub struct StrainOffsetField {
    pub field: TensorField,
}

/// Gradient of a nodal vector field at the sample points of the cells of `phase`.
/// Exact for affine fields.
pub fn gradient(
    field: &VectorField,
    mesh: &PhaseMesh,
    phase: PhaseSelector,
    sampling: Sampling,
) -> Result<TensorField> {
    field.check(mesh)?;
    if !(mesh.cell_volume() > 0.0) {
        return Err(FsiError::Geometry("degenerate cell with zero measure".into()));
    }
    let cells: Vec<usize> = mesh.cells_in(phase).collect();
    if cells.is_empty() {
        return Err(FsiError::Phase(format!("mesh has no cells in {phase:?}")));
    }
    let rule = sampling.rule(mesh);
    let grads: Vec<Vec<Point>> = rule.ref_grads.iter().map(|g| mesh.physical_grads(g)).collect();
    let d = mesh.dim;
    let mut values = Vec::with_capacity(cells.len() * rule.len());
    for &c in &cells {
        for gq in &grads {
            values.push(cell_gradient(mesh, field, c, gq));
        }
    }
    Ok(TensorField {
        dim: d,
        phase,
        sampling,
        cells,
        points_per_cell: rule.len(),
        values,
    })
}

/// `F = I + grad(eta - Id)`. Differentiating the displacement keeps `F`
/// exactly the identity at `eta = Id` and avoids cancellation for small strains.
pub fn deformation_gradient(
    eta: &VectorField,
    mesh: &PhaseMesh,
    phase: PhaseSelector,
    sampling: Sampling,
) -> Result<TensorField> {
    eta.check(mesh)?;
    let disp = displacement(eta, mesh);
    let g = gradient(&disp, mesh, phase, sampling)?;
    let d = mesh.dim;
    Ok(g.map(|h| {
        let mut f = *h;
        for (k, row) in f.iter_mut().enumerate().take(d) {
            row[k] += 1.0;
        }
        f
    }))
}

/// `eta - Id` at the nodes.
pub fn displacement(eta: &VectorField, mesh: &PhaseMesh) -> VectorField {
    let d = mesh.dim;
    let mut u = eta.clone();
    for (n, x) in mesh.nodes.iter().enumerate() {
        for k in 0..d {
            u.values[n * d + k] -= x[k];
        }
    }
    u
}

/// `sum_a v_a (x) grad phi_a` on one cell.
pub fn cell_gradient(mesh: &PhaseMesh, field: &VectorField, c: usize, grads: &[Point]) -> Mat<f64> {
    let d = mesh.dim;
    let mut m = [[0.0; MAX_DIM]; MAX_DIM];
    for (a, &n) in mesh.cells[c].iter().enumerate() {
        for i in 0..d {
            let v = field.values[n * d + i];
            for j in 0..d {
                m[i][j] += v * grads[a][j];
            }
        }
    }
    m
}

pub fn cofactor(f: &TensorField) -> CofactorField {
    let d = f.dim;
    let mut min_det = f64::INFINITY;
    let mut bad = 0;
    let field = f.map(|m| adjugate(d, m));
    for m in &f.values {
        let j = det(d, m);
        min_det = min_det.min(j);
        if j <= 0.0 {
            bad += 1;
        }
    }
    CofactorField {
        field,
        nonpositive_det_points: bad,
        min_det,
    }
}

pub fn jacobian_det(f: &TensorField) -> Vec<f64> {
    f.values.iter().map(|m| det(f.dim, m)).collect()
}

pub fn strain_offset_field(f: &TensorField) -> StrainOffsetField {
    let d = f.dim;
    StrainOffsetField {
        field: f.map(|m| strain_offset(d, m)),
    }
}

/// Pointwise `a^k_i G^i_k` for two fields on the same layout.
pub fn contract_ak_i(a: &CofactorField, g: &TensorField) -> Result<Vec<f64>> {
    if !a.field.same_layout(g) {
        return Err(FsiError::Shape("cofactor and gradient layouts differ".into()));
    }
    let d = g.dim;
    Ok(a
        .field
        .values
        .iter()
        .zip(&g.values)
        .map(|(am, gm)| {
            let mut s = 0.0;
            for k in 0..d {
                for i in 0..d {
                    s += am[k][i] * gm[i][k];
                }
            }
            s
        })
        .collect())
}

/// Discrete Piola residual: `a` is sampled at cell centres, averaged to the
/// nodes, and its row divergence `a^j_i,_j` is evaluated at the centres of
/// cells that do not touch the container boundary. Returns the L2 norm.
pub fn piola_residual(mesh: &PhaseMesh, eta: &VectorField) -> Result<f64> {
    let d = mesh.dim;
    let f = gradient(eta, mesh, PhaseSelector::Both, Sampling::Centre)?;
    let a = cofactor(&f);
    let mut nodal = vec![[[0.0; MAX_DIM]; MAX_DIM]; mesh.num_nodes()];
    let mut cnt = vec![0usize; mesh.num_nodes()];
    for (idx, &c) in a.field.cells.iter().enumerate() {
        let am = &a.field.values[idx];
        for &n in &mesh.cells[c] {
            for j in 0..d {
                for i in 0..d {
                    nodal[n][j][i] += am[j][i];
                }
            }
            cnt[n] += 1;
        }
    }
    for (m, &k) in nodal.iter_mut().zip(&cnt) {
        for row in m.iter_mut() {
            for x in row.iter_mut() {
                *x /= k as f64;
            }
        }
    }
    let grads = mesh.physical_grads(&mesh.centre.ref_grads[0]);
    let mut sum = 0.0;
    for c in 0..mesh.num_cells() {
        if mesh.cells[c].iter().any(|&n| mesh.boundary_node[n]) {
            continue;
        }
        for i in 0..d {
            let mut div = 0.0;
            for (al, &n) in mesh.cells[c].iter().enumerate() {
                for j in 0..d {
                    div += nodal[n][j][i] * grads[al][j];
                }
            }
            sum += div * div * mesh.cell_volume();
        }
    }
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, GeometrySpec};

    fn m2(a: f64, b: f64, c: f64, d: f64) -> Mat<f64> {
        let mut m = [[0.0; 3]; 3];
        m[0] = [a, b, 0.0];
        m[1] = [c, d, 0.0];
        m
    }

    #[test]
    fn cofactor_of_identity_and_diagonal() {
        let i3: Mat<f64> = identity(3);
        assert_eq!(adjugate(3, &i3), i3);
        let f = m2(2.0, 0.0, 0.0, 3.0);
        let a = adjugate(2, &f);
        assert_eq!(a[0][0], 3.0);
        assert_eq!(a[1][1], 2.0);
        assert_eq!(a[0][1], 0.0);
        assert_eq!(a[1][0], 0.0);
    }

    #[test]
    fn adjugate_times_f_is_det_identity() {
        let f = [[1.0, 2.0, -0.5], [0.3, -1.2, 2.2], [0.7, 0.1, 1.9]];
        let a = adjugate(3, &f);
        let p = matmul(3, &a, &f);
        let j = det(3, &f);
        for i in 0..3 {
            for k in 0..3 {
                let e = if i == k { j } else { 0.0 };
                assert!((p[i][k] - e).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn det_of_diagonal() {
        let mut f: Mat<f64> = zero_mat();
        f[0][0] = 2.0;
        f[1][1] = 3.0;
        f[2][2] = 4.0;
        assert_eq!(det(3, &f), 24.0);
        assert_eq!(det(3, &identity::<f64>(3)), 1.0);
    }

    #[test]
    fn cofactor_valid_for_singular() {
        let f = m2(1.0, 2.0, 2.0, 4.0);
        let a = adjugate(2, &f);
        let p = matmul(2, &a, &f);
        for row in p.iter().take(2) {
            for x in row.iter().take(2) {
                assert_eq!(*x, 0.0);
            }
        }
    }

    #[test]
    fn strain_offset_scaled_identity() {
        let mut f: Mat<f64> = identity(3);
        for k in 0..3 {
            f[k][k] = 1.5;
        }
        let s = strain_offset(3, &f);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.25 } else { 0.0 };
                assert!((s[i][j] - e).abs() < 1e-15);
            }
        }
        assert_eq!(strain_offset(2, &identity::<f64>(2)), zero_mat::<f64>());
    }

    #[test]
    fn gradient_of_identity_and_affine() {
        let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 0.125)).unwrap();
        let id = VectorField::identity(&mesh);
        let g = gradient(&id, &mesh, PhaseSelector::Both, Sampling::Gauss).unwrap();
        for m in &g.values {
            assert!((m[0][0] - 1.0).abs() < 1e-14 && m[0][1].abs() < 1e-14);
            assert!((m[1][1] - 1.0).abs() < 1e-14 && m[1][0].abs() < 1e-14);
        }
        let aff = VectorField::from_fn(&mesh, |x| [1.0 + 2.0 * x[0] - x[1], 0.5 * x[0] + 3.0 * x[1], 0.0]);
        let g = gradient(&aff, &mesh, PhaseSelector::Solid, Sampling::Gauss).unwrap();
        for m in &g.values {
            assert!((m[0][0] - 2.0).abs() < 1e-13 && (m[0][1] + 1.0).abs() < 1e-13);
            assert!((m[1][0] - 0.5).abs() < 1e-13 && (m[1][1] - 3.0).abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_centre_second_order_for_sine() {
        let err = |h: f64| {
            let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, h)).unwrap();
            let f = VectorField::from_fn(&mesh, |x| [x[0].sin(), x[1], 0.0]);
            let g = gradient(&f, &mesh, PhaseSelector::Both, Sampling::Centre).unwrap();
            g.points(&mesh)
                .iter()
                .zip(&g.values)
                .map(|(x, m)| (m[0][0] - x[0].cos()).abs())
                .fold(0.0, f64::max)
        };
        let e1 = err(1.0 / 8.0);
        let e2 = err(1.0 / 16.0);
        let rate = (e1 / e2).log2();
        assert!(rate > 1.9, "rate {rate}");
    }

    #[test]
    fn gradient_rejects_mismatched_field() {
        let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 0.25)).unwrap();
        let bad = VectorField { dim: 3, values: vec![0.0; 75] };
        assert!(gradient(&bad, &mesh, PhaseSelector::Both, Sampling::Gauss).is_err());
    }

    #[test]
    fn gradient_rejects_missing_phase() {
        let spec = GeometrySpec { solids: vec![], ..GeometrySpec::centred_box(2, 0.5, 0.25) };
        let mesh = build_mesh(&spec).unwrap();
        let id = VectorField::identity(&mesh);
        assert!(gradient(&id, &mesh, PhaseSelector::Solid, Sampling::Gauss).is_err());
    }

    #[test]
    fn piola_exact_for_affine() {
        let mesh = build_mesh(&GeometrySpec::centred_box(3, 0.5, 0.25)).unwrap();
        let aff = VectorField::from_fn(&mesh, |x| {
            [
                x[0] + 0.2 * x[1] - 0.1 * x[2],
                0.3 * x[0] + 1.1 * x[1],
                -0.2 * x[1] + 0.9 * x[2] + 0.4,
            ]
        });
        assert!(piola_residual(&mesh, &aff).unwrap() < 1e-13);
    }

    #[test]
    fn cofactor_flags_nonpositive_det() {
        let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 0.25)).unwrap();
        let flip = VectorField::from_fn(&mesh, |x| [-x[0], x[1], 0.0]);
        let g = gradient(&flip, &mesh, PhaseSelector::Both, Sampling::Centre).unwrap();
        let a = cofactor(&g);
        assert_eq!(a.nonpositive_det_points, mesh.num_cells());
        assert!(a.min_det < 0.0);
    }
}
