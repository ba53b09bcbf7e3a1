//! Phase-labelled structured meshes of the container box.
//!
//! The container `[0, L_1] x ... x [0, L_d]` is split into uniform
//! axis-aligned cells carrying multilinear (Q1) shape functions. A cell is
//! solid when its centre lies in one of the solid shapes, fluid otherwise.
//! Interface facets separate one fluid cell from one solid cell and carry
//! the unit normal pointing from the fluid into the solid.

use std::fmt::Write as _;

use crate::error::{FsiError, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

pub type Point = [f64; MAX_DIM];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Fluid,
    Solid,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Fluid => "fluid",
            Phase::Solid => "solid",
        }
    }
}

/// Restriction of an operation to one or both phases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseSelector {
    Fluid,
    Solid,
    Both,
}

impl PhaseSelector {
    pub fn contains(self, p: Phase) -> bool {
        matches!(
            (self, p),
            (PhaseSelector::Both, _)
                | (PhaseSelector::Fluid, Phase::Fluid)
                | (PhaseSelector::Solid, Phase::Solid)
        )
    }
}

impl From<Phase> for PhaseSelector {
    fn from(p: Phase) -> Self {
        match p {
            Phase::Fluid => PhaseSelector::Fluid,
            Phase::Solid => PhaseSelector::Solid,
        }
    }
}

/// One solid component of the reference configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum SolidShape {
    Box { lo: Point, hi: Point },
    Ball { centre: Point, radius: f64 },
}

impl SolidShape {
    pub fn contains(&self, dim: usize, x: &Point) -> bool {
        match self {
            SolidShape::Box { lo, hi } => (0..dim).all(|k| x[k] > lo[k] && x[k] < hi[k]),
            SolidShape::Ball { centre, radius } => {
                let r2: f64 = (0..dim).map(|k| (x[k] - centre[k]).powi(2)).sum();
                r2 < radius * radius
            }
        }
    }

    fn strictly_inside(&self, dim: usize, extent: &Point) -> bool {
        match self {
            SolidShape::Box { lo, hi } => {
                (0..dim).all(|k| lo[k] > 0.0 && hi[k] < extent[k] && lo[k] < hi[k])
            }
            SolidShape::Ball { centre, radius } => {
                *radius > 0.0
                    && (0..dim).all(|k| centre[k] - radius > 0.0 && centre[k] + radius < extent[k])
            }
        }
    }

    /// Euclidean gap between two shapes; non-positive when they touch or overlap.
    fn gap(&self, other: &SolidShape, dim: usize) -> f64 {
        use SolidShape::*;
        match (self, other) {
            (Box { lo: a0, hi: a1 }, Box { lo: b0, hi: b1 }) => {
                let gaps: Vec<f64> = (0..dim).map(|k| (b0[k] - a1[k]).max(a0[k] - b1[k])).collect();
                let widest = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if widest <= 0.0 {
                    widest
                } else {
                    gaps.iter().filter(|g| **g > 0.0).map(|g| g * g).sum::<f64>().sqrt()
                }
            }
            (Ball { centre: c1, radius: r1 }, Ball { centre: c2, radius: r2 }) => {
                let d: f64 = (0..dim).map(|k| (c1[k] - c2[k]).powi(2)).sum::<f64>().sqrt();
                d - r1 - r2
            }
            (Box { lo, hi }, Ball { centre, radius }) | (Ball { centre, radius }, Box { lo, hi }) => {
                let d: f64 = (0..dim)
                    .map(|k| {
                        let c = centre[k].clamp(lo[k], hi[k]);
                        (centre[k] - c).powi(2)
                    })
                    .sum::<f64>()
                    .sqrt();
                d - radius
            }
        }
    }
}

/// Geometry description consumed by [`build_mesh`].
#[derive(Clone, Debug, PartialEq)]
pub struct GeometrySpec {
    pub dim: usize,
    /// Container box `[0, extent_k]` per axis; unused axes are ignored.
    pub extent: Point,
    pub solids: Vec<SolidShape>,
    /// Target cell size; every extent must be an integer multiple of it.
    pub h: f64,
}

impl GeometrySpec {
    /// Unit square (or cube) with a centred solid box of the given side.
    pub fn centred_box(dim: usize, side: f64, h: f64) -> Self {
        let lo = 0.5 - side / 2.0;
        let hi = 0.5 + side / 2.0;
        let mut plo = [0.0; MAX_DIM];
        let mut phi = [0.0; MAX_DIM];
        for k in 0..dim {
            plo[k] = lo;
            phi[k] = hi;
        }
        GeometrySpec {
            dim,
            extent: [1.0; MAX_DIM],
            solids: vec![SolidShape::Box { lo: plo, hi: phi }],
            h,
        }
    }
}

#[derive(Clone, Debug)]
pub struct InterfaceFacet {
    pub fluid_cell: usize,
    pub solid_cell: usize,
    /// Axis orthogonal to the facet.
    pub axis: usize,
    /// Unit normal pointing from the fluid into the solid.
    pub normal: Point,
    pub nodes: Vec<usize>,
    pub area: f64,
}

#[derive(Clone, Debug)]
pub struct OuterFacet {
    pub cell: usize,
    pub axis: usize,
    /// Outward unit normal of the container.
    pub normal: Point,
    pub nodes: Vec<usize>,
    pub area: f64,
}

/// Reference-cell quadrature with tabulated Q1 shape functions.
#[derive(Clone, Debug)]
pub struct Quadrature {
    /// Points in reference coordinates `[0,1]^d`.
    pub points: Vec<Point>,
    /// Weights on the reference cell (sum to one).
    pub weights: Vec<f64>,
    /// `values[q][a]`: shape function `a` at point `q`.
    pub values: Vec<Vec<f64>>,
    /// `ref_grads[q][a]`: reference-coordinate gradient of shape `a` at `q`.
    pub ref_grads: Vec<Vec<Point>>,
}

const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

impl Quadrature {
    fn tensor(dim: usize, rule: &[(f64, f64)]) -> Self {
        let n1 = rule.len();
        let npts = n1.pow(dim as u32);
        let mut points = Vec::with_capacity(npts);
        let mut weights = Vec::with_capacity(npts);
        for idx in 0..npts {
            let mut p = [0.0; MAX_DIM];
            let mut w = 1.0;
            let mut rem = idx;
            for pk in p.iter_mut().take(dim) {
                let (x, wx) = rule[rem % n1];
                rem /= n1;
                *pk = x;
                w *= wx;
            }
            points.push(p);
            weights.push(w);
        }
        let values = points.iter().map(|p| shape_values(dim, p)).collect();
        let ref_grads = points.iter().map(|p| shape_ref_grads(dim, p)).collect();
        Quadrature {
            points,
            weights,
            values,
            ref_grads,
        }
    }

    /// Three-point Gauss rule per axis (exact to degree five per axis).
    pub fn gauss(dim: usize) -> Self {
        Self::tensor(dim, &GAUSS3)
    }

    /// Single point at the cell centre.
    pub fn centre(dim: usize) -> Self {
        Self::tensor(dim, &[(0.5, 1.0)])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Q1 shape function values at a reference point.
pub fn shape_values(dim: usize, xi: &Point) -> Vec<f64> {
    (0..1usize << dim)
        .map(|a| {
            (0..dim)
                .map(|k| if (a >> k) & 1 == 1 { xi[k] } else { 1.0 - xi[k] })
                .product()
        })
        .collect()
}

/// Q1 shape function gradients (reference coordinates) at a reference point.
pub fn shape_ref_grads(dim: usize, xi: &Point) -> Vec<Point> {
    (0..1usize << dim)
        .map(|a| {
            let mut g = [0.0; MAX_DIM];
            for (k, gk) in g.iter_mut().enumerate().take(dim) {
                let mut v = if (a >> k) & 1 == 1 { 1.0 } else { -1.0 };
                for m in 0..dim {
                    if m != k {
                        v *= if (a >> m) & 1 == 1 { xi[m] } else { 1.0 - xi[m] };
                    }
                }
                *gk = v;
            }
            g
        })
        .collect()
}

/// Conforming structured mesh with phase labels.
#[derive(Clone, Debug)]
pub struct PhaseMesh {
    pub dim: usize,
    /// Cells per axis (1 for unused axes).
    pub n: [usize; MAX_DIM],
    pub spacing: Point,
    pub extent: Point,
    pub nodes: Vec<Point>,
    pub cells: Vec<Vec<usize>>,
    pub phase: Vec<Phase>,
    pub interface_facets: Vec<InterfaceFacet>,
    pub outer_facets: Vec<OuterFacet>,
    /// Node lies on the container boundary.
    pub boundary_node: Vec<bool>,
    /// Number of fluid / solid cells touching each node.
    pub node_phase_count: Vec<[usize; 2]>,
    pub h: f64,
    pub gauss: Quadrature,
    pub centre: Quadrature,
}

impl PhaseMesh {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn nodes_per_cell(&self) -> usize {
        1 << self.dim
    }

    pub fn num_dofs(&self) -> usize {
        self.nodes.len() * self.dim
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[..self.dim].iter().product()
    }

    pub fn cells_in(&self, sel: PhaseSelector) -> impl Iterator<Item = usize> + '_ {
        (0..self.cells.len()).filter(move |&c| sel.contains(self.phase[c]))
    }

    pub fn count_cells(&self, p: Phase) -> usize {
        self.phase.iter().filter(|&&q| q == p).count()
    }

    pub fn has_phase(&self, p: Phase) -> bool {
        self.phase.contains(&p)
    }

    /// Node touches at least one cell of the given phase.
    pub fn node_in(&self, node: usize, p: Phase) -> bool {
        self.node_phase_count[node][p as usize] > 0
    }

    /// Node touches cells of both phases.
    pub fn is_interface_node(&self, node: usize) -> bool {
        let c = self.node_phase_count[node];
        c[0] > 0 && c[1] > 0
    }

    /// Every cell around the node belongs to `p` and the node is off the container boundary.
    pub fn is_phase_interior(&self, node: usize, p: Phase) -> bool {
        let c = self.node_phase_count[node];
        !self.boundary_node[node] && c[p as usize] == self.nodes_per_cell() && c[1 - p as usize] == 0
    }

    /// Lower corner of a cell.
    pub fn cell_origin(&self, c: usize) -> Point {
        self.nodes[self.cells[c][0]]
    }

    pub fn cell_centre(&self, c: usize) -> Point {
        let o = self.cell_origin(c);
        let mut x = [0.0; MAX_DIM];
        for k in 0..self.dim {
            x[k] = o[k] + 0.5 * self.spacing[k];
        }
        x
    }

    /// Physical point for a reference coordinate in cell `c`.
    pub fn map_point(&self, c: usize, xi: &Point) -> Point {
        let o = self.cell_origin(c);
        let mut x = [0.0; MAX_DIM];
        for k in 0..self.dim {
            x[k] = o[k] + xi[k] * self.spacing[k];
        }
        x
    }

    /// Physical shape gradients from reference ones.
    pub fn physical_grads(&self, ref_grads: &[Point]) -> Vec<Point> {
        ref_grads
            .iter()
            .map(|g| {
                let mut p = [0.0; MAX_DIM];
                for k in 0..self.dim {
                    p[k] = g[k] / self.spacing[k];
                }
                p
            })
            .collect()
    }

    /// Gauss points on an interface facet: `(reference point in the solid cell, physical weight)`.
    pub fn facet_quadrature(&self, f: &InterfaceFacet) -> Vec<(Point, f64)> {
        let side = if f.normal[f.axis] > 0.0 { 0.0 } else { 1.0 };
        let other: Vec<usize> = (0..self.dim).filter(|&k| k != f.axis).collect();
        let n1 = GAUSS3.len();
        let npts = n1.pow(other.len() as u32);
        (0..npts)
            .map(|idx| {
                let mut xi = [0.0; MAX_DIM];
                xi[f.axis] = side;
                let mut w = f.area;
                let mut rem = idx;
                for &k in &other {
                    let (x, wx) = GAUSS3[rem % n1];
                    rem /= n1;
                    xi[k] = x;
                    w *= wx;
                }
                (xi, w)
            })
            .collect()
    }

    /// Lumped (row-sum) mass of each node restricted to cells of `sel`.
    pub fn lumped_mass(&self, sel: PhaseSelector) -> Vec<f64> {
        let mut m = vec![0.0; self.num_nodes()];
        let share = self.cell_volume() / self.nodes_per_cell() as f64;
        for c in self.cells_in(sel) {
            for &n in &self.cells[c] {
                m[n] += share;
            }
        }
        m
    }

    /// Plain-text dump: header line, then one record per node, cell and interface facet.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# fsi-mesh v1 dim={} nodes={} cells={} interface_facets={} h={}",
            self.dim,
            self.num_nodes(),
            self.num_cells(),
            self.interface_facets.len(),
            self.h
        );
        let _ = writeln!(s, "# node <id> <x_1..x_d> | cell <id> <phase> <node ids> | facet <fluid cell> <solid cell> <N_1..N_d>");
        for (i, x) in self.nodes.iter().enumerate() {
            let _ = write!(s, "node {i}");
            for xk in &x[..self.dim] {
                let _ = write!(s, " {xk}");
            }
            s.push('\n');
        }
        for (c, nodes) in self.cells.iter().enumerate() {
            let _ = write!(s, "cell {c} {}", self.phase[c].name());
            for n in nodes {
                let _ = write!(s, " {n}");
            }
            s.push('\n');
        }
        for f in &self.interface_facets {
            let _ = write!(s, "facet {} {}", f.fluid_cell, f.solid_cell);
            for nk in &f.normal[..self.dim] {
                let _ = write!(s, " {nk}");
            }
            s.push('\n');
        }
        s
    }

    fn node_index(&self, idx: &[usize; MAX_DIM]) -> usize {
        idx[0] + (self.n[0] + 1) * (idx[1] + (self.n[1] + 1) * idx[2])
    }

    fn cell_index(&self, idx: &[usize; MAX_DIM]) -> usize {
        idx[0] + self.n[0] * (idx[1] + self.n[1] * idx[2])
    }

    fn cell_multi(&self, c: usize) -> [usize; MAX_DIM] {
        [
            c % self.n[0],
            (c / self.n[0]) % self.n[1],
            c / (self.n[0] * self.n[1]),
        ]
    }

    /// Half bandwidth (in nodes) of the node-node coupling graph.
    pub fn node_bandwidth(&self) -> usize {
        let mut b = 1;
        if self.dim >= 2 {
            b += self.n[0] + 1;
        }
        if self.dim >= 3 {
            b += (self.n[0] + 1) * (self.n[1] + 1);
        }
        b
    }
}

/// Build the phase-labelled mesh for a geometry description.
impl GeometrySpec {
    /// Check the description without allocating a mesh. Returns cells per axis.
    pub fn validate(&self) -> Result<[usize; MAX_DIM]> {
        let spec = self;
        let dim = spec.dim;
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(FsiError::Geometry(format!("dimension {dim} not supported")));
        }
        if !(spec.h > 0.0) || !spec.h.is_finite() {
            return Err(FsiError::Geometry("resolution h must be positive".into()));
        }
        let mut n = [1usize; MAX_DIM];
        let mut extent = [0.0; MAX_DIM];
        for k in 0..dim {
            let l = spec.extent[k];
            if !(l > 0.0) {
                return Err(FsiError::Geometry(format!("container extent along axis {k} must be positive")));
            }
            let cells = (l / spec.h).round();
            if cells < 1.0 || ((cells * spec.h) - l).abs() > 1e-9 * l {
                return Err(FsiError::Geometry(format!(
                    "container extent {l} along axis {k} is not a multiple of h = {}",
                    spec.h
                )));
            }
            n[k] = cells as usize;
            extent[k] = l;
        }
        for (i, s) in spec.solids.iter().enumerate() {
            if !s.strictly_inside(dim, &extent) {
                return Err(FsiError::Geometry(format!(
                    "solid {i} is not strictly inside the container"
                )));
            }
        }
        for i in 0..spec.solids.len() {
            for j in i + 1..spec.solids.len() {
                if spec.solids[i].gap(&spec.solids[j], dim) <= 0.0 {
                    return Err(FsiError::Geometry(format!(
                        "solids {i} and {j} touch or overlap"
                    )));
                }
            }
        }
        Ok(n)
    }
}

pub fn build_mesh(spec: &GeometrySpec) -> Result<PhaseMesh> {
    let dim = spec.dim;
    let n = spec.validate()?;
    let mut spacing = [1.0; MAX_DIM];
    let mut extent = [0.0; MAX_DIM];
    for k in 0..dim {
        spacing[k] = spec.extent[k] / n[k] as f64;
        extent[k] = spec.extent[k];
    }

    let nn = [n[0] + 1, if dim >= 2 { n[1] + 1 } else { 1 }, if dim >= 3 { n[2] + 1 } else { 1 }];
    let mut nodes = Vec::with_capacity(nn[0] * nn[1] * nn[2]);
    let mut boundary_node = Vec::with_capacity(nodes.capacity());
    for k in 0..nn[2] {
        for j in 0..nn[1] {
            for i in 0..nn[0] {
                let idx = [i, j, k];
                let mut x = [0.0; MAX_DIM];
                let mut on_bd = false;
                for a in 0..dim {
                    x[a] = idx[a] as f64 * spacing[a];
                    if idx[a] == 0 || idx[a] == n[a] {
                        on_bd = true;
                    }
                }
                nodes.push(x);
                boundary_node.push(on_bd);
            }
        }
    }

    let mut mesh = PhaseMesh {
        dim,
        n,
        spacing,
        extent,
        nodes,
        cells: Vec::new(),
        phase: Vec::new(),
        interface_facets: Vec::new(),
        outer_facets: Vec::new(),
        boundary_node,
        node_phase_count: Vec::new(),
        h: spacing[..dim].iter().cloned().fold(0.0, f64::max),
        gauss: Quadrature::gauss(dim),
        centre: Quadrature::centre(dim),
    };

    let ncells = n[0] * n[1] * n[2];
    let npc = 1usize << dim;
    let mut owner: Vec<Option<usize>> = Vec::with_capacity(ncells);
    for c in 0..ncells {
        let idx = mesh.cell_multi(c);
        let conn: Vec<usize> = (0..npc)
            .map(|a| {
                let mut ni = idx;
                for (k, nik) in ni.iter_mut().enumerate().take(dim) {
                    *nik += (a >> k) & 1;
                }
                mesh.node_index(&ni)
            })
            .collect();
        mesh.cells.push(conn);
        let centre = mesh.cell_centre(c);
        let who = spec.solids.iter().position(|s| s.contains(dim, &centre));
        owner.push(who);
        mesh.phase.push(if who.is_some() { Phase::Solid } else { Phase::Fluid });
    }

    let mut count = vec![[0usize; 2]; mesh.num_nodes()];
    let mut node_owner: Vec<Option<usize>> = vec![None; mesh.num_nodes()];
    for c in 0..ncells {
        let p = mesh.phase[c] as usize;
        for &nd in &mesh.cells[c] {
            count[nd][p] += 1;
            if let Some(o) = owner[c] {
                match node_owner[nd] {
                    Some(prev) if prev != o => {
                        return Err(FsiError::Geometry(format!(
                            "solids {prev} and {o} are not separated by fluid at h = {}",
                            spec.h
                        )))
                    }
                    _ => node_owner[nd] = Some(o),
                }
            }
        }
        if mesh.phase[c] == Phase::Solid && mesh.cells[c].iter().any(|&nd| mesh.boundary_node[nd]) {
            return Err(FsiError::Geometry(
                "a solid cell touches the container boundary".into(),
            ));
        }
    }
    mesh.node_phase_count = count;

    // facets
    for c in 0..ncells {
        let idx = mesh.cell_multi(c);
        for axis in 0..dim {
            let face_nodes = |side: usize| -> Vec<usize> {
                (0..npc)
                    .filter(|a| (a >> axis) & 1 == side)
                    .map(|a| mesh.cells[c][a])
                    .collect()
            };
            let area: f64 = (0..dim).filter(|&k| k != axis).map(|k| spacing[k]).product();
            if idx[axis] == 0 || idx[axis] + 1 == n[axis] {
                for side in 0..2 {
                    let at_bd = if side == 0 { idx[axis] == 0 } else { idx[axis] + 1 == n[axis] };
                    if at_bd {
                        let mut normal = [0.0; MAX_DIM];
                        normal[axis] = if side == 0 { -1.0 } else { 1.0 };
                        mesh.outer_facets.push(OuterFacet {
                            cell: c,
                            axis,
                            normal,
                            nodes: face_nodes(side),
                            area,
                        });
                    }
                }
            }
            if idx[axis] + 1 < n[axis] {
                let mut nb = idx;
                nb[axis] += 1;
                let c2 = mesh.cell_index(&nb);
                if mesh.phase[c] != mesh.phase[c2] {
                    let (fluid_cell, solid_cell, sign) = if mesh.phase[c] == Phase::Fluid {
                        (c, c2, 1.0)
                    } else {
                        (c2, c, -1.0)
                    };
                    let mut normal = [0.0; MAX_DIM];
                    normal[axis] = sign;
                    mesh.interface_facets.push(InterfaceFacet {
                        fluid_cell,
                        solid_cell,
                        axis,
                        normal,
                        nodes: face_nodes(1),
                        area,
                    });
                }
            }
        }
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centred_square_counts() {
        let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 0.25)).unwrap();
        assert_eq!(mesh.num_cells(), 16);
        assert_eq!(mesh.count_cells(Phase::Solid), 4);
        assert_eq!(mesh.interface_facets.len(), 8);
        assert_eq!(mesh.outer_facets.len(), 16);
        assert_eq!(mesh.num_nodes(), 25);
    }

    #[test]
    fn interface_normals_point_into_solid() {
        for dim in [2, 3] {
            let mesh = build_mesh(&GeometrySpec::centred_box(dim, 0.5, 0.125)).unwrap();
            for f in &mesh.interface_facets {
                assert_eq!(mesh.phase[f.fluid_cell], Phase::Fluid);
                assert_eq!(mesh.phase[f.solid_cell], Phase::Solid);
                let norm: f64 = f.normal.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-14);
                let xf = mesh.cell_centre(f.fluid_cell);
                let xs = mesh.cell_centre(f.solid_cell);
                let dot: f64 = (0..dim).map(|k| (xs[k] - xf[k]) * f.normal[k]).sum();
                assert!(dot > 0.0);
            }
        }
    }

    #[test]
    fn refinement_scales_interface_count() {
        for dim in [2, 3] {
            let coarse = build_mesh(&GeometrySpec::centred_box(dim, 0.5, 0.25)).unwrap();
            let fine = build_mesh(&GeometrySpec::centred_box(dim, 0.5, 0.125)).unwrap();
            assert_eq!(
                fine.interface_facets.len(),
                coarse.interface_facets.len() << (dim - 1)
            );
        }
    }

    #[test]
    fn solid_outside_container_is_rejected() {
        let mut spec = GeometrySpec::centred_box(2, 0.5, 0.25);
        spec.solids = vec![SolidShape::Box {
            lo: [0.5, 0.5, 0.0],
            hi: [1.5, 0.75, 0.0],
        }];
        assert!(build_mesh(&spec).is_err());
    }

    #[test]
    fn touching_solids_are_rejected() {
        let spec = GeometrySpec {
            dim: 2,
            extent: [1.0; 3],
            h: 0.125,
            solids: vec![
                SolidShape::Box { lo: [0.25, 0.25, 0.0], hi: [0.5, 0.75, 0.0] },
                SolidShape::Box { lo: [0.5, 0.25, 0.0], hi: [0.75, 0.75, 0.0] },
            ],
        };
        assert!(build_mesh(&spec).is_err());
    }

    #[test]
    fn unresolved_gap_is_rejected() {
        let spec = GeometrySpec {
            dim: 2,
            extent: [1.0; 3],
            h: 0.125,
            solids: vec![
                SolidShape::Box { lo: [0.25, 0.25, 0.0], hi: [0.5, 0.75, 0.0] },
                SolidShape::Box { lo: [0.52, 0.25, 0.0], hi: [0.75, 0.75, 0.0] },
            ],
        };
        assert!(build_mesh(&spec).is_err());
    }

    #[test]
    fn nonpositive_resolution_is_rejected() {
        assert!(build_mesh(&GeometrySpec::centred_box(2, 0.5, 0.0)).is_err());
        assert!(build_mesh(&GeometrySpec::centred_box(2, 0.5, -0.1)).is_err());
    }

    #[test]
    fn ball_solid_is_staircased() {
        let spec = GeometrySpec {
            dim: 2,
            extent: [1.0; 3],
            h: 1.0 / 16.0,
            solids: vec![SolidShape::Ball { centre: [0.5, 0.5, 0.0], radius: 0.25 }],
        };
        let mesh = build_mesh(&spec).unwrap();
        let area = mesh.count_cells(Phase::Solid) as f64 * mesh.cell_volume();
        assert!((area - std::f64::consts::PI / 16.0).abs() < 0.03);
    }

    #[test]
    fn quadrature_integrates_quintic_exactly() {
        let q = Quadrature::gauss(2);
        let s: f64 = q
            .points
            .iter()
            .zip(&q.weights)
            .map(|(p, w)| w * p[0].powi(5) * p[1].powi(4))
            .sum();
        assert!((s - 1.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn dump_has_one_record_per_entity() {
        let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 0.25)).unwrap();
        let d = mesh.dump();
        assert_eq!(d.lines().filter(|l| l.starts_with("node ")).count(), 25);
        assert_eq!(d.lines().filter(|l| l.starts_with("cell ")).count(), 16);
        assert_eq!(d.lines().filter(|l| l.starts_with("facet ")).count(), 8);
        assert!(d.starts_with("# fsi-mesh v1"));
    }
}
