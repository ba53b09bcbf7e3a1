//! Named body forces and initial velocity fields.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{FsiError, Result};
use crate::field::{l2_inner, VectorField};
use crate::mesh::{PhaseMesh, PhaseSelector, Point, MAX_DIM};
use crate::scalar::Scalar;

/// Closed-form body force `f(t, x)` defined on all of the container.
#[derive(Clone, Debug, PartialEq)]
pub enum BodyForce {
    Zero,
    /// `value * t^power`.
    Uniform { value: Point, power: u32 },
    /// `amp * t^power * grad(exp(x1) sin(x2))`, the gradient of a harmonic function.
    HarmonicGradient { amp: f64, power: u32 },
    /// `amp * sin(omega t) * (-sin(pi x2), sin(pi x1), 0)`.
    Oscillating { amp: f64, omega: f64 },
}

fn tpow<S: Scalar>(t: S, p: u32) -> S {
    let mut r = S::one();
    for _ in 0..p {
        r = r * t;
    }
    r
}

impl BodyForce {
    pub fn eval<S: Scalar>(&self, dim: usize, t: S, x: &[S; MAX_DIM]) -> [S; MAX_DIM] {
        let mut f = [S::zero(); MAX_DIM];
        match self {
            BodyForce::Zero => {}
            BodyForce::Uniform { value, power } => {
                let s = tpow(t, *power);
                for k in 0..dim {
                    f[k] = s * value[k];
                }
            }
            BodyForce::HarmonicGradient { amp, power } => {
                let s = tpow(t, *power) * *amp;
                let e = x[0].exp();
                f[0] = s * e * x[1].sin();
                f[1] = s * e * x[1].cos();
            }
            BodyForce::Oscillating { amp, omega } => {
                let s = (t * *omega).sin() * *amp;
                let pi = std::f64::consts::PI;
                f[0] = -(s * (x[1] * pi).sin());
                f[1] = s * (x[0] * pi).sin();
            }
        }
        f
    }

    pub fn eval_f64(&self, dim: usize, t: f64, x: &Point) -> Point {
        self.eval(dim, t, x)
    }

    pub fn is_zero(&self) -> bool {
        match self {
            BodyForce::Zero => true,
            BodyForce::Uniform { value, .. } => value.iter().all(|v| *v == 0.0),
            BodyForce::HarmonicGradient { amp, .. } | BodyForce::Oscillating { amp, .. } => *amp == 0.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BodyForce::Zero => "zero",
            BodyForce::Uniform { .. } => "uniform",
            BodyForce::HarmonicGradient { .. } => "harmonic-gradient",
            BodyForce::Oscillating { .. } => "oscillating",
        }
    }
}

/// Septic smoothstep: 0 for `s <= 0`, 1 for `s >= 1`, `C^3` in between.
fn smoothstep(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        (0.0, 0.0)
    } else if s >= 1.0 {
        (1.0, 0.0)
    } else {
        let s4 = s.powi(4);
        let v = s4 * (35.0 - 84.0 * s + 70.0 * s * s - 20.0 * s.powi(3));
        let dv = 140.0 * s.powi(3) * (1.0 - s).powi(3);
        (v, dv)
    }
}

/// Cutoff equal to one on `[0.2, 0.8] L` and zero outside `[0.05, 0.95] L`; value and derivative.
fn cutoff(x: f64, len: f64) -> (f64, f64) {
    let s = x / len;
    let w = 0.15;
    let (a, da) = smoothstep((s - 0.05) / w);
    let (b, db) = smoothstep((0.95 - s) / w);
    (a * b, (da * b - a * db) / (w * len))
}

/// Initial velocity selector.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialData {
    Zero,
    /// Divergence-free field equal to the rigid translation `(speed, 0, 0)` on
    /// the central region `[0.2, 0.8]^d` and vanishing near the container wall.
    Translating { speed: f64 },
    /// Four compact vortices in the corners of the fluid, scaled to the given
    /// L2 norm. Zero near the interface and the container wall.
    Vortices { amplitude: f64 },
    /// Node-ordered values from a field dump.
    File(PathBuf),
}

impl InitialData {
    pub fn name(&self) -> String {
        match self {
            InitialData::Zero => "zero".into(),
            InitialData::Translating { .. } => "translating".into(),
            InitialData::Vortices { .. } => "vortices".into(),
            InitialData::File(p) => format!("file:{}", p.display()),
        }
    }

    pub fn build(&self, mesh: &PhaseMesh) -> Result<VectorField> {
        let mut u = match self {
            InitialData::Zero => VectorField::zeros(mesh),
            InitialData::Translating { speed } => translating(mesh, *speed),
            InitialData::Vortices { amplitude } => {
                let v = vortices(mesh);
                let n = l2_inner(mesh, PhaseSelector::Both, &v, &v).sqrt();
                if n == 0.0 {
                    return Err(FsiError::Geometry("vortex field vanishes on this mesh".into()));
                }
                v.scaled(amplitude / n)
            }
            InitialData::File(p) => read_field(p, mesh)?,
        };
        u.clear_boundary(mesh);
        Ok(u)
    }
}

fn translating(mesh: &PhaseMesh, speed: f64) -> VectorField {
    let d = mesh.dim;
    let ext = mesh.extent;
    VectorField::from_fn(mesh, |x| {
        let (cx, dcx) = cutoff(x[0], ext[0]);
        let (cy, dcy) = cutoff(x[1], ext[1]);
        let cz = if d == 3 { cutoff(x[2], ext[2]).0 } else { 1.0 };
        let yc = x[1] - 0.5 * ext[1];
        // stream function psi = speed * yc * cx * cy * cz
        let psi_y = speed * cz * cx * (cy + yc * dcy);
        let psi_x = speed * cz * yc * dcx * cy;
        [psi_y, -psi_x, 0.0]
    })
}

fn vortices(mesh: &PhaseMesh) -> VectorField {
    let d = mesh.dim;
    let ext = mesh.extent;
    let r = 0.11 * ext[0].min(ext[1]);
    let centres = [(0.125, 0.125, 1.0), (0.875, 0.125, -1.0), (0.875, 0.875, 1.0), (0.125, 0.875, -1.0)];
    VectorField::from_fn(mesh, |x| {
        let cz = if d == 3 { cutoff(x[2], ext[2]).0 } else { 1.0 };
        let mut u = [0.0; MAX_DIM];
        for &(fx, fy, sign) in &centres {
            let dx = x[0] - fx * ext[0];
            let dy = x[1] - fy * ext[1];
            let rho = (dx * dx + dy * dy) / (r * r);
            if rho < 1.0 {
                // psi = sign (1 - rho)^4
                let dpsi = -4.0 * sign * (1.0 - rho).powi(3) * 2.0 / (r * r);
                u[0] += cz * dpsi * dy;
                u[1] -= cz * dpsi * dx;
            }
        }
        u
    })
}

/// Nodal vector field dump: `# fsi-field v1 dim=<d> nodes=<n>` followed by one
/// line of `d` whitespace-separated components per node.
pub fn write_field(field: &VectorField) -> String {
    let mut s = format!("# fsi-field v1 dim={} nodes={}\n", field.dim, field.num_nodes());
    for n in 0..field.num_nodes() {
        let row: Vec<String> = (0..field.dim).map(|k| format!("{}", field.values[n * field.dim + k])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn read_field(path: &Path, mesh: &PhaseMesh) -> Result<VectorField> {
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::with_capacity(mesh.num_dofs());
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<&str> = line.split_whitespace().collect();
        if row.len() != mesh.dim {
            return Err(FsiError::Syntax {
                line: ln + 1,
                reason: format!("expected {} components, found {}", mesh.dim, row.len()),
            });
        }
        for v in row {
            values.push(v.parse::<f64>().map_err(|e| FsiError::Syntax {
                line: ln + 1,
                reason: e.to_string(),
            })?);
        }
    }
    let f = VectorField { dim: mesh.dim, values };
    f.check(mesh)?;
    Ok(f)
}

impl fmt::Display for BodyForce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BodyForce {
    type Err = FsiError;
    /// Parses the bare preset name with unit parameters; callers overwrite them.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(BodyForce::Zero),
            "uniform" => Ok(BodyForce::Uniform { value: [0.0; MAX_DIM], power: 0 }),
            "harmonic-gradient" => Ok(BodyForce::HarmonicGradient { amp: 1.0, power: 0 }),
            "oscillating" => Ok(BodyForce::Oscillating { amp: 1.0, omega: 1.0 }),
            _ => Err(FsiError::Param {
                field: "forcing.preset".into(),
                reason: format!("unknown preset `{s}`"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, GeometrySpec, Phase};

    #[test]
    fn translating_is_rigid_on_the_solid() {
        let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 1.0 / 16.0)).unwrap();
        let u = InitialData::Translating { speed: 0.1 }.build(&mesh).unwrap();
        for n in 0..mesh.num_nodes() {
            if mesh.node_in(n, Phase::Solid) {
                assert!((u.values[2 * n] - 0.1).abs() < 1e-15);
                assert_eq!(u.values[2 * n + 1], 0.0);
            }
            if mesh.boundary_node[n] {
                assert_eq!(u.node(n), [0.0; 3]);
            }
        }
    }

    #[test]
    fn vortices_have_requested_norm_and_avoid_interface() {
        let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 1.0 / 16.0)).unwrap();
        let u = InitialData::Vortices { amplitude: 1.0 }.build(&mesh).unwrap();
        let n = l2_inner(&mesh, PhaseSelector::Both, &u, &u).sqrt();
        assert!((n - 1.0).abs() < 1e-12);
        for k in 0..mesh.num_nodes() {
            if mesh.node_in(k, Phase::Solid) {
                assert_eq!(u.node(k), [0.0; 3]);
            }
        }
    }

    #[test]
    fn cutoff_derivative_matches_difference() {
        for &x in &[0.07, 0.1, 0.15, 0.19, 0.83, 0.9] {
            let h = 1e-6;
            let fd = (cutoff(x + h, 1.0).0 - cutoff(x - h, 1.0).0) / (2.0 * h);
            assert!((fd - cutoff(x, 1.0).1).abs() < 1e-6);
        }
    }
}
