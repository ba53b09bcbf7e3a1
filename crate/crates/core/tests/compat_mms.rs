use std::sync::Arc;

use fsi_core::compat::{build_compat, check_compatibility, CompatContext, PressureBoundary};
use fsi_core::field::VectorField;
use fsi_core::mesh::{build_mesh, GeometrySpec, Phase};
use fsi_core::operators::ElasticityTensor;
use fsi_core::presets::BodyForce;

fn exact(x: &[f64; 3]) -> f64 {
    x[0].exp() * x[1].sin()
}

/// Max nodal error of the pressure member `order` against `exp(x1) sin(x2)`.
fn pressure_error(h: f64, power: u32, order: usize) -> f64 {
    let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, h)).unwrap();
    let mut ctx = CompatContext::new(
        &mesh,
        1.0,
        ElasticityTensor::new(1.0, 1.0, 2).unwrap(),
        BodyForce::HarmonicGradient { amp: 1.0, power },
    );
    ctx.boundary = PressureBoundary::Prescribed(Arc::new(move |n, x| if n == order { exact(x) } else { 0.0 }));
    let data = build_compat(&ctx, &VectorField::zeros(&mesh)).unwrap();
    (0..mesh.num_nodes())
        .filter(|&n| mesh.node_in(n, Phase::Fluid))
        .map(|n| (data.q[order][n] - exact(&mesh.nodes[n])).abs())
        .fold(0.0, f64::max)
}

fn rates(power: u32, order: usize) -> Vec<f64> {
    let errs: Vec<f64> = [16.0, 32.0, 64.0].iter().map(|k| pressure_error(1.0 / k, power, order)).collect();
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn static_harmonic_pressure_converges() {
    let r = rates(0, 0);
    assert!(r.iter().all(|&x| x >= 1.8), "rates {r:?}");
}

#[test]
fn linear_in_time_pressure_appears_at_first_order() {
    let r = rates(1, 1);
    assert!(r.iter().all(|&x| x >= 1.8), "rates {r:?}");
}

#[test]
fn translation_keeps_the_solid_members_at_rest() {
    let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 1.0 / 16.0)).unwrap();
    let ctx = CompatContext::new(&mesh, 1.0, ElasticityTensor::new(1.0, 1.0, 2).unwrap(), BodyForce::Zero);
    let u0 = fsi_core::presets::InitialData::Translating { speed: 0.1 }.build(&mesh).unwrap();
    let data = build_compat(&ctx, &u0).unwrap();
    let rep = check_compatibility(&ctx, &data).unwrap();
    assert!(rep.entries().iter().all(|(_, v)| v.is_finite()));
    // solid members vanish: no force, rigid motion, zero stress
    for n in 0..mesh.num_nodes() {
        if mesh.is_phase_interior(n, Phase::Solid) {
            assert!(data.w_solid[0].node(n).iter().all(|x| x.abs() < 1e-12));
        }
    }
}

fn std_ctx(mesh: &fsi_core::mesh::PhaseMesh, force: BodyForce) -> CompatContext<'_> {
    CompatContext::new(mesh, 1.0, ElasticityTensor::new(1.5, 0.7, mesh.dim).unwrap(), force)
}

#[test]
fn solid_second_member_is_linearized_elasticity() {
    use fsi_core::compat::build_velocity_hierarchy;
    use fsi_core::operators::linear_l;
    let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 1.0 / 16.0)).unwrap();
    let ctx = std_ctx(&mesh, BodyForce::Zero);
    let mut u0 = VectorField::from_fn(&mesh, |x| [(3.0 * x[0]).sin() * x[1], x[0] * x[0] - x[1].cos(), 0.0]);
    u0.clear_boundary(&mesh);
    let z = VectorField::zeros(&mesh);
    let zq = vec![0.0; mesh.num_nodes()];
    let ((_, w2s), _) = build_velocity_hierarchy(&ctx, &u0, (&z, &z), [&zq, &zq, &zq]).unwrap();
    let l = linear_l(&u0, &ctx.elasticity, &mesh).unwrap().strong(&mesh);
    let scale = l.max_abs();
    for n in 0..mesh.num_nodes() {
        if mesh.is_phase_interior(n, Phase::Solid) {
            for k in 0..2 {
                let diff = (w2s.values[2 * n + k] - l.values[2 * n + k]).abs();
                assert!(diff <= 1e-12 * scale, "node {n}: {diff}");
            }
        }
    }
}

#[test]
fn kappa_forcing_is_quadratic_and_matches_bracket() {
    use fsi_core::compat::KappaForcing;
    use fsi_core::operators::linear_l_tilde;
    let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 1.0 / 8.0)).unwrap();
    let c = ElasticityTensor::new(1.5, 0.7, 2).unwrap();
    let u0 = VectorField::from_fn(&mesh, |x| [x[0] * x[0], 0.0, 0.0]);
    let z = VectorField::zeros(&mesh);
    let k = KappaForcing::new(&u0, &z, &z, &c, &mesh).unwrap();
    let reference = linear_l_tilde(&u0, &c, &mesh).unwrap().weak.scaled(-1.0);
    for t in [0.0, 0.5, 3.0] {
        let h = k.h_at(t);
        for (a, b) in h.values.iter().zip(&reference.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }
    let w1 = VectorField::from_fn(&mesh, |x| [x[1], x[0] * x[1], 0.0]);
    let w2 = VectorField::from_fn(&mesh, |x| [x[0].sin(), 1.0 - x[1] * x[1], 0.0]);
    let k = KappaForcing::new(&u0, &w1, &w2, &c, &mesh).unwrap();
    for parts in [(k.h_at(0.0), k.h_at(1.0), k.h_at(2.0), &k.h[2]), (k.g_at(0.0), k.g_at(1.0), k.g_at(2.0), &k.g[2])] {
        let (f0, f1, f2, second) = parts;
        for i in 0..f0.values.len() {
            let lhs = f2.values[i] - 2.0 * f1.values[i] + f0.values[i];
            assert!((lhs - second.values[i]).abs() < 1e-13);
        }
    }
}

#[test]
fn constant_pressure_shift_leaves_first_member() {
    use fsi_core::compat::{build_q0, build_w1};
    let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 1.0 / 16.0)).unwrap();
    let ctx = std_ctx(&mesh, BodyForce::HarmonicGradient { amp: 0.3, power: 0 });
    let u0 = fsi_core::presets::InitialData::Translating { speed: 0.05 }.build(&mesh).unwrap();
    let q0 = build_q0(&ctx, &u0).unwrap();
    let shifted: Vec<f64> = q0.iter().map(|q| q + 1.0).collect();
    let (_, a, _) = build_w1(&ctx, &u0, &q0).unwrap();
    let (_, b, _) = build_w1(&ctx, &u0, &shifted).unwrap();
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn shear_violation_matches_analytic_value() {
    use fsi_core::compat::CompatData;
    let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 1.0 / 8.0)).unwrap();
    let ctx = std_ctx(&mesh, BodyForce::Zero);
    let mut data = CompatData::zero(&mesh);
    // grad u0 = [[0, 2], [0, 0]]: tangential traction 2 on horizontal facets, 0 on vertical ones
    data.u0 = VectorField::from_fn(&mesh, |x| [2.0 * x[1], 0.0, 0.0]);
    let rep = check_compatibility(&ctx, &data).unwrap();
    assert!((rep.c1_shear - 2.0).abs() < 1e-12, "{rep:?}");
}
