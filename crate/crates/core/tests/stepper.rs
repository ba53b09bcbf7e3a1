use fsi_core::compat::CompatData;
use fsi_core::config::RunConfig;
use fsi_core::experiments::{prepare, run_prepared};
use fsi_core::field::VectorField;
use fsi_core::mesh::{build_mesh, GeometrySpec, PhaseMesh};
use fsi_core::operators::ElasticityTensor;
use fsi_core::presets::{BodyForce, InitialData};
use fsi_core::stepper::{elastic_energy, kinetic_energy, RunOptions, SolverParams, Stepper};

fn mesh(dim: usize, h: f64) -> PhaseMesh {
    build_mesh(&GeometrySpec::centred_box(dim, 0.5, h)).unwrap()
}

#[test]
fn dilation_energy_matches_closed_form() {
    // F = alpha I gives F^T F - I = (alpha^2 - 1) I and c : I : I = d^2 lambda + 2 d mu.
    for (dim, vol) in [(2, 0.25), (3, 0.125)] {
        let m = mesh(dim, 0.125);
        let (lambda, mu) = (1.3, 0.7);
        let c = ElasticityTensor::new(lambda, mu, dim).unwrap();
        for alpha in [0.9, 1.0, 1.05] {
            let eta = VectorField::identity(&m).scaled(alpha);
            let d = dim as f64;
            let expect = (d * d * lambda + 2.0 * d * mu) * (alpha * alpha - 1.0).powi(2) / 4.0 * vol;
            let got = elastic_energy(&m, &c, &eta);
            assert!((got - expect).abs() <= 1e-12 * expect.max(1.0), "d={dim} alpha={alpha}: {got} vs {expect}");
        }
    }
}

#[test]
fn rotation_stores_no_energy() {
    let m = mesh(2, 0.125);
    let c = ElasticityTensor::new(1.0, 1.0, 2).unwrap();
    let (s, co) = 0.3f64.sin_cos();
    let eta = VectorField::from_fn(&m, |x| [co * x[0] - s * x[1], s * x[0] + co * x[1], 0.0]);
    assert!(elastic_energy(&m, &c, &eta).abs() < 1e-14);
}

#[test]
fn kinetic_energy_of_constant_field() {
    let m = mesh(2, 0.125);
    let v = VectorField::from_fn(&m, |_| [2.0, 0.0, 0.0]);
    assert!((kinetic_energy(&m, &v) - 2.0).abs() < 1e-12);
}

#[test]
fn penalty_pressure_of_linear_dilation() {
    let m = mesh(3, 0.25);
    let params = SolverParams {
        eps_pen: 1e-3,
        ..Default::default()
    };
    let compat = CompatData::zero(&m);
    let st = Stepper::new(&m, params, BodyForce::Zero, &compat).unwrap();
    let v = VectorField::from_fn(&m, |x| *x);
    let state = st.initial_state(&v).unwrap();
    let fluid: Vec<usize> = m.cells_in(fsi_core::mesh::PhaseSelector::Fluid).collect();
    assert!(!fluid.is_empty());
    for c in 0..m.num_cells() {
        let expect = if fluid.contains(&c) { -3.0 / 1e-3 } else { 0.0 };
        assert!((state.q[c] - expect).abs() < 1e-9, "cell {c}: {}", state.q[c]);
    }
}

#[test]
fn zero_data_stays_at_rest() {
    let mut cfg = RunConfig::default();
    cfg.geometry.h = 0.125;
    cfg.initial = InitialData::Zero;
    cfg.params.t_end = 0.02;
    let prep = prepare(&cfg).unwrap();
    let tr = run_prepared(&cfg, &prep, true).unwrap();
    assert!(tr.completed());
    assert_eq!(tr.states.len(), 21);
    let identity = VectorField::identity(&prep.mesh);
    for s in &tr.states {
        assert_eq!(s.eta, identity);
        assert!(s.v.values.iter().all(|x| *x == 0.0));
        assert!(s.q.iter().all(|x| *x == 0.0));
    }
}

#[test]
fn repeated_runs_agree_bitwise() {
    let mut cfg = RunConfig::default();
    cfg.geometry.h = 0.125;
    cfg.params.t_end = 0.01;
    let prep = prepare(&cfg).unwrap();
    let a = run_prepared(&cfg, &prep, false).unwrap();
    let b = run_prepared(&cfg, &prep, false).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.final_state, b.final_state);
}

#[test]
fn viscous_fluid_loses_energy() {
    let mut cfg = RunConfig::default();
    cfg.geometry.h = 0.0625;
    cfg.initial = InitialData::Vortices { amplitude: 0.1 };
    cfg.params.t_end = 0.03;
    let prep = prepare(&cfg).unwrap();
    let tr = run_prepared(&cfg, &prep, false).unwrap();
    assert!(tr.completed());
    for w in tr.records.windows(2) {
        assert!(w[1].energy <= w[0].energy * (1.0 + 1e-10), "{} -> {}", w[0].energy, w[1].energy);
    }
    assert!(tr.records.iter().all(|r| r.min_det > 0.0));
}

#[test]
fn blow_up_ceiling_stops_the_march() {
    let mut cfg = RunConfig::default();
    cfg.geometry.h = 0.125;
    cfg.params.t_end = 0.02;
    let prep = prepare(&cfg).unwrap();
    let st = Stepper::new(&prep.mesh, cfg.params.clone(), cfg.forcing.clone(), &prep.compat).unwrap();
    let opts = RunOptions {
        z_ceiling: 0.0,
        ..Default::default()
    };
    let tr = st.run(&prep.u0, &opts).unwrap();
    assert!(!tr.completed());
    assert!(tr.t_star < cfg.params.t_end);
}
