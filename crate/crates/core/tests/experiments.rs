use fsi_core::config::RunConfig;
use fsi_core::experiments::{
    energy_trace, kappa_sweep, lemma_key_scalar, lemma_key_trial, max_energy_increase, perturbation_study, prepare,
    random_solid_field, rng, run_prepared, zt_norm, RateTable,
};
use fsi_core::field::VectorField;
use fsi_core::mesh::{build_mesh, GeometrySpec};
use fsi_core::operators::ElasticityTensor;
use fsi_core::presets::InitialData;

fn small(initial: InitialData, t_end: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.geometry.h = 0.125;
    cfg.initial = initial;
    cfg.params.t_end = t_end;
    cfg
}

#[test]
fn rate_fit_recovers_power_laws() {
    let hs = vec![0.1, 0.05, 0.025, 0.0125];
    for p in [1.0, 2.0, 3.5] {
        let t = RateTable::new("p", hs.clone(), hs.iter().map(|h: &f64| 7.0 * h.powf(p)).collect());
        assert!((t.rate - p).abs() < 1e-12);
        assert!(t.monotone);
    }
    let t = RateTable::new("flat", hs.clone(), vec![1.0, 0.5, 0.6, 0.1]);
    assert!(!t.monotone);
}

#[test]
fn zt_norm_of_rest_is_zero_and_grows_with_time() {
    let cfg = small(InitialData::Zero, 0.01);
    let prep = prepare(&cfg).unwrap();
    let tr = run_prepared(&cfg, &prep, true).unwrap();
    let z = zt_norm(&prep.mesh, &tr, cfg.params.dt, 10, true).unwrap();
    assert_eq!(z.value, 0.0);
    assert!(z.proxy);

    let cfg = small(InitialData::Translating { speed: 0.1 }, 0.01);
    let prep = prepare(&cfg).unwrap();
    let tr = run_prepared(&cfg, &prep, true).unwrap();
    let vals: Vec<f64> = (0..=10).map(|k| zt_norm(&prep.mesh, &tr, cfg.params.dt, k, true).unwrap().value).collect();
    assert!(vals.windows(2).all(|w| w[1] >= w[0]), "{vals:?}");
    assert!(vals[10] > 0.0);
}

#[test]
fn zt_norm_needs_stored_states_for_quotients() {
    let cfg = small(InitialData::Zero, 0.005);
    let prep = prepare(&cfg).unwrap();
    let tr = run_prepared(&cfg, &prep, false).unwrap();
    assert!(zt_norm(&prep.mesh, &tr, cfg.params.dt, 5, true).is_err());
    assert!(zt_norm(&prep.mesh, &tr, cfg.params.dt, 5, false).is_ok());
}

#[test]
fn energy_trace_of_rest_is_flat() {
    let cfg = small(InitialData::Zero, 0.005);
    let prep = prepare(&cfg).unwrap();
    let tr = run_prepared(&cfg, &prep, false).unwrap();
    let trace = energy_trace(&tr);
    assert_eq!(trace.len(), 6);
    assert!(trace.iter().all(|s| s.total == 0.0));
    assert!(max_energy_increase(&trace) <= 0.0);
}

#[test]
fn sweep_at_rest_reaches_the_end_for_every_kappa() {
    let cfg = small(InitialData::Zero, 0.01);
    let table = kappa_sweep(&cfg, &[1e-3, 1e-1, 1e-2], false).unwrap();
    let ks: Vec<f64> = table.rows.iter().map(|r| r.kappa).collect();
    assert_eq!(ks, vec![1e-1, 1e-2, 1e-3]);
    assert!(table.all_completed());
    assert!(table.rows.iter().all(|r| r.t_star == 0.01));
    assert_eq!(table.time_ratio(), 1.0);
}

#[test]
fn unperturbed_row_is_zero() {
    let mut cfg = small(InitialData::Zero, 0.005);
    cfg.geometry.h = 0.0625;
    let table = perturbation_study(&cfg, &[0.0, 1e-3]).unwrap();
    assert_eq!(table.rows[0].ratio, 0.0);
    assert!(table.rows[1].ratio > 0.0);
    // from rest, the gap at t = 0 is exactly the unit direction
    assert!((table.rows[1].ratio - 1.0).abs() < 1e-9);
}

#[test]
fn lemma_with_zero_data_gives_zero() {
    let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 0.125)).unwrap();
    let c = ElasticityTensor::new(1.0, 1.0, 2).unwrap();
    let zero = VectorField::zeros(&mesh);
    let g = |_t: f64| VectorField::zeros(&mesh);
    let r = lemma_key_trial(&mesh, &c, &zero, &g, &[1.0, 1e-3], 0.1, 1e-3).unwrap();
    assert!(r.sup_norms.iter().all(|s| *s == 0.0));
    assert!(r.holds(0.0));
}

#[test]
fn scalar_lemma_matches_relaxation() {
    let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 0.125)).unwrap();
    let mut r = rng(3);
    let phi = random_solid_field(&mesh, &mut r);
    for eps in [1.0, 1e-2, 1e-5] {
        assert!(lemma_key_scalar(&mesh, &phi, 2.0, eps, 0.2, 1e-3).unwrap() < 1e-10);
    }
}

#[test]
fn seeded_fields_are_reproducible() {
    let mesh = build_mesh(&GeometrySpec::centred_box(2, 0.5, 0.125)).unwrap();
    let a = random_solid_field(&mesh, &mut rng(9));
    let b = random_solid_field(&mesh, &mut rng(9));
    let c = random_solid_field(&mesh, &mut rng(10));
    assert_eq!(a, b);
    assert_ne!(a, c);
}
