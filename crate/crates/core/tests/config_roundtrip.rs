use fsi_core::config::{ExperimentKind, RunConfig};
use fsi_core::mesh::SolidShape;
use fsi_core::presets::{BodyForce, InitialData};
use proptest::prelude::*;

fn forcing() -> impl Strategy<Value = BodyForce> {
    prop_oneof![
        Just(BodyForce::Zero),
        (-10.0..10.0f64, 0u32..4).prop_map(|(amp, power)| BodyForce::HarmonicGradient { amp, power }),
        (-10.0..10.0f64, 0.0..20.0f64).prop_map(|(amp, omega)| BodyForce::Oscillating { amp, omega }),
    ]
}

fn initial() -> impl Strategy<Value = InitialData> {
    prop_oneof![
        Just(InitialData::Zero),
        (0.0..1.0f64).prop_map(|speed| InitialData::Translating { speed }),
        (0.0..1.0f64).prop_map(|amplitude| InitialData::Vortices { amplitude }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn emit_then_parse_is_identity(
        nu in 1e-4..10.0f64,
        lambda in 0.1..10.0f64,
        mu in 0.1..10.0f64,
        kappa in 0.0..1.0f64,
        eps in 1e-8..1.0f64,
        dt in 1e-5..1e-1f64,
        steps in 1usize..500,
        include_g in any::<bool>(),
        frozen in any::<bool>(),
        kappas in prop::collection::vec(1e-6..1.0f64, 1..6),
        seed in any::<u64>(),
        radius in 0.05..0.3f64,
        use_ball in any::<bool>(),
        kind in 0usize..6,
        force in forcing(),
        init in initial(),
    ) {
        let mut cfg = RunConfig::default();
        cfg.params.nu = nu;
        cfg.params.lambda = lambda;
        cfg.params.mu = mu;
        cfg.params.kappa = kappa;
        cfg.params.eps_pen = eps;
        cfg.params.dt = dt;
        cfg.params.t_end = dt * steps as f64;
        cfg.params.include_g = include_g;
        cfg.params.frozen = frozen;
        cfg.experiment.kappas = kappas;
        cfg.experiment.seed = seed;
        cfg.experiment.kind = ExperimentKind::ALL[kind];
        if use_ball {
            cfg.geometry.solids = vec![SolidShape::Ball { centre: [0.5, 0.5, 0.0], radius }];
        }
        cfg.forcing = force;
        cfg.initial = init;

        let text = cfg.emit();
        let back = RunConfig::parse_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.emit(), text);
    }
}

#[test]
fn standard_file_matches_defaults() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/standard.cfg");
    let cfg = RunConfig::from_path(std::path::Path::new(path)).unwrap();
    assert_eq!(cfg, RunConfig::default());
}

#[test]
fn fractional_h_is_accepted() {
    let cfg = RunConfig::parse_str("[geometry]\nh = 1/32\n").unwrap();
    assert_eq!(cfg.geometry.h, 1.0 / 32.0);
}
