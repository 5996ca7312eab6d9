use std::path::PathBuf;

use perifract::config::{parse_str, CalibrationMode, InitialField, RunConfig};
use perifract::harness::desk_scale_preset;
use proptest::prelude::*;

#[test]
fn echoed_configs_parse_back_unchanged() {
    let mut custom = RunConfig {
        calibration: CalibrationMode::Printed,
        c: Some(392.7),
        beta: Some(1.3201e7),
        d: Some(1.25e-3),
        delta: Some(2.5e-3),
        start_x1: Some(0.04),
        u0: InitialField::File(PathBuf::from("init/u0.txt")),
        write_vtk: false,
        seed: 42,
        threads: 3,
        ..RunConfig::default()
    };
    custom.t_end = 1e-4;
    for cfg in [RunConfig::default(), desk_scale_preset(), custom] {
        let text = cfg.echo();
        assert_eq!(parse_str(&text).unwrap(), cfg, "{text}");
        // echo is a fixed point
        assert_eq!(parse_str(&text).unwrap().echo(), text);
    }
}

#[test]
fn empty_file_gives_the_full_experiment() {
    let cfg = parse_str("").unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!((cfg.a, cfg.b, cfg.ell0), (0.1, 0.3, 0.025));
    assert_eq!((cfg.dt, cfg.t_end), (0.02e-6, 560e-6));
    assert_eq!(cfg.domain().cell_counts().unwrap(), (160, 480));
}

proptest! {
    #[test]
    fn random_values_round_trip(
        eps in 1e-4f64..1e-2,
        f0 in 1e3f64..1e11,
        dt in 1e-9f64..1e-7,
        e in 1e8f64..1e11,
        window in 1usize..100,
        every in 1u64..1000,
    ) {
        let cfg = RunConfig {
            epsilon: eps,
            f0,
            dt,
            youngs_modulus: e,
            smoothing_window: window,
            output_every: every,
            ..RunConfig::default()
        };
        // validation may reject incommensurate geometry; only the text form
        // is under test here
        let mut back = RunConfig::default();
        for line in cfg.echo().lines() {
            let (k, v) = line.split_once('=').unwrap();
            back.set(k.trim(), v.trim()).unwrap();
        }
        prop_assert_eq!(back, cfg);
    }
}
