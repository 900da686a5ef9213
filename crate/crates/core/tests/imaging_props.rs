use std::f64::consts::PI;

use photostat::imaging::*;
use proptest::prelude::*;

fn emitter() -> impl Strategy<Value = Emitter> {
    (2.0f64..14.0, 2.0f64..14.0, 0.0f64..180.0, 0.2f64..3.0).prop_map(|(x, y, a, b)| Emitter {
        x_um: x,
        y_um: y,
        dipole_angle_deg: a,
        brightness: b,
    })
}

fn config() -> impl Strategy<Value = ScanConfig> {
    (0.0f64..180.0, 0.0f64..10.0, 250.0f64..600.0, any::<u64>()).prop_map(|(pol, bg, fwhm, seed)| {
        ScanConfig {
            polarizer_angle_deg: pol,
            background_rate: bg,
            psf_fwhm_nm: fwhm,
            seed,
            ..ScanConfig::default()
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn expectation_is_linear_in_emitters(a in emitter(), b in emitter(), cfg in config()) {
        let both = expected_scan(&EmitterLayout::new(vec![a, b]), &cfg).unwrap();
        let ia = expected_scan(&EmitterLayout::new(vec![a]), &cfg).unwrap();
        let ib = expected_scan(&EmitterLayout::new(vec![b]), &cfg).unwrap();
        let sum = &ia + &ib - cfg.background_rate;
        let worst = (&both - &sum).iter().fold(0.0f64, |m, d| m.max(d.abs()));
        prop_assert!(worst < 1e-9, "{worst:e}");
    }

    #[test]
    fn expected_photons_are_conserved(e in emitter(), cfg in config()) {
        let img = expected_scan(&EmitterLayout::new(vec![e]), &cfg).unwrap();
        let signal: f64 = img.iter().map(|v| v - cfg.background_rate).sum();
        let c = (cfg.polarizer_angle_deg - e.dipole_angle_deg).to_radians().cos();
        let (dx, dy) = cfg.pixel_size_um();
        let sigma = cfg.psf_sigma_um();
        let expected = e.brightness * c * c * cfg.dwell_rate_scale * 2.0 * PI * sigma * sigma / (dx * dy);
        prop_assert!((signal - expected).abs() <= 0.01 * expected + 1e-9, "{signal} vs {expected}");
    }

    #[test]
    fn rendering_is_deterministic_per_seed(e in emitter(), cfg in config()) {
        let layout = EmitterLayout::new(vec![e]);
        prop_assert_eq!(render_scan(&layout, &cfg).unwrap(), render_scan(&layout, &cfg).unwrap());
    }

    #[test]
    fn noiseless_isolated_emitters_are_found(
        // Four quadrants keep the emitters farther apart than 3 FWHM.
        jitter in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4),
        brightness in prop::collection::vec(0.5f64..2.0, 4),
    ) {
        let cfg = ScanConfig { background_rate: 2.0, ..ScanConfig::default() };
        let centers = [(4.0, 4.0), (12.0, 4.0), (4.0, 12.0), (12.0, 12.0)];
        let emitters: Vec<Emitter> = centers
            .iter()
            .zip(&jitter)
            .zip(&brightness)
            .map(|((&(x, y), &(jx, jy)), &b)| Emitter {
                x_um: x + jx,
                y_um: y + jy,
                dipole_angle_deg: cfg.polarizer_angle_deg,
                brightness: b,
            })
            .collect();
        let img = expected_scan(&EmitterLayout::new(emitters.clone()), &cfg).unwrap();
        let spots = detect_spots(&img, &cfg, 5.0);
        prop_assert_eq!(spots.len(), 4);
        let pitch = cfg.pixel_size_um().0;
        for e in &emitters {
            let best = spots
                .iter()
                .map(|s| (s.centroid_um.0 - e.x_um).hypot(s.centroid_um.1 - e.y_um))
                .fold(f64::INFINITY, f64::min);
            prop_assert!(best < 0.5 * pitch, "{best}");
        }
        prop_assert!(spots.iter().all(|s| s.isolated && s.amplitude > 0.0 && s.fwhm_est_nm > 0.0));
    }
}

#[test]
fn crossed_polarizer_hides_an_emitter() {
    let cfg = ScanConfig {
        polarizer_angle_deg: 90.0,
        ..ScanConfig::default()
    };
    let layout = EmitterLayout::new(vec![Emitter {
        x_um: 8.0,
        y_um: 8.0,
        dipole_angle_deg: 0.0,
        brightness: 1.0,
    }]);
    let img = expected_scan(&layout, &cfg).unwrap();
    let peak = img.iter().fold(0.0f64, |m, v| m.max(*v));
    assert!(peak - cfg.background_rate < 1e-12);
}
