use photostat::fit::{CurveModel, LmOptions};
use photostat::models::polarization::wrap_180;
use photostat::models::*;
use proptest::prelude::*;

const DT: f64 = 25.0;

fn g2_params() -> impl Strategy<Value = G2TrainParams> {
    (0.0f64..100.0, 1.0f64..5000.0, 1.0f64..10.0, 0.5f64..8.0).prop_map(|(b, n, m, t1)| {
        G2TrainParams {
            background_b: b,
            amplitude_n: n,
            n_molecules_m: m,
            t1_ns: t1,
            pulse_period_ns: DT,
        }
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn doubling_truncation_is_invisible(p in g2_params(), tau in -200.0f64..200.0) {
        let n = truncation_terms(p.t1_ns, DT);
        let a = eval_g2_train_terms(tau, &p, n);
        let b = eval_g2_train_terms(tau, &p, 2 * n);
        prop_assert!(rel(a, b) < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn single_emitter_dips_below_side_peak(
        n in 1.0f64..5000.0,
        t1 in 0.5f64..8.0,
    ) {
        let p = G2TrainParams {
            background_b: 0.0,
            amplitude_n: n,
            n_molecules_m: 1.0,
            t1_ns: t1,
            pulse_period_ns: DT,
        };
        prop_assert!(eval_g2_train(0.0, &p) < eval_g2_train(DT, &p));
    }

    #[test]
    fn saturation_is_monotone_and_bounded(
        i_sat in 0.1f64..1e3,
        r_max in 1.0f64..1e7,
        i in 0.0f64..1e5,
        di in 1e-3f64..1e4,
    ) {
        let p = SaturationParams { i_sat, r_max };
        let (lo, hi) = (eval_saturation(i, &p), eval_saturation(i + di, &p));
        prop_assert!(lo < hi);
        prop_assert!(hi <= r_max);
        prop_assert!(rel(eval_saturation(i_sat, &p), r_max / 2.0) < 1e-15);
    }

    #[test]
    fn analytic_gradients_match_differences(
        g in g2_params(),
        tau in -150.0f64..150.0,
        i_sat in 1.0f64..500.0,
        r_max in 1e3f64..1e6,
        x in 0.0f64..1e3,
        a in 0.1f64..10.0,
        b in 0.0f64..5.0,
        phi in 0.0f64..180.0,
        theta in 0.0f64..360.0,
        n0 in 1.0f64..100.0,
        k1 in 0.01f64..2.0,
        k2 in 1e-4f64..0.1,
        t in 0.0f64..100.0,
    ) {
        let g2 = G2Model { pulse_period_ns: DT, float_period: false };
        let g2p = [g.background_b, g.amplitude_n, g.n_molecules_m, g.t1_ns];
        let g2f = G2Model { pulse_period_ns: DT, float_period: true };
        let g2fp = [g.background_b, g.amplitude_n, g.n_molecules_m, g.t1_ns, DT];
        let checks: [(&dyn CurveModel, f64, &[f64]); 6] = [
            (&g2, tau, &g2p),
            (&g2f, tau, &g2fp),
            (&SaturationModel, x, &[i_sat, r_max]),
            (&PolarizationModel, theta, &[a, b, phi]),
            (&SingleExpModel, t, &[n0, k1]),
            (&BiexpConstModel, t, &[n0, k1, 0.5 * n0, k2, 3.0]),
        ];
        for (model, x, p) in checks {
            let err = max_gradient_error(model, x, p);
            prop_assert!(err < 1e-6, "{err:e} at x = {x}, p = {p:?}");
        }
    }

    #[test]
    fn polarization_phase_is_equivariant(
        a in 0.2f64..5.0,
        b in 0.0f64..2.0,
        phi in 0.0f64..180.0,
        delta in -360.0f64..360.0,
    ) {
        let truth = PolarizationParams { amp_a: a, offset_b: b, phase_phi_deg: phi };
        let points: Vec<(f64, f64)> = (0..12)
            .map(|k| {
                let th = 15.0 * k as f64;
                (th, eval_polarization(th, &truth))
            })
            .collect();
        let base = fit_polarization(&points).unwrap();
        let shifted: Vec<(f64, f64)> = points.iter().map(|&(t, y)| (t + delta, y)).collect();
        let moved = fit_polarization(&shifted).unwrap();
        let expected = wrap_180(base.params.phase_phi_deg - delta);
        let dphi = (moved.params.phase_phi_deg - expected).abs();
        prop_assert!(dphi.min(180.0 - dphi) < 1e-6, "{} vs {expected}", moved.params.phase_phi_deg);
        prop_assert!(rel(moved.params.amp_a, base.params.amp_a) < 1e-6);
        prop_assert!((moved.params.offset_b - base.params.offset_b).abs() < 1e-6 * (1.0 + b));
    }

    #[test]
    fn saturation_refit_stays_put(
        i_sat in 10.0f64..300.0,
        r_max in 1e4f64..1e6,
        noise in prop::collection::vec(-0.03f64..0.03, 12),
    ) {
        let truth = SaturationParams { i_sat, r_max };
        let points: Vec<SaturationPoint> = noise
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let i = 5.0 * 1.35f64.powi(k as i32);
                let r = eval_saturation(i, &truth) * (1.0 + e);
                SaturationPoint::new(i, r, 0.02 * r)
            })
            .collect();
        let first = fit_saturation(&points).unwrap();
        prop_assume!(first.converged);
        let again = fit_saturation_with(&points, Some(first.params), &LmOptions::default()).unwrap();
        prop_assert!(rel(again.params.i_sat, first.params.i_sat) < 1e-7);
        prop_assert!(rel(again.params.r_max, first.params.r_max) < 1e-7);
    }

    #[test]
    fn g2_refit_stays_put(
        (b, n) in (100.0f64..5000.0).prop_flat_map(|n| (0.0..0.5 * n, Just(n))),
        m in 1.0f64..10.0,
        t1 in 0.5f64..8.0,
        seed in any::<u64>(),
    ) {
        // Peaks well above the background, so every parameter is identifiable.
        let p = G2TrainParams {
            background_b: b,
            amplitude_n: n,
            n_molecules_m: m,
            t1_ns: t1,
            pulse_period_ns: DT,
        };
        use rand_distr::{Distribution, Poisson};
        let mut rng = photostat::rng::SeedPath::root(seed).rng();
        let tau: Vec<f64> = (0..2806).map(|k| -149.9705 + 106.9e-3 * k as f64).collect();
        let counts: Vec<f64> = tau
            .iter()
            .map(|&t| {
                let mu = eval_g2_train(t, &p);
                if mu > 0.0 { Poisson::new(mu).unwrap().sample(&mut rng) } else { 0.0 }
            })
            .collect();
        let opts = G2FitOptions::new(DT);
        let first = fit_g2_points(&tau, &counts, &opts).unwrap();
        prop_assert!(first.converged);
        let again = fit_g2_points(
            &tau,
            &counts,
            &G2FitOptions { init: Some(first.params), ..G2FitOptions::new(DT) },
        )
        .unwrap();
        let (a, b) = (first.params, again.params);
        for (x, y) in [
            (a.background_b, b.background_b),
            (a.amplitude_n, b.amplitude_n),
            (a.n_molecules_m, b.n_molecules_m),
            (a.t1_ns, b.t1_ns),
        ] {
            prop_assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "{x} → {y}");
        }
    }
}

#[test]
fn many_emitters_flatten_the_central_peak() {
    let p = G2TrainParams {
        background_b: 0.0,
        amplitude_n: 1.0,
        n_molecules_m: 1e6,
        t1_ns: 4.23,
        pulse_period_ns: DT,
    };
    assert!(rel(eval_g2_train(0.0, &p), eval_g2_train(DT, &p)) < 1e-5);
}

#[test]
fn survival_fits_are_idempotent() {
    let truth = SurvivalModel::SingleExponential { n0: 36.0, tau_s: 5.7 };
    let times: Vec<f64> = (0..25).map(|k| 0.5 * k as f64).collect();
    let wobble = [0.3, -0.4, 0.1, 0.0, -0.2];
    let counts: Vec<f64> = times
        .iter()
        .enumerate()
        .map(|(k, &t)| eval_survival(t, &truth) + wobble[k % 5])
        .collect();
    let curve = photostat::sim::SurvivalCurve::new(times, counts).unwrap();
    let first = fit_survival(&curve, SurvivalVariant::SingleExponential).unwrap();
    let again = fit_survival_with(
        &curve,
        SurvivalVariant::SingleExponential,
        Some(first.params.clone()),
        &LmOptions::default(),
    )
    .unwrap();
    let (SurvivalModel::SingleExponential { tau_s: a, .. }, SurvivalModel::SingleExponential { tau_s: b, .. }) =
        (first.params, again.params)
    else {
        panic!("variant changed");
    };
    assert!(rel(a, b) < 1e-8);
}
