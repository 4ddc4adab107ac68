use proptest::prelude::*;
use scramble_recovery::channels::{
    amplitude_damping_channel, computational_measurement_channel, depolarizing_channel,
    projective_measurement_channel, recovery_rate, MeasurementDirection,
};
use scramble_recovery::iterative::{
    convergence_coefficients, eico_fixed_point_quadratic, eico_success_probability, iterate,
    noisy_plain_fixed_point, noisy_plain_weight, simulate_iteration_matrix, RecursionSpec,
    RecursionVariant as V, Stability,
};
use scramble_recovery::linalg::SystemLayout;
use scramble_recovery::rng::RngStream;
use scramble_recovery::twirl::TwirlBackend;

fn qubit_measurement() -> scramble_recovery::channels::KrausChannel {
    let layout = SystemLayout::new([("target", 2)]).unwrap();
    projective_measurement_channel(&MeasurementDirection::from_theta(0.0), &layout, "target").unwrap()
}

#[test]
fn plain_two_layers_from_seven_fifteenths() {
    let t = iterate(&RecursionSpec::new(V::Plain, 7.0 / 15.0, 2, 4, 3)).unwrap();
    assert_eq!(t.first_index, 1);
    assert!((t.value_at(1).unwrap() - 7.0 / 15.0).abs() < 1e-15);
    assert!((t.value_at(2).unwrap() - 43.0 / 75.0).abs() < 1e-15);
    assert_eq!(t.values.len(), 4);
}

#[test]
fn ico_values_match_rationals() {
    let t = iterate(&RecursionSpec::new(V::Ico, 1.0 / 3.0, 2, 2, 5)).unwrap();
    assert!((t.value_at(2).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!((t.value_at(5).unwrap() - 16.0 / 17.0).abs() < 1e-15);
}

#[test]
fn noisy_plain_formula_arithmetic() {
    assert!((noisy_plain_fixed_point(0.8, 0.9) - 0.72 / 0.82).abs() < 1e-15);
    assert!((noisy_plain_weight(2, 4) - 0.2).abs() < 1e-15);
}

#[test]
fn noisy_plain_trace_settles_on_its_fixed_point() {
    let spec = RecursionSpec::new(V::PlainNoisy, 0.3, 2, 4, 200).with_noise(0.9);
    let t = iterate(&spec).unwrap();
    let want = noisy_plain_fixed_point(0.2, 0.9);
    assert!((t.last() - want).abs() < 1e-12);
    assert!((t.attractive_fixed_point().unwrap() - want).abs() < 1e-15);
}

#[test]
fn noisy_plain_fixed_point_approaches_inverse_one_plus_alpha() {
    let alpha = 0.5;
    let target = 1.0 / (1.0 + alpha);
    let mut last_gap = f64::INFINITY;
    for d_t in [2usize, 4, 8, 16] {
        let x = 1.0 - alpha / (d_t * d_t) as f64;
        let d_tb = d_t * d_t * d_t;
        let fp = noisy_plain_fixed_point(noisy_plain_weight(d_t, d_tb), x);
        let gap = (fp - target).abs();
        assert!(gap < last_gap, "D_t = {d_t}: gap {gap} after {last_gap}");
        last_gap = gap;
    }
    assert!(last_gap < 1e-2);
}

#[test]
fn equal_dimensions_freeze_plain_recursion() {
    let t = iterate(&RecursionSpec::new(V::Plain, 0.4, 4, 4, 10)).unwrap();
    assert!(t.values.iter().all(|v| (v - 0.4).abs() < 1e-15));
    assert_eq!(t.fixed_points[0].stability, Stability::Marginal);
    assert_eq!(convergence_coefficients(4, 4).unwrap().plain, 1.0);
}

#[test]
fn convergence_coefficient_values() {
    let c = convergence_coefficients(2, 2).unwrap();
    assert!((c.eico - 2.0 / 3.0).abs() < 1e-15);
    let far = convergence_coefficients(2, 1 << 12).unwrap();
    assert!((far.plain - 0.75).abs() < 1e-6);
    for d_tb in [2usize, 4, 8, 16] {
        let c = convergence_coefficients(2, d_tb).unwrap();
        assert!(c.eico < c.plain);
    }
    assert!(convergence_coefficients(4, 2).is_err());
}

#[test]
fn eico_success_probability_values() {
    assert!((eico_success_probability(1.0, 2) - 1.0).abs() < 1e-15);
    assert!((eico_success_probability(0.0, 2) - 0.75).abs() < 1e-15);
    assert!((eico_success_probability(0.4, 1 << 10) - 0.7).abs() < 1e-6);
}

#[test]
fn eico_fixed_points_are_one_and_minus_inverse() {
    for d_tb in [2usize, 3, 4, 8] {
        let t = iterate(&RecursionSpec::new(V::Eico, 0.5, 2.min(d_tb), d_tb, 0)).unwrap();
        let unstable = -1.0 / ((d_tb * d_tb) as f64 - 1.0);
        assert_eq!(t.fixed_points.len(), 2);
        assert!((t.fixed_points[0].value - 1.0).abs() < 1e-14);
        assert_eq!(t.fixed_points[0].stability, Stability::Attractive);
        assert!((t.fixed_points[1].value - unstable).abs() < 1e-14);
        assert_eq!(t.fixed_points[1].stability, Stability::Unstable);
    }
}

#[test]
fn eico_unstable_point_is_stationary_and_repelling() {
    let unstable = -1.0 / 3.0;
    let at = iterate(&RecursionSpec::new(V::Eico, unstable, 2, 2, 20)).unwrap();
    assert!(at.values.iter().all(|v| (v - unstable).abs() < 1e-9));
    let above = iterate(&RecursionSpec::new(V::Eico, unstable + 1e-6, 2, 2, 200)).unwrap();
    assert!((above.last() - 1.0).abs() < 1e-9);
}

#[test]
fn noisy_eico_reduces_to_noiseless_at_unit_keep_rate() {
    let a = iterate(&RecursionSpec::new(V::Eico, 0.2, 2, 2, 15)).unwrap();
    let b = iterate(&RecursionSpec::new(V::EicoNoisy, 0.2, 2, 2, 15).with_noise(1.0)).unwrap();
    assert_eq!(a.values, b.values);
    let roots: Vec<f64> = b.fixed_points.iter().map(|f| f.value).collect();
    assert!((roots[0] - 1.0).abs() < 1e-14 && (roots[1] + 1.0 / 3.0).abs() < 1e-14);
}

#[test]
fn noisy_eico_qubit_recursion_oracle() {
    // At D_tb = 2 the map is x(11p + 1)/(3(2 + x(1 + p))).
    for x in [0.8, 0.9, 0.95] {
        let spec = RecursionSpec::new(V::EicoNoisy, 0.1, 2, 2, 1).with_noise(x);
        for p in [-0.2, 0.0, 0.3, 0.9] {
            let want = x * (11.0 * p + 1.0) / (3.0 * (2.0 + x * (1.0 + p)));
            assert!((spec.step(p) - want).abs() < 1e-15);
        }
        let hi = 4.0 / 3.0 - 1.0 / x + (76.0 * x * x - 96.0 * x + 36.0).sqrt() / (6.0 * x);
        let t = iterate(&RecursionSpec { steps: 400, ..spec }).unwrap();
        assert!((t.last() - hi).abs() < 1e-12, "x = {x}: {} vs {hi}", t.last());
        assert!(hi < x);
    }
}

#[test]
fn noisy_eico_discriminant_stays_positive() {
    for d_tb in [2usize, 3, 4, 16] {
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            assert!(eico_fixed_point_quadratic(d_tb, x).discriminant() > 0.0);
        }
    }
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(iterate(&RecursionSpec::new(V::Plain, 1.5, 2, 4, 1)).is_err());
    assert!(iterate(&RecursionSpec::new(V::Plain, 0.5, 1, 4, 1)).is_err());
    assert!(iterate(&RecursionSpec::new(V::PlainNoisy, 0.5, 2, 4, 1).with_noise(1.2)).is_err());
    assert!(iterate(&RecursionSpec::new(V::Eico, -0.5, 2, 2, 1)).is_err());
    assert!("triple".parse::<V>().is_err());
}

#[test]
fn simulated_plain_layers_reach_43_over_75() {
    let ch = qubit_measurement();
    let spec = RecursionSpec::new(V::Plain, 0.0, 2, 4, 2);
    let sim = simulate_iteration_matrix(&spec, &ch, &TwirlBackend::Analytic).unwrap();
    assert!((sim.value_at(1).unwrap() - 7.0 / 15.0).abs() < 1e-9);
    assert!((sim.value_at(2).unwrap() - 43.0 / 75.0).abs() < 1e-9);
    let rec = iterate(&RecursionSpec { p0: 7.0 / 15.0, ..spec }).unwrap();
    for (a, b) in sim.values.iter().zip(&rec.values) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn simulated_noisy_plain_tracks_recursion() {
    let ch = amplitude_damping_channel(0.6).unwrap();
    let spec = RecursionSpec::new(V::PlainNoisy, 0.0, 2, 8, 3).with_noise(0.85);
    let sim = simulate_iteration_matrix(&spec, &ch, &TwirlBackend::Analytic).unwrap();
    let rec = iterate(&RecursionSpec { p0: sim.values[0], ..spec }).unwrap();
    for (a, b) in sim.values.iter().zip(&rec.values) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn unit_keep_rate_noise_leaves_plain_trace_unchanged() {
    let ch = qubit_measurement();
    let plain = RecursionSpec::new(V::Plain, 0.0, 2, 4, 3);
    let noisy = RecursionSpec::new(V::PlainNoisy, 0.0, 2, 4, 3).with_noise(1.0);
    let a = simulate_iteration_matrix(&plain, &ch, &TwirlBackend::Analytic).unwrap();
    let b = simulate_iteration_matrix(&noisy, &ch, &TwirlBackend::Analytic).unwrap();
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn simulated_eico_qubit_matches_recursion_with_both_exact_backends() {
    let ch = computational_measurement_channel(&SystemLayout::new([("target", 2)]).unwrap(), "target").unwrap();
    for backend in [TwirlBackend::Analytic, TwirlBackend::CliffordExact] {
        for (variant, x) in [(V::Eico, 1.0), (V::EicoNoisy, 0.9)] {
            let spec = RecursionSpec::new(variant, 0.0, 2, 2, 6).with_noise(x);
            let sim = simulate_iteration_matrix(&spec, &ch, &backend).unwrap();
            assert!((sim.values[0] - 1.0 / 3.0).abs() < 1e-12);
            let rec = iterate(&RecursionSpec { p0: sim.values[0], ..spec }).unwrap();
            for (k, (a, b)) in sim.values.iter().zip(&rec.values).enumerate() {
                assert!((a - b).abs() < 1e-9, "{backend} {variant} step {k}: {a} vs {b}");
            }
            for (a, b) in sim.success.iter().zip(&rec.success) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn simulated_eico_with_bath_matches_recursion() {
    let ch = qubit_measurement();
    let spec = RecursionSpec::new(V::Eico, 0.0, 2, 4, 3);
    let sim = simulate_iteration_matrix(&spec, &ch, &TwirlBackend::Analytic).unwrap();
    assert!((sim.values[0] - 7.0 / 15.0).abs() < 1e-12);
    let rec = iterate(&RecursionSpec { p0: sim.values[0], ..spec }).unwrap();
    for (a, b) in sim.values.iter().zip(&rec.values) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn sampled_eico_simulation_is_close() {
    let ch = depolarizing_channel(2, 0.3).unwrap();
    let spec = RecursionSpec::new(V::Eico, 0.0, 2, 2, 2);
    let backend = TwirlBackend::HaarMc { samples: 20_000, rng: RngStream::new(5) };
    let sim = simulate_iteration_matrix(&spec, &ch, &backend).unwrap();
    let rec = iterate(&RecursionSpec { p0: 0.3, ..spec }).unwrap();
    for (a, b) in sim.values.iter().zip(&rec.values) {
        assert!((a - b).abs() < 3e-2, "{a} vs {b}");
    }
    assert!((recovery_rate(&ch).unwrap() - 0.3).abs() < 1e-12);
}

#[test]
fn simulation_rejects_large_or_unsupported_inputs() {
    let ch = qubit_measurement();
    assert!(simulate_iteration_matrix(&RecursionSpec::new(V::Plain, 0.0, 2, 16, 1), &ch, &TwirlBackend::Analytic).is_err());
    assert!(simulate_iteration_matrix(&RecursionSpec::new(V::Ico, 0.0, 2, 4, 1), &ch, &TwirlBackend::Analytic).is_err());
    assert!(simulate_iteration_matrix(&RecursionSpec::new(V::Plain, 0.0, 2, 6, 1), &depolarizing_channel(3, 0.5).unwrap(), &TwirlBackend::Analytic).is_err());
}

fn stepped(spec: &RecursionSpec, k: usize) -> f64 {
    (0..k).fold(spec.p0, |p, _| spec.step(p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_forms_equal_stepping(
        p0 in 0.0f64..=1.0, x in 0.0f64..=1.0, d_t in 2usize..5, extra in 1usize..4, n in 0usize..=30,
    ) {
        let d_tb = d_t * extra;
        for variant in [V::Plain, V::PlainNoisy, V::Ico] {
            let spec = RecursionSpec::new(variant, p0, d_t, d_tb, n).with_noise(x);
            let t = iterate(&spec).unwrap();
            prop_assert!(t.closed_form_gap.unwrap() < 1e-12);
            prop_assert!((t.last() - stepped(&spec, n)).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_traces_rise_to_one(p0 in 1e-3f64..=1.0, d_tb in 3usize..9) {
        for variant in [V::Plain, V::Ico, V::Eico] {
            let t = iterate(&RecursionSpec::new(variant, p0, 2, d_tb, 60)).unwrap();
            prop_assert!(t.values.windows(2).all(|w| w[1] >= w[0] - 1e-15));
            if variant != V::Plain {
                prop_assert!((t.last() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn eico_attractive_fixed_point_is_trace_limit(p0 in 0.0f64..=1.0, x in 0.5f64..=1.0, d_tb in 2usize..9) {
        let t = iterate(&RecursionSpec::new(V::EicoNoisy, p0, 2, d_tb, 500).with_noise(x)).unwrap();
        let fp = t.attractive_fixed_point().unwrap();
        prop_assert!((t.last() - fp).abs() < 1e-9);
        prop_assert!(t.success.iter().all(|s| *s > 0.0 && *s <= 1.0));
    }
}
