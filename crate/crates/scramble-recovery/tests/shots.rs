use std::f64::consts::PI;

use scramble_recovery::ensembles::UnitaryEnsemble;
use scramble_recovery::rng::RngStream;
use scramble_recovery::schemes::{outcome_distribution, SchemeKind, SchemeSetup};
use scramble_recovery::shots::{
    apply_readout, run_emulated_experiment, sample_outcomes, theta_grid, wilson_interval,
    Estimate, ReadoutError, ShotPlan, Z_95,
};

const REGISTER_SCHEMES: [SchemeKind; 3] = [SchemeKind::Ico, SchemeKind::Mdd, SchemeKind::Combined];

fn within(est: &Estimate, exact: f64, k: f64) -> bool {
    (est.value - exact).abs() <= k * est.std_error + 1e-12
}

#[test]
fn grid_is_inclusive() {
    let g = theta_grid(50).unwrap();
    assert_eq!(g.len(), 50);
    assert_eq!(g[0], 0.0);
    assert!((g[49] - PI).abs() < 1e-15);
    assert!(theta_grid(0).is_err());
}

#[test]
fn degenerate_distribution_fills_first_bin() {
    for shots in [1, 17, 1000] {
        let c = sample_outcomes(&[1.0, 0.0], shots, &RngStream::new(1)).unwrap();
        assert_eq!(c.counts, vec![shots, 0]);
        assert!(!c.clamped);
    }
}

#[test]
fn fair_coin_frequency() {
    let c = sample_outcomes(&[0.5, 0.5], 1_000_000, &RngStream::new(2)).unwrap();
    let f = c.counts[0] as f64 / 1e6;
    assert!((f - 0.5).abs() < 0.002, "{f}");
    assert_eq!(c.counts.iter().sum::<u64>(), 1_000_000);
}

#[test]
fn sampling_is_deterministic() {
    let p = [0.1, 0.2, 0.3, 0.4];
    let a = sample_outcomes(&p, 5000, &RngStream::new(9).child(4)).unwrap();
    let b = sample_outcomes(&p, 5000, &RngStream::new(9).child(4)).unwrap();
    assert_eq!(a, b);
    let c = sample_outcomes(&p, 5000, &RngStream::new(9).child(5)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn tiny_negative_probabilities_are_clamped() {
    let c = sample_outcomes(&[1.0 + 5e-13, -5e-13], 100, &RngStream::new(3)).unwrap();
    assert!(c.clamped);
    assert_eq!(c.counts, vec![100, 0]);
    assert!(sample_outcomes(&[1.1, -0.1], 10, &RngStream::new(3)).is_err());
    assert!(sample_outcomes(&[0.5, 0.4], 10, &RngStream::new(3)).is_err());
    assert!(sample_outcomes(&[], 10, &RngStream::new(3)).is_err());
}

#[test]
fn readout_confusion() {
    let e = ReadoutError::new(0.05, 0.14).unwrap();
    let one = apply_readout(&[1.0, 0.0], &[e]).unwrap();
    assert!((one[0] - 0.95).abs() < 1e-15 && (one[1] - 0.05).abs() < 1e-15);
    let one = apply_readout(&[0.0, 1.0], &[e]).unwrap();
    assert!((one[0] - 0.14).abs() < 1e-15 && (one[1] - 0.86).abs() < 1e-15);
    // Two independent qubits: the confusion matrix is a Kronecker product.
    let f = ReadoutError::new(0.02, 0.03).unwrap();
    let p = [0.4, 0.1, 0.2, 0.3];
    let got = apply_readout(&p, &[e, f]).unwrap();
    let m = |r: ReadoutError| [[1.0 - r.p1_given_0, r.p0_given_1], [r.p1_given_0, 1.0 - r.p0_given_1]];
    let (a, b) = (m(e), m(f));
    for out in 0..4 {
        let want: f64 = (0..4).map(|inp| a[out >> 1][inp >> 1] * b[out & 1][inp & 1] * p[inp]).sum();
        assert!((got[out] - want).abs() < 1e-15);
    }
    assert!(ReadoutError::new(1.2, 0.0).is_err());
    assert!(apply_readout(&p, &[e]).is_err());
}

#[test]
fn wilson_interval_oracles() {
    // k = 0 has the closed form (0, z²/(n + z²)).
    let (lo, hi) = wilson_interval(0, 10, Z_95);
    assert_eq!(lo, 0.0);
    assert!((hi - Z_95 * Z_95 / (10.0 + Z_95 * Z_95)).abs() < 1e-15);
    let (lo, hi) = wilson_interval(500, 1000, Z_95);
    assert!(((lo + hi) / 2.0 - 0.5).abs() < 1e-15);
    assert!((hi - lo - 2.0 * Z_95 * (0.25f64 / 1000.0 + Z_95 * Z_95 / 4e6).sqrt() / (1.0 + Z_95 * Z_95 / 1000.0)).abs() < 1e-15);
    let est = Estimate::polarization(750, 1000);
    assert!((est.value - 0.5).abs() < 1e-15);
    assert!(est.ci_low < 0.5 && est.ci_high > 0.5);
}

#[test]
fn counts_are_consistent() {
    let plan = ShotPlan::clifford(100, 5, RngStream::new(4)).unwrap();
    for scheme in SchemeKind::ALL {
        for pt in run_emulated_experiment(scheme, &plan).unwrap() {
            assert_eq!(pt.element_counts.len(), 24);
            assert!(pt.element_counts.iter().all(|c| c.iter().sum::<u64>() == 100));
            assert_eq!(pt.total_shots, 2400);
            assert!(pt.accepted_shots <= pt.total_shots);
            assert!((0.0..=1.0).contains(&pt.fidelity.value));
        }
    }
}

/// Per series: ≥ 47 of 50 points within 3 SE, none beyond 4.5 SE, mean z-score near 0.
fn check_series(label: &str, series: &[(Estimate, f64)]) {
    let z: Vec<f64> = series
        .iter()
        .map(|(e, x)| if e.std_error > 0.0 { (e.value - x) / e.std_error } else { (e.value - x) * 1e12 })
        .collect();
    let inside = z.iter().filter(|z| z.abs() <= 3.0).count();
    assert!(inside >= 47, "{label}: {inside}/50 within 3 SE");
    assert!(z.iter().all(|z| z.abs() <= 4.5), "{label}: {z:?}");
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    assert!(mean.abs() < 3.0 / (z.len() as f64).sqrt(), "{label}: bias z {mean}");
}

#[test]
fn large_shot_estimates_match_exact_values() {
    for scheme in SchemeKind::ALL {
        let plan = ShotPlan::clifford(50_000, 50, RngStream::new(77)).unwrap();
        let pts = run_emulated_experiment(scheme, &plan).unwrap();
        let series = |f: &dyn Fn(&scramble_recovery::shots::EmulatedPoint) -> Option<(Estimate, f64)>| {
            pts.iter().filter_map(f).collect::<Vec<_>>()
        };
        check_series(&format!("{scheme} success"), &series(&|p| Some((p.success, p.analytic.success))));
        check_series(&format!("{scheme} fidelity"), &series(&|p| Some((p.fidelity, p.analytic.fidelity))));
        let sc = series(&|p| p.sigma_c_x.zip(p.analytic.sigma_c_x));
        if !sc.is_empty() {
            check_series(&format!("{scheme} sigma_c_x"), &sc);
        }
        let sa = series(&|p| p.sigma_a_x.zip(p.analytic.sigma_a_x));
        if !sa.is_empty() {
            check_series(&format!("{scheme} sigma_a_x"), &sa);
        }
    }
}

#[test]
fn ico_control_polarization_is_flat() {
    let plan = ShotPlan::clifford(1000, 50, RngStream::new(5)).unwrap();
    let pts = run_emulated_experiment(SchemeKind::Ico, &plan).unwrap();
    let est: Vec<Estimate> = pts.iter().map(|p| p.sigma_c_x.unwrap()).collect();
    assert!(est.iter().all(|e| within(e, 2.0 / 3.0, 4.0)));
    let mean = est.iter().map(|e| e.value).sum::<f64>() / 50.0;
    let se = est[0].std_error / 50f64.sqrt();
    assert!((mean - 2.0 / 3.0).abs() < 3.0 * se, "mean {mean}");
    assert!(pts.iter().all(|p| p.analytic.sigma_c_x == Some(2.0 / 3.0)));
}

#[test]
fn readout_errors_lower_fidelity() {
    for scheme in REGISTER_SCHEMES {
        let ideal = ShotPlan::clifford(1000, 50, RngStream::new(6)).unwrap();
        let flipped = ideal.clone().with_readout(vec![ReadoutError::new(0.05, 0.14).unwrap()]);
        let mean = |plan: &ShotPlan| {
            run_emulated_experiment(scheme, plan).unwrap().iter().map(|p| p.fidelity.value).sum::<f64>() / 50.0
        };
        let (a, b) = (mean(&ideal), mean(&flipped));
        assert!(b < a, "{scheme}: {a} -> {b}");
    }
}

#[test]
fn readout_model_count_must_match() {
    let plan = ShotPlan::clifford(10, 2, RngStream::new(1))
        .unwrap()
        .with_readout(vec![ReadoutError::IDEAL; 2]);
    assert!(run_emulated_experiment(SchemeKind::Combined, &plan).is_err());
    assert!(run_emulated_experiment(SchemeKind::Ico, &plan).is_ok());
}

#[test]
fn invalid_plans_are_rejected() {
    let mut plan = ShotPlan::clifford(0, 3, RngStream::new(1)).unwrap();
    assert!(run_emulated_experiment(SchemeKind::Ico, &plan).is_err());
    plan.shots = 10;
    plan.thetas = vec![4.0];
    assert!(run_emulated_experiment(SchemeKind::Ico, &plan).is_err());
    plan.thetas = vec![0.5];
    plan.ensemble = UnitaryEnsemble::haar(3, 4, RngStream::new(2)).unwrap();
    assert!(run_emulated_experiment(SchemeKind::Ico, &plan).is_err());
}

#[test]
fn estimator_error_scales_as_inverse_root_shots() {
    let theta = 1.0;
    let reps = 50u64;
    let points: Vec<(f64, f64)> = [100u64, 1000, 10_000]
        .iter()
        .map(|&shots| {
            let mse = (0..reps)
                .map(|r| {
                    let mut plan = ShotPlan::clifford(shots, 1, RngStream::new(1000 + r).child(shots)).unwrap();
                    plan.thetas = vec![theta];
                    let pt = &run_emulated_experiment(SchemeKind::Mdd, &plan).unwrap()[0];
                    (pt.sigma_a_x.unwrap().value - pt.analytic.sigma_a_x.unwrap()).powi(2)
                })
                .sum::<f64>()
                / reps as f64;
            (shots as f64, mse.sqrt())
        })
        .collect();
    let slope = (points[2].1.ln() - points[0].1.ln()) / (points[2].0.ln() - points[0].0.ln());
    assert!((-0.6..=-0.4).contains(&slope), "slope {slope}, {points:?}");
}

#[test]
fn pooling_matches_sampling_the_averaged_distribution() {
    let theta = 0.8;
    let shots = 200u64;
    let reps = 50u64;
    let setup = SchemeSetup::sweep_point(SchemeKind::Combined, theta);
    let cl = UnitaryEnsemble::clifford_1q();
    let dists: Vec<Vec<f64>> = cl
        .members()
        .iter()
        .map(|u| outcome_distribution(&setup, u).unwrap().probabilities)
        .collect();
    let avg: Vec<f64> = (0..dists[0].len())
        .map(|i| dists.iter().map(|d| d[i]).sum::<f64>() / dists.len() as f64)
        .collect();
    let total = shots * 24;
    let mut pooled = Vec::new();
    let mut direct = Vec::new();
    for r in 0..reps {
        let mut plan = ShotPlan::clifford(shots, 1, RngStream::new(3000 + r)).unwrap();
        plan.thetas = vec![theta];
        let pt = &run_emulated_experiment(SchemeKind::Combined, &plan).unwrap()[0];
        pooled.push(pt.accepted_shots as f64 / total as f64);
        let c = sample_outcomes(&avg, total, &RngStream::new(5000 + r)).unwrap();
        direct.push((c.counts[0] + c.counts[1]) as f64 / total as f64);
    }
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        (m, var)
    };
    let ((m1, v1), (m2, v2)) = (stats(&pooled), stats(&direct));
    let se = ((v1 + v2) / reps as f64).sqrt();
    assert!((m1 - m2).abs() < 3.0 * se, "{m1} vs {m2} (se {se})");
    // Retained fraction converges to p₊₊.
    let p = avg[0] + avg[1];
    assert!((m1 - p).abs() < 3.0 * (v1 / reps as f64).sqrt());
    assert!((p - (2.0 * theta.sin().powi(2) + 3.0) / 6.0).abs() < 1e-12);
}
