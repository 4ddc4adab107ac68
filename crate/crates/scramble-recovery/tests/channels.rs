use std::f64::consts::PI;

use proptest::prelude::*;
use scramble_recovery::channels::{
    amplitude_damping_channel, apply_via_choi, average_fidelity_from_p,
    computational_measurement_channel, depolarizing_channel, max_entangled_state,
    orthogonal_unitary_basis, projective_measurement_channel, recovery_rate, werner_fidelity,
    KrausChannel, MeasurementDirection,
};
use scramble_recovery::ensembles::{haar_state, random_channel, random_density};
use scramble_recovery::linalg::{
    c64, hermiticity_defect, CVector, hs_inner, identity, ket, max_abs_diff, outer, pauli_x, CMatrix,
    DensityMatrix, SystemLayout,
};
use scramble_recovery::rng::RngStream;
use scramble_recovery::twirl::{twirl_output, TwirlBackend};

fn qubit() -> SystemLayout {
    SystemLayout::new([("target", 2)]).unwrap()
}

fn plus_state() -> DensityMatrix {
    let v = (ket(2, 0) + ket(2, 1)).unscale(2f64.sqrt());
    DensityMatrix::from_pure(&v).unwrap()
}

#[test]
fn apply_examples() {
    let rho = plus_state();
    assert!(max_abs_diff(KrausChannel::identity(2).apply(&rho).unwrap().matrix(), rho.matrix()) < 1e-15);
    let z = MeasurementDirection::new(0.0, 0.0, 1.0).unwrap();
    let out = projective_measurement_channel(&z, &qubit(), "target").unwrap().apply(&rho).unwrap();
    assert!(max_abs_diff(out.matrix(), &identity(2).unscale(2.0)) < 1e-15);
    let mut g = RngStream::new(1).generator();
    let r4 = random_density(4, &mut g).unwrap();
    let full = depolarizing_channel(4, 0.0).unwrap().apply(&r4).unwrap();
    assert!(max_abs_diff(full.matrix(), &identity(4).unscale(4.0)) < 1e-14);
    assert!(KrausChannel::identity(2).apply(&r4).is_err());
}

#[test]
fn projector_examples() {
    let z = MeasurementDirection::new(0.0, 0.0, 1.0).unwrap();
    let [p, m] = z.projectors();
    assert_eq!(p, outer(&ket(2, 0)));
    assert_eq!(m, outer(&ket(2, 1)));
    for theta in [0.0, 0.4, 1.3, PI / 2.0, 2.9] {
        let r = MeasurementDirection::from_theta(theta);
        let ch = projective_measurement_channel(&r, &qubit(), "target").unwrap();
        assert!(ch.completeness_defect() < 1e-15);
        // Σ_s Tr(Π_s σˣ Π_s σˣ)/2 = r_x².
        let x = pauli_x();
        let s: f64 = ch.kraus().iter().map(|k| (k * &x * k * &x).trace().re).sum::<f64>() / 2.0;
        assert!((s - r.rx2()).abs() < 1e-14, "θ={theta}");
    }
    let layout = SystemLayout::new([("target", 3)]).unwrap();
    assert!(projective_measurement_channel(&z, &layout, "target").is_err());
}

#[test]
fn depolarizing_examples() {
    let mut g = RngStream::new(2).generator();
    let rho = random_density(2, &mut g).unwrap();
    let id = depolarizing_channel(2, 1.0).unwrap().apply(&rho).unwrap();
    assert!(max_abs_diff(id.matrix(), rho.matrix()) < 1e-14);
    let out = depolarizing_channel(2, 1.0 / 3.0).unwrap().apply(&DensityMatrix::basis(2, 0).unwrap()).unwrap();
    let want = CMatrix::from_diagonal(&CVector::from_vec([c64(2.0 / 3.0, 0.), c64(1.0 / 3.0, 0.)].to_vec()));
    assert!(max_abs_diff(out.matrix(), &want) < 1e-15);
    assert!(depolarizing_channel(2, 1.2).is_err());
    assert!(depolarizing_channel(2, -0.1).is_err());
}

#[test]
fn unitary_bases() {
    let b2 = orthogonal_unitary_basis(2).unwrap();
    assert_eq!(b2.len(), 4);
    assert_eq!(b2[0], identity(2));
    assert_eq!(b2[1], pauli_x());
    let b4 = orthogonal_unitary_basis(4).unwrap();
    assert_eq!(b4.len(), 16);
    for (i, u) in b4.iter().enumerate() {
        for (j, v) in b4.iter().enumerate() {
            let g = hs_inner(u, v).unwrap();
            let want = if i == j { 4.0 } else { 0.0 };
            assert!((g - c64(want, 0.)).norm() < 1e-13);
        }
    }
    let mut g = RngStream::new(3).generator();
    for d in [2, 3, 4] {
        let rho = random_density(d, &mut g).unwrap();
        let basis = orthogonal_unitary_basis(d).unwrap();
        let avg = basis
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, u| acc + u * rho.matrix() * u.adjoint())
            .unscale((d * d) as f64);
        assert!(max_abs_diff(&avg, &identity(d).unscale(d as f64)) < 1e-13, "d={d}");
    }
}

#[test]
fn recovery_rate_examples() {
    for d in [2, 3, 4] {
        assert!((recovery_rate(&KrausChannel::identity(d)).unwrap() - 1.0).abs() < 1e-15);
    }
    let z = MeasurementDirection::new(0.0, 0.0, 1.0).unwrap();
    let p2 = recovery_rate(&projective_measurement_channel(&z, &qubit(), "target").unwrap()).unwrap();
    assert!((p2 - 1.0 / 3.0).abs() < 1e-12);
    let tb = SystemLayout::new([("target", 2), ("bath", 2)]).unwrap();
    let p4 = recovery_rate(&computational_measurement_channel(&tb, "target").unwrap()).unwrap();
    assert!((p4 - 7.0 / 15.0).abs() < 1e-12);
    // (D²/2 − 1)/(D² − 1) for a qubit measurement inside D.
    for d in [2usize, 4, 8] {
        let layout = SystemLayout::new([("target", 2), ("bath", d / 2)]).unwrap();
        let ch = projective_measurement_channel(&MeasurementDirection::from_theta(0.7), &layout, "target").unwrap();
        let dd = (d * d) as f64;
        assert!((recovery_rate(&ch).unwrap() - (dd / 2.0 - 1.0) / (dd - 1.0)).abs() < 1e-12);
    }
    assert!(recovery_rate(&KrausChannel::identity(1)).is_err());
}

#[test]
fn recovery_rate_of_depolarizing_is_its_keep_rate() {
    for d in [2, 4] {
        for p in [0.0, 0.25, 0.5, 1.0] {
            let r = recovery_rate(&depolarizing_channel(d, p).unwrap()).unwrap();
            assert!((r - p).abs() < 1e-12, "d={d} p={p}");
        }
    }
}

#[test]
fn recovery_rate_can_be_negative() {
    // Tr(σˣ) = 0: p = −1/3 for the unitary σˣ channel.
    let p = recovery_rate(&KrausChannel::unitary(pauli_x()).unwrap()).unwrap();
    assert!((p + 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn average_fidelity_examples() {
    assert_eq!(average_fidelity_from_p(1.0, 2).unwrap(), 1.0);
    assert_eq!(average_fidelity_from_p(0.0, 2).unwrap(), 0.5);
    assert!((average_fidelity_from_p(1.0 / 3.0, 2).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    // Monte-Carlo oracle: mean of Tr(ρ Λ_twirl(ρ)) over Haar pure states.
    let z = MeasurementDirection::new(0.0, 0.0, 1.0).unwrap();
    let ch = projective_measurement_channel(&z, &qubit(), "target").unwrap();
    let mut g = RngStream::new(17).generator();
    let n = 2000;
    let mean: f64 = (0..n)
        .map(|_| {
            let psi = haar_state(2, &mut g).unwrap();
            let out = twirl_output(&ch, &psi, &TwirlBackend::Analytic).unwrap().output;
            (psi.matrix() * out.matrix()).trace().re
        })
        .sum::<f64>()
        / n as f64;
    assert!((mean - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn choi_examples() {
    let phi = max_entangled_state(2).unwrap();
    let id = KrausChannel::identity(2).choi_matrix().unwrap();
    assert!(max_abs_diff(id.matrix(), phi.matrix()) < 1e-15);
    for p in [0.0, 0.3, 1.0] {
        let j = depolarizing_channel(2, p).unwrap().choi_matrix().unwrap();
        let werner = phi.matrix().scale(p) + identity(4).scale((1.0 - p) / 4.0);
        assert!(max_abs_diff(j.matrix(), &werner) < 1e-14, "p={p}");
        let singlet_fraction = (phi.matrix() * j.matrix()).trace().re;
        assert!((singlet_fraction - werner_fidelity(p).unwrap()).abs() < 1e-14);
    }
}

#[test]
fn werner_examples() {
    assert!((werner_fidelity(1.0 / 3.0).unwrap() - 0.5).abs() < 1e-15);
    assert!((werner_fidelity(0.5).unwrap() - 5.0 / 8.0).abs() < 1e-15);
    assert_eq!(werner_fidelity(1.0).unwrap(), 1.0);
    assert!(werner_fidelity(1.5).is_err());
}

#[test]
fn non_unital_channel_is_valid() {
    let ch = amplitude_damping_channel(0.3).unwrap();
    let out = ch.apply(&DensityMatrix::basis(2, 1).unwrap()).unwrap();
    assert!((out.matrix()[(0, 0)].re - 0.3).abs() < 1e-15);
    assert!(amplitude_damping_channel(1.1).is_err());
}

#[test]
fn incomplete_kraus_sets_are_rejected() {
    assert!(KrausChannel::new(vec![identity(2).scale(0.9)]).is_err());
    assert!(KrausChannel::new(vec![]).is_err());
    assert!(KrausChannel::new(vec![identity(2), identity(3)]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn choi_round_trip_and_validity(seed in any::<u64>(), d in 2usize..4, k in 1usize..4) {
        let mut g = RngStream::new(seed).generator();
        let ch = random_channel(d, k, &mut g).unwrap();
        let choi = ch.choi_matrix().unwrap();
        let rho = random_density(d, &mut g).unwrap();
        let direct = ch.apply_matrix(rho.matrix()).unwrap();
        prop_assert!(max_abs_diff(&apply_via_choi(&choi, rho.matrix()).unwrap(), &direct) < 1e-10);
        let rebuilt = KrausChannel::from_choi(choi.matrix(), d).unwrap();
        prop_assert!(max_abs_diff(&rebuilt.apply_matrix(rho.matrix()).unwrap(), &direct) < 1e-10);
    }

    #[test]
    fn apply_preserves_trace_and_hermiticity(seed in any::<u64>(), d in 2usize..5) {
        let mut g = RngStream::new(seed).generator();
        let ch = random_channel(d, 3, &mut g).unwrap();
        let rho = random_density(d, &mut g).unwrap();
        let out = ch.apply_matrix(rho.matrix()).unwrap();
        prop_assert!((out.trace().re - 1.0).abs() < 1e-10);
        prop_assert!(hermiticity_defect(&out) < 1e-10);
        prop_assert!(DensityMatrix::new(out).is_ok());
    }

    #[test]
    fn recovery_rate_ignores_kraus_adjoint(seed in any::<u64>()) {
        let mut g = RngStream::new(seed).generator();
        let ch = random_channel(2, 3, &mut g).unwrap();
        let p = recovery_rate(&ch).unwrap();
        let s: f64 = ch.kraus().iter().map(|m| m.adjoint().trace().norm_sqr()).sum();
        prop_assert!(((s - 1.0) / 3.0 - p).abs() < 1e-12);
    }
}
