use proptest::prelude::*;
use scramble_recovery::ensembles::{haar_state, random_density};
use scramble_recovery::linalg::{
    c64, fidelity_with_pure, hs_inner, hs_norm, identity, kron, max_abs_diff, pauli_x, pauli_y,
    pauli_z, CMatrix, CVector, DensityMatrix, SystemLayout,
};
use scramble_recovery::rng::RngStream;

fn random_matrix(d: usize, seed: u64) -> CMatrix {
    use rand::Rng;
    let mut g = RngStream::new(seed).generator();
    CMatrix::from_fn(d, d, |_, _| c64(g.random_range(-1.0..1.0), g.random_range(-1.0..1.0)))
}

#[test]
fn kron_examples() {
    assert_eq!(kron(&identity(2), &identity(2)), identity(4));
    let zi = kron(&pauli_z(), &identity(2));
    let want = CMatrix::from_diagonal(&CVector::from_vec([1.0, 1.0, -1.0, -1.0].map(|x| c64(x, 0.)).to_vec()));
    assert_eq!(zi, want);
    let xx = kron(&pauli_x(), &pauli_x());
    assert_eq!(&xx * &xx, identity(4));
}

fn integer_matrix(d: usize, seed: u64) -> CMatrix {
    use rand::Rng;
    let mut g = RngStream::new(seed).generator();
    CMatrix::from_fn(d, d, |_, _| c64(g.random_range(-9..=9) as f64, g.random_range(-9..=9) as f64))
}

#[test]
fn kron_is_associative() {
    // Integer entries keep every product exact, so equality is bitwise.
    let (a, b, c) = (integer_matrix(2, 1), integer_matrix(3, 2), integer_matrix(2, 3));
    assert_eq!(kron(&kron(&a, &b), &c), kron(&a, &kron(&b, &c)));
}

#[test]
fn partial_trace_of_products_and_bell_states() {
    let mut g = RngStream::new(11).generator();
    let rho = random_density(2, &mut g).unwrap();
    let sigma = random_density(3, &mut g).unwrap();
    let layout = SystemLayout::new([("a", 2), ("b", 3)]).unwrap();
    let joint = rho.tensor(&sigma).unwrap();
    let back = layout.partial_trace(&joint, &["a"]).unwrap();
    assert!(max_abs_diff(back.matrix(), rho.matrix()) < 1e-14);
    let back = layout.partial_trace(&joint, &["b"]).unwrap();
    assert!(max_abs_diff(back.matrix(), sigma.matrix()) < 1e-14);

    let bell = scramble_recovery::channels::max_entangled_state(2).unwrap();
    let two = SystemLayout::new([("l", 2), ("r", 2)]).unwrap();
    for keep in ["l", "r"] {
        let red = two.partial_trace(&bell, &[keep]).unwrap();
        assert!(max_abs_diff(red.matrix(), &identity(2).unscale(2.0)) < 1e-15);
    }
}

#[test]
fn partial_trace_matches_direct_summation() {
    let mut g = RngStream::new(5).generator();
    let rho = random_density(8, &mut g).unwrap();
    let layout = SystemLayout::new([("q0", 2), ("q1", 2), ("q2", 2)]).unwrap();
    let red = layout.partial_trace(&rho, &["q0", "q2"]).unwrap();
    // Direct oracle: sum over the middle index of (a b c), (a' b c').
    let m = rho.matrix();
    for a in 0..2 {
        for c in 0..2 {
            for a2 in 0..2 {
                for c2 in 0..2 {
                    let s: scramble_recovery::linalg::C64 =
                        (0..2).map(|b| m[(4 * a + 2 * b + c, 4 * a2 + 2 * b + c2)]).sum();
                    assert!((red.matrix()[(2 * a + c, 2 * a2 + c2)] - s).norm() < 1e-14);
                }
            }
        }
    }
    assert!((red.matrix().trace().re - 1.0).abs() < 1e-12);
}

#[test]
fn partial_trace_rejects_bad_input() {
    let layout = SystemLayout::new([("a", 2), ("b", 2)]).unwrap();
    let rho = DensityMatrix::maximally_mixed(4).unwrap();
    assert!(layout.partial_trace(&rho, &["c"]).is_err());
    assert!(layout.partial_trace(&rho, &[]).is_err());
    let wrong = DensityMatrix::maximally_mixed(3).unwrap();
    assert!(layout.partial_trace(&wrong, &["a"]).is_err());
    assert!(SystemLayout::new([("a", 2), ("a", 2)]).is_err());
}

#[test]
fn kept_subsystems_follow_layout_order() {
    let mut g = RngStream::new(9).generator();
    let r0 = random_density(2, &mut g).unwrap();
    let r1 = random_density(3, &mut g).unwrap();
    let r2 = random_density(2, &mut g).unwrap();
    let joint = r0.tensor(&r1).unwrap().tensor(&r2).unwrap();
    let layout = SystemLayout::new([("x", 2), ("y", 3), ("z", 2)]).unwrap();
    let red = layout.partial_trace(&joint, &["z", "x"]).unwrap();
    let want = r0.tensor(&r2).unwrap();
    assert!(max_abs_diff(red.matrix(), want.matrix()) < 1e-14);
}

#[test]
fn hs_examples() {
    assert!((hs_norm(&identity(2)) - 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(hs_inner(&pauli_x(), &pauli_y()).unwrap(), c64(0., 0.));
    let mut g = RngStream::new(2).generator();
    let psi = haar_state(3, &mut g).unwrap();
    assert!((hs_norm(psi.matrix()) - 1.0).abs() < 1e-12);
    assert!(hs_inner(&identity(2), &identity(3)).is_err());
}

#[test]
fn fidelity_examples() {
    let zero = DensityMatrix::basis(2, 0).unwrap();
    assert!((fidelity_with_pure(&zero, &zero).unwrap() - 1.0).abs() < 1e-15);
    let mixed = DensityMatrix::maximally_mixed(2).unwrap();
    let mut g = RngStream::new(4).generator();
    let psi = haar_state(2, &mut g).unwrap();
    assert!((fidelity_with_pure(&mixed, &psi).unwrap() - 0.5).abs() < 1e-12);
    // pρ + (1−p)I/2 against ρ: p + (1−p)/2 = 2/3 at p = 1/3.
    let p = 1.0 / 3.0;
    let dep = DensityMatrix::new(psi.matrix().scale(p) + identity(2).scale((1.0 - p) / 2.0)).unwrap();
    assert!((fidelity_with_pure(&dep, &psi).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert!(fidelity_with_pure(&psi, &mixed).is_err());
}

#[test]
fn density_validation_rejects_invalid_matrices() {
    let mut m = identity(2).unscale(2.0);
    m[(0, 1)] = c64(0.1, 0.);
    assert!(DensityMatrix::new(m).is_err());
    assert!(DensityMatrix::new(identity(2)).is_err());
    assert!(DensityMatrix::new(CMatrix::from_diagonal(&CVector::from_vec([c64(1.5, 0.), c64(-0.5, 0.)].to_vec()))).is_err());
    let mut nan = identity(2).unscale(2.0);
    nan[(0, 0)] = c64(f64::NAN, 0.);
    assert!(DensityMatrix::new(nan).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sequential_partial_traces_compose(seed in any::<u64>()) {
        let mut g = RngStream::new(seed).generator();
        let rho = random_density(12, &mut g).unwrap();
        let layout = SystemLayout::new([("a", 2), ("b", 3), ("c", 2)]).unwrap();
        let once = layout.partial_trace(&rho, &["c"]).unwrap();
        let ab = layout.partial_trace(&rho, &["a", "b"]).unwrap();
        let twice = layout.sublayout(&["a", "b"]).unwrap().partial_trace(&ab, &["a"]).unwrap();
        let twice = SystemLayout::new([("a", 2)]).unwrap().partial_trace(&twice, &["a"]).unwrap();
        let direct_a = layout.partial_trace(&rho, &["a"]).unwrap();
        prop_assert!(max_abs_diff(twice.matrix(), direct_a.matrix()) < 1e-12);
        prop_assert!((once.matrix().trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hs_norm_is_a_norm(s1 in any::<u64>(), s2 in any::<u64>()) {
        let (a, b) = (random_matrix(3, s1), random_matrix(3, s2));
        prop_assert!(hs_norm(&(&a + &b)) <= hs_norm(&a) + hs_norm(&b) + 1e-12);
        let ip = hs_inner(&a, &a).unwrap();
        prop_assert!((ip.re - hs_norm(&a).powi(2)).abs() < 1e-12 && ip.im.abs() < 1e-12);
    }
}
