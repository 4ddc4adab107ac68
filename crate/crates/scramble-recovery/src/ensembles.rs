//! Unitary ensembles: Haar sampling, the single-qubit Clifford and Pauli groups, second-moment
//! (2-design) verification against the Weingarten formula, and the three-qubit scrambler.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::channels::KrausChannel;
use crate::error::{param, Error, Result};
use crate::linalg::{
    c64, identity, kron, ket, max_abs_diff, outer, pauli_x, pauli_y, pauli_z, unitarity_defect,
    CMatrix, CVector, DensityMatrix, SystemLayout, C64,
};
use crate::rng::RngStream;

/// Members accepted as unitary when ‖U†U − I‖ is below this (entrywise max).
pub const UNITARITY_TOL: f64 = 1e-10;

/// Samples drawn per RNG child stream; fixes the work split independently of thread count.
const HAAR_CHUNK: usize = 1024;

/// Single-qubit Clifford realizations as gate strings, applied left to right in time.
/// `X/2` is exp(−iπσˣ/4), `-X/2` its inverse, `X` is exp(−iπσˣ/2).
pub const CLIFFORD_GATE_STRINGS: [&str; 24] = [
    "I",
    "X",
    "Y",
    "Z",
    "X/2",
    "-X/2",
    "Y/2",
    "-Y/2",
    "-X/2 Y/2 X/2",
    "-X/2 -Y/2 X/2",
    "X -Y/2",
    "X Y/2",
    "Y X/2",
    "Y -X/2",
    "X/2 Y/2 X/2",
    "-X/2 Y/2 -X/2",
    "Y/2 X/2",
    "Y/2 -X/2",
    "-Y/2 X/2",
    "-Y/2 -X/2",
    "-X/2 -Y/2",
    "X/2 -Y/2",
    "-X/2 Y/2",
    "X/2 Y/2",
];

fn rotation(sigma: CMatrix, angle: f64) -> CMatrix {
    identity(2).scale((angle / 2.0).cos()) - sigma * c64(0.0, (angle / 2.0).sin())
}

fn gate(name: &str) -> Result<CMatrix> {
    use std::f64::consts::{FRAC_PI_2, PI};
    let (axis, angle) = match name {
        "I" => return Ok(identity(2)),
        "X" => (pauli_x(), PI),
        "Y" => (pauli_y(), PI),
        "Z" => (pauli_z(), PI),
        "X/2" => (pauli_x(), FRAC_PI_2),
        "-X/2" => (pauli_x(), -FRAC_PI_2),
        "Y/2" => (pauli_y(), FRAC_PI_2),
        "-Y/2" => (pauli_y(), -FRAC_PI_2),
        other => return Err(param(format!("unknown gate '{other}'"))),
    };
    Ok(rotation(axis, angle))
}

/// Unitary of a space-separated gate string, leftmost gate applied first.
pub fn gate_string_unitary(s: &str) -> Result<CMatrix> {
    s.split_whitespace()
        .try_fold(identity(2), |acc, g| Ok(gate(g)? * acc))
}

/// Haar-random unitary: QR of a complex Ginibre matrix with R's diagonal made positive.
pub fn haar_sample<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<CMatrix> {
    if dim == 0 {
        return Err(param("Haar sample needs dimension ≥ 1"));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let z = CMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64(re * h, im * h)
    });
    let qr = z.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c64(1., 0.) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    Ok(q)
}

/// Haar-random pure state of dimension `dim`.
pub fn haar_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<DensityMatrix> {
    let u = haar_sample(dim, rng)?;
    DensityMatrix::from_pure(&u.column(0).into_owned())
}

/// Random mixed state: reduction of a Haar-random pure state on dim × dim.
pub fn random_density<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<DensityMatrix> {
    let psi = haar_state(dim * dim, rng)?;
    let layout = SystemLayout::new([("sys", dim), ("env", dim)])?;
    layout.partial_trace(&psi, &["sys"])
}

/// Random CPTP map with `kraus_count` operators, cut from a Haar isometry.
pub fn random_channel<R: Rng + ?Sized>(
    dim: usize,
    kraus_count: usize,
    rng: &mut R,
) -> Result<KrausChannel> {
    if kraus_count == 0 {
        return Err(param("random channel needs at least one Kraus operator"));
    }
    let v = haar_sample(dim * kraus_count, rng)?;
    let kraus = (0..kraus_count)
        .map(|k| v.view((k * dim, 0), (dim, dim)).into_owned())
        .collect();
    KrausChannel::new(kraus)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnsembleKind {
    HaarMc { samples: usize },
    Clifford1q,
    Pauli1q,
    Explicit,
}

/// Finite, uniformly weighted set of unitaries of one dimension.
#[derive(Clone, Debug)]
pub struct UnitaryEnsemble {
    kind: EnsembleKind,
    dim: usize,
    members: Vec<CMatrix>,
}

impl UnitaryEnsemble {
    fn checked(kind: EnsembleKind, members: Vec<CMatrix>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(param("ensemble needs at least one member"));
        };
        let dim = first.nrows();
        for u in &members {
            let defect = unitarity_defect(u);
            if u.nrows() != dim || defect > UNITARITY_TOL {
                return Err(Error::InvalidParameter(format!(
                    "ensemble member {:?} is not a {dim}-dim unitary (defect {defect:e})",
                    u.shape()
                )));
            }
        }
        Ok(Self { kind, dim, members })
    }

    /// The 24 single-qubit Clifford elements.
    pub fn clifford_1q() -> Self {
        let members = CLIFFORD_GATE_STRINGS
            .iter()
            .map(|s| gate_string_unitary(s).expect("table strings use known gates"))
            .collect();
        Self::checked(EnsembleKind::Clifford1q, members).expect("Clifford gates are unitary")
    }

    /// {I, σˣ, σʸ, σᶻ}.
    pub fn pauli_1q() -> Self {
        let members = (0..4).map(crate::linalg::pauli).collect();
        Self::checked(EnsembleKind::Pauli1q, members).expect("Paulis are unitary")
    }

    pub fn explicit(members: Vec<CMatrix>) -> Result<Self> {
        Self::checked(EnsembleKind::Explicit, members)
    }

    /// `samples` Haar unitaries; chunk `c` of the sample list is drawn from `rng.child(c)`.
    pub fn haar(dim: usize, samples: usize, rng: RngStream) -> Result<Self> {
        if samples == 0 {
            return Err(param("Haar ensemble needs at least one sample"));
        }
        let chunks = samples.div_ceil(HAAR_CHUNK);
        let members: Vec<CMatrix> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut g = rng.child(c as u64).generator();
                let n = HAAR_CHUNK.min(samples - c * HAAR_CHUNK);
                (0..n).map(|_| haar_sample(dim, &mut g)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        Ok(Self { kind: EnsembleKind::HaarMc { samples }, dim, members })
    }

    pub fn kind(&self) -> &EnsembleKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn members(&self) -> &[CMatrix] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Uniform average of `f(U)` over members. Partial sums use fixed chunks and are
    /// combined in index order, so the result is bit-reproducible.
    pub fn mean<F>(&self, f: F) -> CMatrix
    where
        F: Fn(&CMatrix) -> CMatrix + Sync,
    {
        let partials: Vec<CMatrix> = self
            .members
            .par_chunks(HAAR_CHUNK)
            .map(|chunk| {
                let mut it = chunk.iter().map(&f);
                let first = it.next().expect("chunks are nonempty");
                it.fold(first, |acc, x| acc + x)
            })
            .collect();
        let mut it = partials.into_iter();
        let first = it.next().expect("ensemble is nonempty");
        it.fold(first, |acc, x| acc + x).unscale(self.members.len() as f64)
    }

    /// Σ_U Λ conjugated by U: Kraus set {U M_k U† / √N}.
    pub fn twirl_channel(&self, ch: &KrausChannel) -> Result<KrausChannel> {
        if ch.dim() != self.dim {
            return Err(crate::error::dim(format!(
                "{}-dim channel twirled by a {}-dim ensemble",
                ch.dim(),
                self.dim
            )));
        }
        let w = 1.0 / (self.members.len() as f64).sqrt();
        let kraus = self
            .members
            .iter()
            .flat_map(|u| ch.kraus().iter().map(move |m| (u * m * u.adjoint()).scale(w)))
            .collect();
        KrausChannel::new(kraus)
    }
}

/// ∫dU U_{m1n1} U*_{k1l1} U_{m2n2} U*_{k2l2}; `idx` = [m1, n1, k1, l1, m2, n2, k2, l2].
pub fn weingarten_moment(idx: [usize; 8], dim: usize) -> Result<f64> {
    if dim < 2 {
        return Err(param("Weingarten second moment needs dimension ≥ 2"));
    }
    if idx.iter().any(|&i| i >= dim) {
        return Err(param(format!("index tuple {idx:?} out of range for dimension {dim}")));
    }
    let [m1, n1, k1, l1, m2, n2, k2, l2] = idx;
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let dd = dim as f64;
    let direct = d(m1, k1) * d(m2, k2) * d(n1, l1) * d(n2, l2);
    let crossed = d(m1, k2) * d(m2, k1) * d(n1, l2) * d(n2, l1);
    let mixed = d(m1, k1) * d(m2, k2) * d(n1, l2) * d(n2, l1)
        + d(m1, k2) * d(m2, k1) * d(n1, l1) * d(n2, l2);
    Ok((direct + crossed - mixed / dd) / (dd * dd - 1.0))
}

/// Ensemble average of the monomial U_{m1n1} U*_{k1l1} U_{m2n2} U*_{k2l2}.
pub fn ensemble_moment(ens: &UnitaryEnsemble, idx: [usize; 8]) -> C64 {
    let [m1, n1, k1, l1, m2, n2, k2, l2] = idx;
    let sum: C64 = ens
        .members()
        .iter()
        .map(|u| u[(m1, n1)] * u[(k1, l1)].conj() * u[(m2, n2)] * u[(k2, l2)].conj())
        .sum();
    sum / ens.len() as f64
}

#[derive(Clone, Debug, Serialize)]
pub struct DesignReport {
    pub max_deviation: f64,
    pub worst_index: [usize; 8],
    pub monomials_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares ensemble averages of degree-(2,2) monomials with the Haar values. All D⁸ index
/// tuples are checked when `trials` is 0 or at least D⁸; otherwise `trials` tuples are drawn
/// from a fixed stream.
pub fn verify_2design(ens: &UnitaryEnsemble, trials: usize, tol: f64) -> Result<DesignReport> {
    let dim = ens.dim();
    let total = dim.checked_pow(8).unwrap_or(usize::MAX);
    let tuples: Vec<[usize; 8]> = if trials == 0 || trials >= total {
        (0..total)
            .map(|mut code| {
                let mut t = [0usize; 8];
                for slot in t.iter_mut().rev() {
                    *slot = code % dim;
                    code /= dim;
                }
                t
            })
            .collect()
    } else {
        let mut g = RngStream::new(0x2DE5_1C4E).generator();
        (0..trials)
            .map(|_| std::array::from_fn(|_| g.random_range(0..dim)))
            .collect()
    };
    let mut worst = (0.0, [0usize; 8]);
    for t in &tuples {
        let dev = (ensemble_moment(ens, *t) - c64(weingarten_moment(*t, dim)?, 0.)).norm();
        if dev > worst.0 {
            worst = (dev, *t);
        }
    }
    Ok(DesignReport {
        max_deviation: worst.0,
        worst_index: worst.1,
        monomials_checked: tuples.len(),
        tolerance: tol,
        passed: worst.0 < tol,
    })
}

/// Three-qubit scrambler I⊗|01⟩⟨00| + σˣ⊗|00⟩⟨01| − iσʸ⊗|11⟩⟨10| − σᶻ⊗|10⟩⟨11|; qubit 1 is the
/// most significant factor, qubits 2–3 form the bath.
pub fn scrambler_3q() -> CMatrix {
    let b = |i: usize, j: usize| ket(4, i) * ket(4, j).adjoint();
    let minus_i_y = pauli_y() * c64(0., -1.);
    kron(&identity(2), &b(1, 0))
        + kron(&pauli_x(), &b(0, 1))
        + kron(&minus_i_y, &b(3, 2))
        - kron(&pauli_z(), &b(2, 3))
}

/// Map induced on qubit 1 by scrambling with [`scrambler_3q`] (bath |+⟩|+⟩), applying `ch` to
/// qubit 1, unscrambling, and discarding the bath.
pub fn scrambler_induced_state(ch: &KrausChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if ch.dim() != 2 || rho.dim() != 2 {
        return Err(crate::error::dim("scrambler acts on a qubit channel and qubit state"));
    }
    let layout = SystemLayout::new([("q1", 2), ("bath", 4)])?;
    let plus = CVector::from_element(4, c64(0.5, 0.));
    let input = kron(rho.matrix(), &outer(&plus));
    let u = scrambler_3q();
    let lifted = ch.lift(&layout, "q1")?;
    let scrambled = &u * input * u.adjoint();
    let damaged = lifted.apply_matrix(&scrambled)?;
    let out = u.adjoint() * damaged * &u;
    layout.partial_trace(&DensityMatrix::new(out)?, &["q1"])
}

/// Whether `a` and `b` agree up to a global phase.
pub fn equal_up_to_phase(a: &CMatrix, b: &CMatrix) -> bool {
    let overlap = (b.adjoint() * a).trace();
    let n = a.nrows() as f64;
    if (overlap.norm() - n).abs() > 1e-9 {
        return false;
    }
    let phase = overlap / overlap.norm();
    max_abs_diff(a, &(b * phase)) < 1e-9
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_strings_apply_left_first() {
        let u = gate_string_unitary("X/2 Y/2").unwrap();
        let expect = gate("Y/2").unwrap() * gate("X/2").unwrap();
        assert!(max_abs_diff(&u, &expect) < 1e-15);
    }

    #[test]
    fn haar_chunks_do_not_depend_on_sample_count() {
        let a = UnitaryEnsemble::haar(2, 10, RngStream::new(3)).unwrap();
        let b = UnitaryEnsemble::haar(2, 2000, RngStream::new(3)).unwrap();
        for i in 0..10 {
            assert_eq!(a.members()[i], b.members()[i]);
        }
    }
}
