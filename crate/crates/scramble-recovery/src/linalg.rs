//! Dense complex matrices, density matrices and labeled subsystem bookkeeping.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Composite systems are described by a
//! [`SystemLayout`] whose first subsystem is the most significant tensor factor, so
//! `layout.embed(op, "target")` and `layout.partial_trace(..)` never refer to positions.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{dim, param, Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Max entrywise |A − A†| accepted for a density matrix.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Max |Tr ρ − 1| accepted for a density matrix.
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted for a density matrix.
pub const PSD_FLOOR: f64 = -1e-9;
/// Max |Tr ρ² − 1| for a state to count as pure.
pub const PURITY_TOL: f64 = 1e-9;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(1., 0.), c64(1., 0.), c64(0., 0.)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(0., -1.), c64(0., 1.), c64(0., 0.)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(1., 0.), c64(0., 0.), c64(0., 0.), c64(-1., 0.)])
}

/// `I, σx, σy, σz` for `i = 0..4`.
pub fn pauli(i: usize) -> CMatrix {
    match i {
        0 => identity(2),
        1 => pauli_x(),
        2 => pauli_y(),
        3 => pauli_z(),
        _ => panic!("pauli index {i} out of range"),
    }
}

/// Hadamard gate; maps the x eigenbasis onto the computational basis.
pub fn hadamard() -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_row_slice(2, 2, &[c64(h, 0.), c64(h, 0.), c64(h, 0.), c64(-h, 0.)])
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Kronecker product of all factors, first factor most significant.
pub fn kron_all(factors: &[CMatrix]) -> CMatrix {
    factors
        .iter()
        .fold(CMatrix::from_element(1, 1, c64(1., 0.)), |acc, f| acc.kronecker(f))
}

pub fn trace(a: &CMatrix) -> C64 {
    a.trace()
}

/// Tr(a† b).
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> Result<C64> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(dim(format!(
            "hs_inner needs equal square shapes, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum())
}

pub fn hs_norm(a: &CMatrix) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Max entrywise modulus of `a − b`; infinite when shapes differ.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    max_abs_diff(a, &a.adjoint())
}

/// Max entrywise |U†U − I|.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    if u.nrows() != u.ncols() {
        return f64::INFINITY;
    }
    max_abs_diff(&(u.adjoint() * u), &identity(u.nrows()))
}

pub fn all_finite(a: &CMatrix) -> bool {
    a.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

/// Smallest eigenvalue of the Hermitian part (A + A†)/2.
pub fn min_eigenvalue(a: &CMatrix) -> f64 {
    let h = (a + a.adjoint()).scale(0.5);
    h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Computational basis vector |i⟩ of dimension `dim`.
pub fn ket(dim: usize, i: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[i] = c64(1., 0.);
    v
}

/// |v⟩⟨v| without normalization.
pub fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// Subsystem labels and dimensions of a composite Hilbert space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemLayout {
    systems: Vec<(String, usize)>,
}

impl SystemLayout {
    pub fn new<I, S>(systems: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        let systems: Vec<(String, usize)> =
            systems.into_iter().map(|(l, d)| (l.into(), d)).collect();
        if systems.is_empty() {
            return Err(param("layout needs at least one subsystem"));
        }
        for (i, (label, d)) in systems.iter().enumerate() {
            if *d == 0 {
                return Err(param(format!("subsystem '{label}' has dimension 0")));
            }
            if systems[..i].iter().any(|(l, _)| l == label) {
                return Err(param(format!("duplicate subsystem label '{label}'")));
            }
        }
        Ok(Self { systems })
    }

    pub fn dim(&self) -> usize {
        self.systems.iter().map(|(_, d)| d).product()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.systems.iter().map(|(l, _)| l.as_str())
    }

    pub fn contains(&self, label: &str) -> bool {
        self.systems.iter().any(|(l, _)| l == label)
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.systems
            .iter()
            .position(|(l, _)| l == label)
            .ok_or_else(|| param(format!("unknown subsystem label '{label}'")))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.systems[self.position(label)?].1)
    }

    fn stride(&self, pos: usize) -> usize {
        self.systems[pos + 1..].iter().map(|(_, d)| d).product()
    }

    /// Full-space index offsets of every basis state of the given subsystems, in
    /// lexicographic order with the earliest subsystem most significant.
    fn offsets(&self, positions: &[usize]) -> Vec<usize> {
        let mut out = vec![0usize];
        for &p in positions {
            let s = self.stride(p);
            let d = self.systems[p].1;
            out = out
                .iter()
                .flat_map(|&o| (0..d).map(move |k| o + k * s))
                .collect();
        }
        out
    }

    fn keep_positions(&self, keep: &[&str]) -> Result<Vec<usize>> {
        if keep.is_empty() {
            return Err(param("partial trace must keep at least one subsystem"));
        }
        let mut pos = keep
            .iter()
            .map(|l| self.position(l))
            .collect::<Result<Vec<_>>>()?;
        pos.sort_unstable();
        pos.dedup();
        Ok(pos)
    }

    /// Layout restricted to `keep`, in layout order.
    pub fn sublayout(&self, keep: &[&str]) -> Result<SystemLayout> {
        let pos = self.keep_positions(keep)?;
        Ok(SystemLayout {
            systems: pos.iter().map(|&p| self.systems[p].clone()).collect(),
        })
    }

    /// `op` on subsystem `label`, identity elsewhere.
    pub fn embed(&self, op: &CMatrix, label: &str) -> Result<CMatrix> {
        self.embed_many(&[(label, op)])
    }

    /// Tensor product placing each operator on its labeled subsystem, identity elsewhere.
    pub fn embed_many(&self, ops: &[(&str, &CMatrix)]) -> Result<CMatrix> {
        for (label, op) in ops {
            let d = self.dim_of(label)?;
            if op.nrows() != d || op.ncols() != d {
                return Err(dim(format!(
                    "operator {:?} does not fit subsystem '{label}' of dimension {d}",
                    op.shape()
                )));
            }
        }
        let factors: Vec<CMatrix> = self
            .systems
            .iter()
            .map(|(l, d)| {
                ops.iter()
                    .find(|(label, _)| label == l)
                    .map(|(_, op)| (*op).clone())
                    .unwrap_or_else(|| identity(*d))
            })
            .collect();
        Ok(kron_all(&factors))
    }

    /// Partial trace of an arbitrary operator, keeping `keep` in layout order.
    pub fn partial_trace_matrix(&self, m: &CMatrix, keep: &[&str]) -> Result<CMatrix> {
        let n = self.dim();
        if m.nrows() != n || m.ncols() != n {
            return Err(dim(format!(
                "operator {:?} does not match layout dimension {n}",
                m.shape()
            )));
        }
        let kept = self.keep_positions(keep)?;
        let traced: Vec<usize> = (0..self.systems.len()).filter(|p| !kept.contains(p)).collect();
        let ko = self.offsets(&kept);
        let to = self.offsets(&traced);
        let mut out = CMatrix::zeros(ko.len(), ko.len());
        for (i, &ri) in ko.iter().enumerate() {
            for (j, &cj) in ko.iter().enumerate() {
                out[(i, j)] = to.iter().map(|&t| m[(ri + t, cj + t)]).sum();
            }
        }
        Ok(out)
    }

    pub fn partial_trace(&self, rho: &DensityMatrix, keep: &[&str]) -> Result<DensityMatrix> {
        DensityMatrix::new(self.partial_trace_matrix(rho.matrix(), keep)?)
    }
}

/// Checks the density-matrix invariants on a raw matrix.
pub fn validate_density(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::InvalidState(format!("not a nonempty square matrix: {:?}", m.shape())));
    }
    if !all_finite(m) {
        return Err(Error::InvalidState("non-finite entry".into()));
    }
    let h = hermiticity_defect(m);
    if h > HERMITICITY_TOL {
        return Err(Error::InvalidState(format!("Hermiticity defect {h:e}")));
    }
    let t = trace(m);
    if (t - c64(1., 0.)).norm() > TRACE_TOL {
        return Err(Error::InvalidState(format!("trace {t} differs from 1")));
    }
    let e = min_eigenvalue(m);
    if e < PSD_FLOOR {
        return Err(Error::InvalidState(format!("negative eigenvalue {e:e}")));
    }
    Ok(())
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        validate_density(&matrix)?;
        Ok(Self { matrix })
    }

    /// |ψ⟩⟨ψ| for a nonzero vector, normalized.
    pub fn from_pure(psi: &CVector) -> Result<Self> {
        let n = psi.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidState("pure state vector has zero or non-finite norm".into()));
        }
        Self::new(outer(&psi.unscale(n)))
    }

    /// Computational basis state |i⟩⟨i|.
    pub fn basis(dim: usize, i: usize) -> Result<Self> {
        if i >= dim {
            return Err(param(format!("basis index {i} out of range for dimension {dim}")));
        }
        Self::new(outer(&ket(dim, i)))
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(param("dimension must be positive"));
        }
        Self::new(identity(dim).unscale(dim as f64))
    }

    /// Qubit pure state cos(θ/2)|0⟩ + e^{iφ} sin(θ/2)|1⟩.
    pub fn qubit(theta: f64, phi: f64) -> Result<Self> {
        let v = CVector::from_vec(vec![
            c64((theta / 2.0).cos(), 0.0),
            C64::from_polar((theta / 2.0).sin(), phi),
        ]);
        Self::from_pure(&v)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn is_pure(&self) -> bool {
        (self.purity() - 1.0).abs() <= PURITY_TOL
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        DensityMatrix::new(kron(&self.matrix, &other.matrix))
    }
}

/// Tr(ρ·target) for a pure target.
pub fn fidelity_with_pure(rho: &DensityMatrix, target: &DensityMatrix) -> Result<f64> {
    if rho.dim() != target.dim() {
        return Err(dim(format!("fidelity of dims {} and {}", rho.dim(), target.dim())));
    }
    if !target.is_pure() {
        return Err(Error::InvalidState(format!(
            "fidelity target must be pure, purity {}",
            target.purity()
        )));
    }
    Ok(hs_inner(rho.matrix(), target.matrix())?.re)
}
