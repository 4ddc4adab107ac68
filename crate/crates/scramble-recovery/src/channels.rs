//! CPTP maps in Kraus form, standard perturbations, and the recovery-rate functionals.
//!
//! Convention: Λ(ρ) = Σ_k M_k ρ M_k† with Σ_k M_k† M_k = I. Recovery rates depend only on
//! |Tr M_k|², so they are unchanged under M_k ↔ M_k†.

use serde::Serialize;

use crate::error::{dim, param, Error, Result};
use crate::linalg::{
    all_finite, c64, identity, ket, kron, kron_all, max_abs_diff, outer, pauli, pauli_x, pauli_y,
    pauli_z, CMatrix, DensityMatrix, SystemLayout, C64,
};

/// Max entrywise |Σ M†M − I| accepted for a channel.
pub const COMPLETENESS_TOL: f64 = 1e-10;

/// Eigenvalues of a Choi matrix below this are treated as zero when extracting Kraus operators.
const CHOI_RANK_CUTOFF: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct KrausChannel {
    dim: usize,
    kraus: Vec<CMatrix>,
}

impl KrausChannel {
    pub fn new(kraus: Vec<CMatrix>) -> Result<Self> {
        let Some(first) = kraus.first() else {
            return Err(Error::InvalidChannel("empty Kraus list".into()));
        };
        let d = first.nrows();
        for m in &kraus {
            if m.nrows() != d || m.ncols() != d {
                return Err(dim(format!("Kraus operator {:?} in a {d}-dim channel", m.shape())));
            }
            if !all_finite(m) {
                return Err(Error::InvalidChannel("non-finite Kraus entry".into()));
            }
        }
        let ch = Self { dim: d, kraus };
        let defect = ch.completeness_defect();
        if defect > COMPLETENESS_TOL {
            return Err(Error::InvalidChannel(format!("completeness defect {defect:e}")));
        }
        Ok(ch)
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, kraus: vec![identity(dim)] }
    }

    pub fn unitary(u: CMatrix) -> Result<Self> {
        Self::new(vec![u])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    /// Max entrywise |Σ M†M − I|.
    pub fn completeness_defect(&self) -> f64 {
        let sum = self
            .kraus
            .iter()
            .fold(CMatrix::zeros(self.dim, self.dim), |acc, m| acc + m.adjoint() * m);
        max_abs_diff(&sum, &identity(self.dim))
    }

    /// Linear extension Σ M X M† on an arbitrary operator.
    pub fn apply_matrix(&self, x: &CMatrix) -> Result<CMatrix> {
        if x.nrows() != self.dim || x.ncols() != self.dim {
            return Err(dim(format!("operator {:?} into a {}-dim channel", x.shape(), self.dim)));
        }
        Ok(self
            .kraus
            .iter()
            .fold(CMatrix::zeros(self.dim, self.dim), |acc, m| acc + m * x * m.adjoint()))
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        DensityMatrix::new(self.apply_matrix(rho.matrix())?)
    }

    /// `after ∘ self`.
    pub fn then(&self, after: &KrausChannel) -> Result<KrausChannel> {
        if after.dim != self.dim {
            return Err(dim(format!("composing {}-dim with {}-dim channel", self.dim, after.dim)));
        }
        let kraus = after
            .kraus
            .iter()
            .flat_map(|a| self.kraus.iter().map(move |b| a * b))
            .collect();
        KrausChannel::new(kraus)
    }

    /// The channel acting on subsystem `label` of `layout`, identity elsewhere.
    pub fn lift(&self, layout: &SystemLayout, label: &str) -> Result<KrausChannel> {
        if layout.dim_of(label)? != self.dim {
            return Err(dim(format!(
                "{}-dim channel on subsystem '{label}' of dimension {}",
                self.dim,
                layout.dim_of(label)?
            )));
        }
        let kraus = self
            .kraus
            .iter()
            .map(|m| layout.embed(m, label))
            .collect::<Result<Vec<_>>>()?;
        KrausChannel::new(kraus)
    }

    /// Unnormalized-sum Choi operator (1/D) Σ_ij |i⟩⟨j| ⊗ f(|i⟩⟨j|) of a linear map.
    fn choi_of_map(d: usize, f: impl Fn(&CMatrix) -> Result<CMatrix>) -> Result<CMatrix> {
        let mut j = CMatrix::zeros(d * d, d * d);
        for a in 0..d {
            for b in 0..d {
                let unit = ket(d, a) * ket(d, b).adjoint();
                let image = f(&unit)?;
                if image.shape() != (d, d) {
                    return Err(dim("linear map changes dimension"));
                }
                j.view_mut((a * d, b * d), (d, d)).copy_from(&image.unscale(d as f64));
            }
        }
        Ok(j)
    }

    /// Normalized Choi state (I ⊗ Λ)(|φ⁺⟩⟨φ⁺|).
    pub fn choi_matrix(&self) -> Result<DensityMatrix> {
        DensityMatrix::new(Self::choi_of_map(self.dim, |x| self.apply_matrix(x))?)
    }

    /// Kraus form of the map with normalized Choi state `choi` on a `dim`-dim system.
    pub fn from_choi(choi: &CMatrix, dim: usize) -> Result<KrausChannel> {
        if choi.shape() != (dim * dim, dim * dim) {
            return Err(self::dim(format!("Choi shape {:?} for dimension {dim}", choi.shape())));
        }
        let h = (choi + choi.adjoint()).scale(0.5);
        let eig = h.symmetric_eigen();
        let mut kraus = Vec::new();
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda < -1e-9 {
                return Err(Error::InvalidChannel(format!(
                    "map is not completely positive (Choi eigenvalue {lambda:e})"
                )));
            }
            if lambda <= CHOI_RANK_CUTOFF {
                continue;
            }
            let v = eig.eigenvectors.column(k);
            let scale = (dim as f64 * lambda).sqrt();
            let m = CMatrix::from_fn(dim, dim, |a, i| v[i * dim + a] * scale);
            kraus.push(m);
        }
        KrausChannel::new(kraus)
    }

    /// Kraus form of a CPTP linear map given by its action on operators.
    pub fn from_linear_map(dim: usize, f: impl Fn(&CMatrix) -> CMatrix) -> Result<KrausChannel> {
        let j = Self::choi_of_map(dim, |x| Ok(f(x)))?;
        Self::from_choi(&j, dim)
    }
}

/// Λ(ρ) = D·Tr_A[J (ρᵀ ⊗ I)] for a normalized Choi state `choi`.
pub fn apply_via_choi(choi: &DensityMatrix, rho: &CMatrix) -> Result<CMatrix> {
    let d = rho.nrows();
    if choi.dim() != d * d {
        return Err(dim(format!("Choi of dim {} with a {d}-dim input", choi.dim())));
    }
    let layout = SystemLayout::new([("in", d), ("out", d)])?;
    let prod = choi.matrix() * kron(&rho.transpose(), &identity(d));
    Ok(layout.partial_trace_matrix(&prod, &["out"])?.scale(d as f64))
}

/// Unit Bloch vector r of a projective qubit measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeasurementDirection {
    r_x: f64,
    r_y: f64,
    r_z: f64,
}

impl MeasurementDirection {
    pub fn new(r_x: f64, r_y: f64, r_z: f64) -> Result<Self> {
        let n2 = r_x * r_x + r_y * r_y + r_z * r_z;
        if !n2.is_finite() || (n2 - 1.0).abs() > 1e-10 {
            return Err(param(format!("measurement direction has |r|² = {n2}")));
        }
        Ok(Self { r_x, r_y, r_z })
    }

    /// r = (sin θ, 0, cos θ), the x–z sweep convention.
    pub fn from_theta(theta: f64) -> Self {
        Self { r_x: theta.sin(), r_y: 0.0, r_z: theta.cos() }
    }

    pub fn components(&self) -> [f64; 3] {
        [self.r_x, self.r_y, self.r_z]
    }

    pub fn rx2(&self) -> f64 {
        self.r_x * self.r_x
    }

    /// r·σ.
    pub fn sigma(&self) -> CMatrix {
        pauli_x().scale(self.r_x) + pauli_y().scale(self.r_y) + pauli_z().scale(self.r_z)
    }

    /// Direction of σˣ Π σˣ: r′ = (r_x, −r_y, −r_z).
    pub fn x_conjugated(&self) -> Self {
        Self { r_x: self.r_x, r_y: -self.r_y, r_z: -self.r_z }
    }

    /// (Π₊, Π₋) = ((I + r·σ)/2, (I − r·σ)/2).
    pub fn projectors(&self) -> [CMatrix; 2] {
        let s = self.sigma();
        [(identity(2) + &s).scale(0.5), (identity(2) - s).scale(0.5)]
    }
}

/// Two-outcome projective measurement along `r` on the qubit `target`, identity elsewhere.
pub fn projective_measurement_channel(
    r: &MeasurementDirection,
    layout: &SystemLayout,
    target: &str,
) -> Result<KrausChannel> {
    if layout.dim_of(target)? != 2 {
        return Err(Error::Unsupported(format!(
            "projective measurement needs a qubit target, '{target}' has dimension {}",
            layout.dim_of(target)?
        )));
    }
    let kraus = r
        .projectors()
        .iter()
        .map(|p| layout.embed(p, target))
        .collect::<Result<Vec<_>>>()?;
    KrausChannel::new(kraus)
}

/// Non-selective measurement of `target` in its computational basis.
pub fn computational_measurement_channel(
    layout: &SystemLayout,
    target: &str,
) -> Result<KrausChannel> {
    let d = layout.dim_of(target)?;
    let kraus = (0..d)
        .map(|i| layout.embed(&outer(&ket(d, i)), target))
        .collect::<Result<Vec<_>>>()?;
    KrausChannel::new(kraus)
}

/// D² unitaries with U₀ = I and Tr(U_i† U_j) = D δ_ij: Pauli strings for D = 2ⁿ, clock-and-shift
/// products XᵃZᵇ otherwise.
pub fn orthogonal_unitary_basis(dim: usize) -> Result<Vec<CMatrix>> {
    if dim == 0 {
        return Err(param("dimension must be positive"));
    }
    if dim.is_power_of_two() {
        let n = dim.trailing_zeros() as usize;
        let out = (0..dim * dim)
            .map(|code| {
                let factors: Vec<CMatrix> =
                    (0..n).map(|q| pauli((code >> (2 * (n - 1 - q))) & 3)).collect();
                kron_all(&factors)
            })
            .collect();
        return Ok(out);
    }
    let omega = |k: usize| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / dim as f64);
    let shift = CMatrix::from_fn(dim, dim, |i, j| {
        if i == (j + 1) % dim {
            c64(1., 0.)
        } else {
            c64(0., 0.)
        }
    });
    let clock = CMatrix::from_fn(dim, dim, |i, j| if i == j { omega(i) } else { c64(0., 0.) });
    let mut out = Vec::with_capacity(dim * dim);
    let mut xa = identity(dim);
    for _ in 0..dim {
        let mut zb = identity(dim);
        for _ in 0..dim {
            out.push(&xa * &zb);
            zb = &zb * &clock;
        }
        xa = &xa * &shift;
    }
    Ok(out)
}

/// ρ ↦ pρ + (1 − p) I/D, with Kraus weights ((D²−1)p+1)/D² on I and (1−p)/D² on each other
/// basis unitary.
pub fn depolarizing_channel(dim: usize, p: f64) -> Result<KrausChannel> {
    if !(0.0..=1.0).contains(&p) {
        return Err(param(format!("depolarizing keep-rate {p} outside [0, 1]")));
    }
    let d2 = (dim * dim) as f64;
    let basis = orthogonal_unitary_basis(dim)?;
    let w0 = (((d2 - 1.0) * p + 1.0) / d2).sqrt();
    let wi = ((1.0 - p) / d2).sqrt();
    let kraus = basis
        .into_iter()
        .enumerate()
        .filter_map(|(i, u)| {
            let w = if i == 0 { w0 } else { wi };
            (w > 0.0).then(|| u.scale(w))
        })
        .collect();
    KrausChannel::new(kraus)
}

/// Qubit amplitude damping with decay probability γ (non-unital).
pub fn amplitude_damping_channel(gamma: f64) -> Result<KrausChannel> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(param(format!("damping probability {gamma} outside [0, 1]")));
    }
    let k0 = CMatrix::from_row_slice(
        2,
        2,
        &[c64(1., 0.), c64(0., 0.), c64(0., 0.), c64((1.0 - gamma).sqrt(), 0.)],
    );
    let k1 = CMatrix::from_row_slice(
        2,
        2,
        &[c64(0., 0.), c64(gamma.sqrt(), 0.), c64(0., 0.), c64(0., 0.)],
    );
    KrausChannel::new(vec![k0, k1])
}

/// p = (Σ_k |Tr M_k|² − 1)/(D² − 1). May be negative.
pub fn recovery_rate(ch: &KrausChannel) -> Result<f64> {
    let d = ch.dim();
    if d < 2 {
        return Err(param("recovery rate needs dimension ≥ 2"));
    }
    let d2 = (d * d) as f64;
    let s: f64 = ch.kraus().iter().map(|m| m.trace().norm_sqr()).sum();
    Ok((s - 1.0) / (d2 - 1.0))
}

/// Average fidelity (1 − 1/D) p + 1/D of the twirled channel.
pub fn average_fidelity_from_p(p: f64, dim: usize) -> Result<f64> {
    if dim < 2 {
        return Err(param("average fidelity needs dimension ≥ 2"));
    }
    let d = dim as f64;
    Ok((1.0 - 1.0 / d) * p + 1.0 / d)
}

/// Singlet fraction (1 + 3p)/4 of the two-qubit Werner state.
pub fn werner_fidelity(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(param(format!("Werner parameter {p} outside [0, 1]")));
    }
    Ok((1.0 + 3.0 * p) / 4.0)
}

/// |Φ⁺⟩⟨Φ⁺| on two `dim`-level systems.
pub fn max_entangled_state(dim: usize) -> Result<DensityMatrix> {
    let v = (0..dim).fold(crate::linalg::CVector::zeros(dim * dim), |mut acc, i| {
        acc[i * dim + i] = c64(1., 0.);
        acc
    });
    DensityMatrix::from_pure(&v)
}
