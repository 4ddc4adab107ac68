//! Twirled channels ∫dU U Λ(U† · U) U† computed by interchangeable backends, the Haar
//! second-moment "sandwich" integrals behind every scheme block, and the large-D residual of
//! the ICO off-diagonal block.
//!
//! The analytic backend evaluates the Weingarten closed forms and is valid in any dimension.
//! The Clifford backend averages over the 24 single-qubit Cliffords, which is exact for every
//! degree-(2,2) integrand but only for a scrambled composite of dimension 2. The Haar backend
//! averages over sampled unitaries.

use std::fmt;

use serde::Serialize;

use crate::channels::{recovery_rate, KrausChannel};
use crate::ensembles::UnitaryEnsemble;
use crate::error::{dim, Error, Result};
use crate::linalg::{hs_norm, identity, ket, max_abs_diff, CMatrix, DensityMatrix};
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TwirlBackend {
    Analytic,
    CliffordExact,
    HaarMc { samples: usize, rng: RngStream },
}

impl TwirlBackend {
    /// `analytic`, `clifford`, or `haar:N`.
    pub fn label(&self) -> String {
        match self {
            TwirlBackend::Analytic => "analytic".into(),
            TwirlBackend::CliffordExact => "clifford".into(),
            TwirlBackend::HaarMc { samples, .. } => format!("haar:{samples}"),
        }
    }

    /// Whether the backend is exact (no sampling error).
    pub fn is_exact(&self) -> bool {
        !matches!(self, TwirlBackend::HaarMc { .. })
    }

    /// The averaging ensemble for a scrambled system of dimension `d`; `None` for analytic.
    pub fn ensemble(&self, d: usize) -> Result<Option<UnitaryEnsemble>> {
        match self {
            TwirlBackend::Analytic => Ok(None),
            TwirlBackend::CliffordExact if d == 2 => Ok(Some(UnitaryEnsemble::clifford_1q())),
            TwirlBackend::CliffordExact => Err(Error::Unsupported(format!(
                "clifford backend needs a scrambled dimension of 2, got {d}"
            ))),
            TwirlBackend::HaarMc { samples, rng } => {
                Ok(Some(UnitaryEnsemble::haar(d, *samples, *rng)?))
            }
        }
    }
}

impl fmt::Display for TwirlBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Clone, Debug)]
pub struct TwirlResult {
    pub output: DensityMatrix,
    pub recovery_rate: f64,
    pub backend: TwirlBackend,
    pub samples: usize,
}

fn depolarized(x: &CMatrix, p: f64) -> CMatrix {
    let d = x.nrows();
    x.scale(p) + identity(d) * (x.trace() * ((1.0 - p) / d as f64))
}

/// Twirled map on an arbitrary operator; callers guarantee `x` matches the channel dimension.
fn twirled_apply(ch: &KrausChannel, x: &CMatrix, p: f64, ens: Option<&UnitaryEnsemble>) -> CMatrix {
    match ens {
        None => depolarized(x, p),
        Some(e) => e.mean(|u| {
            let y = ch
                .apply_matrix(&(u.adjoint() * x * u))
                .expect("dimension checked by caller");
            u * y * u.adjoint()
        }),
    }
}

/// Λ_twirl(ρ): pρ + (1−p)I/D for the analytic backend, an ensemble average otherwise.
pub fn twirl_output(
    ch: &KrausChannel,
    rho_in: &DensityMatrix,
    backend: &TwirlBackend,
) -> Result<TwirlResult> {
    if rho_in.dim() != ch.dim() {
        return Err(dim(format!("{}-dim state into a {}-dim channel", rho_in.dim(), ch.dim())));
    }
    let p = recovery_rate(ch)?;
    let ens = backend.ensemble(ch.dim())?;
    let out = twirled_apply(ch, rho_in.matrix(), p, ens.as_ref());
    Ok(TwirlResult {
        output: DensityMatrix::new(out)?,
        recovery_rate: p,
        backend: backend.clone(),
        samples: ens.as_ref().map_or(0, UnitaryEnsemble::len),
    })
}

/// The twirled channel itself, in a compact Kraus form (rank of its Choi matrix).
pub fn twirl_channel(ch: &KrausChannel, backend: &TwirlBackend) -> Result<KrausChannel> {
    let p = recovery_rate(ch)?;
    let ens = backend.ensemble(ch.dim())?;
    KrausChannel::from_linear_map(ch.dim(), |x| twirled_apply(ch, x, p, ens.as_ref()))
}

/// Max entrywise deviation between the Clifford-averaged and analytic twirls over all
/// matrix units |i⟩⟨j| of a qubit.
pub fn clifford_exact_equals_analytic(ch: &KrausChannel) -> Result<f64> {
    if ch.dim() != 2 {
        return Err(Error::Unsupported(format!(
            "Clifford comparison needs a qubit channel, got dimension {}",
            ch.dim()
        )));
    }
    let p = recovery_rate(ch)?;
    let ens = UnitaryEnsemble::clifford_1q();
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let unit = ket(2, i) * ket(2, j).adjoint();
            let a = twirled_apply(ch, &unit, p, None);
            let c = twirled_apply(ch, &unit, p, Some(&ens));
            worst = worst.max(max_abs_diff(&a, &c));
        }
    }
    Ok(worst)
}

/// Which way the second scrambling factor is oriented in a sandwich integral.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchOrder {
    /// ∫dU (U a U†) b (U c U†).
    Same,
    /// ∫dU (U a U†) b (U† c U).
    Opposite,
}

/// Haar average of a degree-(2,2) sandwich, evaluated with the Weingarten formula.
pub fn haar_sandwich(order: BranchOrder, a: &CMatrix, b: &CMatrix, c: &CMatrix) -> Result<CMatrix> {
    let d = a.nrows();
    if [a.shape(), b.shape(), c.shape()].iter().any(|s| *s != (d, d)) {
        return Err(dim("sandwich operands must share one square shape"));
    }
    if d < 2 {
        return Err(dim("sandwich integral needs dimension ≥ 2"));
    }
    let dd = d as f64;
    let norm = dd * dd - 1.0;
    let (ta, tb, tc) = (a.trace(), b.trace(), c.trace());
    let out = match order {
        BranchOrder::Same => {
            let tac = (a * c).trace();
            (b * (ta * tc) + identity(d) * (tac * tb)).unscale(norm)
                - (b * tac + identity(d) * (ta * tc * tb)).unscale(dd * norm)
        }
        BranchOrder::Opposite => {
            (b * (ta * tc) + c * b * a).unscale(norm) - (b * a * tc + c * b * ta).unscale(dd * norm)
        }
    };
    Ok(out)
}

/// ICO off-diagonal block ρ̃ = Σ_k ∫dU U M_k U† ρ U† M_k† U.
pub fn ico_offdiagonal_block(ch: &KrausChannel, rho: &CMatrix) -> Result<CMatrix> {
    if rho.nrows() != ch.dim() {
        return Err(dim(format!("{}-dim operator into a {}-dim channel", rho.nrows(), ch.dim())));
    }
    ch.kraus().iter().try_fold(CMatrix::zeros(ch.dim(), ch.dim()), |acc, m| {
        Ok(acc + haar_sandwich(BranchOrder::Opposite, m, rho, &m.adjoint())?)
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticResidual {
    pub dim: usize,
    pub recovery_rate: f64,
    /// ‖ρ̃ − pρ‖ in Hilbert–Schmidt norm.
    pub residual: f64,
    /// Sum of the three large-D bound terms.
    pub bound: f64,
    /// ‖ρ‖/(D²−1), ‖Σ M†ρM‖/(D²−1), ‖Σ [Tr(M†) ρM + Tr(M) M†ρ]‖/(D(D²−1)).
    pub term_norms: [f64; 3],
    /// 1/√(D²−1), 1/√(D²−1), 4/(D²−1)².
    pub term_bounds: [f64; 3],
}

/// Distance of the ICO block from its large-D limit pρ, with the three bound terms.
pub fn asymptotic_residual(ch: &KrausChannel, rho: &DensityMatrix) -> Result<AsymptoticResidual> {
    if !rho.is_pure() {
        return Err(Error::InvalidState("asymptotic residual needs a pure input".into()));
    }
    let d = ch.dim();
    let p = recovery_rate(ch)?;
    let r = rho.matrix();
    let block = ico_offdiagonal_block(ch, r)?;
    let dd = d as f64;
    let norm = dd * dd - 1.0;
    let (mut conj, mut cross) = (CMatrix::zeros(d, d), CMatrix::zeros(d, d));
    for m in ch.kraus() {
        let md = m.adjoint();
        conj += &md * r * m;
        cross += r * m * md.trace() + &md * r * m.trace();
    }
    let term_norms = [hs_norm(r) / norm, hs_norm(&conj) / norm, hs_norm(&cross) / (dd * norm)];
    let term_bounds = [1.0 / norm.sqrt(), 1.0 / norm.sqrt(), 4.0 / (norm * norm)];
    Ok(AsymptoticResidual {
        dim: d,
        recovery_rate: p,
        residual: hs_norm(&(block - r.scale(p))),
        bound: term_bounds.iter().sum(),
        term_norms,
        term_bounds,
    })
}
