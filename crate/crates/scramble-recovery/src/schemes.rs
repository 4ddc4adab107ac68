//! The four recovery schemes with post-selection.
//!
//! Every scheme is one circuit on `[control] ⊗ [aux] ⊗ target ⊗ bath`. Registers start in
//! |±⟩; branch (c, a) applies V_c F^a M_k F^a V_c† to target⊗bath, where V_0 = U, V_1 = U†
//! (quantum switch) and F = σˣ on the target (measurement-direction flip). The registers are
//! then read out in the x basis and the target is kept for outcome `+` on every register.
//!
//! Exact evaluation averages the whole circuit over an ensemble, or evaluates each block with
//! the Haar sandwich integrals ([`crate::twirl::haar_sandwich`]) for the analytic backend.
//! Asymptotic evaluation uses the large-D closed forms in [`asymptotic`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channels::{
    orthogonal_unitary_basis, projective_measurement_channel, recovery_rate, KrausChannel,
    MeasurementDirection,
};
use crate::ensembles::UnitaryEnsemble;
use crate::error::{dim, param, Error, Result};
use crate::linalg::{
    c64, fidelity_with_pure, hadamard, hs_inner, hs_norm, identity, kron, outer, pauli_x,
    CMatrix, CVector, DensityMatrix, SystemLayout,
};
use crate::twirl::{haar_sandwich, BranchOrder, TwirlBackend};

/// Post-selection probabilities below this leave the branch state undefined.
const NULL_BRANCH: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Original,
    Ico,
    Mdd,
    Combined,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] =
        [SchemeKind::Original, SchemeKind::Ico, SchemeKind::Mdd, SchemeKind::Combined];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Original => "original",
            SchemeKind::Ico => "ico",
            SchemeKind::Mdd => "mdd",
            SchemeKind::Combined => "combined",
        }
    }

    /// Whether the scheme has a switch control qubit.
    pub fn has_control(self) -> bool {
        matches!(self, SchemeKind::Ico | SchemeKind::Combined)
    }

    /// Whether the scheme has a direction-flip auxiliary qubit.
    pub fn has_aux(self) -> bool {
        matches!(self, SchemeKind::Mdd | SchemeKind::Combined)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| param(format!("unknown scheme '{s}' (original|ico|mdd|combined)")))
    }
}

/// x-basis label of a register preparation or outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }

    pub fn ket(self) -> CVector {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        CVector::from_vec(vec![c64(h, 0.), c64(h * self.value(), 0.)])
    }
}

/// What damages the scrambled target⊗bath system.
#[derive(Clone, Debug)]
pub enum Perturbation {
    /// No perturbation; used by calibration circuits.
    Absent,
    /// Projective measurement of the target qubit along r.
    Projective(MeasurementDirection),
    /// Arbitrary channel on target⊗bath.
    Channel(KrausChannel),
}

/// Depolarizing rates applied to each register and to the target after the circuit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputNoise {
    pub control: f64,
    pub aux: f64,
    pub target: f64,
}

impl OutputNoise {
    pub fn is_zero(&self) -> bool {
        self.control == 0.0 && self.aux == 0.0 && self.target == 0.0
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("control", self.control), ("aux", self.aux), ("target", self.target)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(param(format!("{name} depolarizing rate {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// One configured circuit: scheme, subsystem sizes, states, perturbation and output noise.
#[derive(Clone, Debug)]
pub struct SchemeSetup {
    pub scheme: SchemeKind,
    /// Pure initial target state; the fidelity reference.
    pub target: DensityMatrix,
    pub bath: DensityMatrix,
    pub perturbation: Perturbation,
    pub noise: OutputNoise,
    pub control_init: Sign,
    pub aux_init: Sign,
}

impl SchemeSetup {
    /// Qubit target |0⟩, no bath, registers in |+⟩, noiseless.
    pub fn qubit(scheme: SchemeKind, perturbation: Perturbation) -> Self {
        Self {
            scheme,
            target: DensityMatrix::basis(2, 0).expect("|0⟩ is valid"),
            bath: DensityMatrix::basis(1, 0).expect("trivial bath is valid"),
            perturbation,
            noise: OutputNoise::default(),
            control_init: Sign::Plus,
            aux_init: Sign::Plus,
        }
    }

    /// Qubit setup measured along r = (sin θ, 0, cos θ).
    pub fn sweep_point(scheme: SchemeKind, theta: f64) -> Self {
        Self::qubit(scheme, Perturbation::Projective(MeasurementDirection::from_theta(theta)))
    }

    pub fn with_target(mut self, target: DensityMatrix) -> Self {
        self.target = target;
        self
    }

    pub fn with_bath(mut self, bath: DensityMatrix) -> Self {
        self.bath = bath;
        self
    }

    pub fn with_noise(mut self, noise: OutputNoise) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_inits(mut self, control: Sign, aux: Sign) -> Self {
        self.control_init = control;
        self.aux_init = aux;
        self
    }

    pub fn target_dim(&self) -> usize {
        self.target.dim()
    }

    pub fn bath_dim(&self) -> usize {
        self.bath.dim()
    }

    /// Dimension of the scrambled system target⊗bath.
    pub fn scrambled_dim(&self) -> usize {
        self.target_dim() * self.bath_dim()
    }

    pub fn direction(&self) -> Option<MeasurementDirection> {
        match &self.perturbation {
            Perturbation::Projective(r) => Some(*r),
            _ => None,
        }
    }

    fn tb_layout(&self) -> Result<SystemLayout> {
        SystemLayout::new([("target", self.target_dim()), ("bath", self.bath_dim())])
    }

    /// Full circuit layout: optional `control`, optional `aux`, then `target`, `bath`.
    pub fn layout(&self) -> Result<SystemLayout> {
        let mut systems = Vec::new();
        if self.scheme.has_control() {
            systems.push(("control", 2));
        }
        if self.scheme.has_aux() {
            systems.push(("aux", 2));
        }
        systems.push(("target", self.target_dim()));
        systems.push(("bath", self.bath_dim()));
        SystemLayout::new(systems)
    }

    fn validate(&self) -> Result<()> {
        if !self.target.is_pure() {
            return Err(Error::InvalidState("initial target must be pure".into()));
        }
        self.noise.validate()?;
        if self.scheme.has_aux() {
            if self.target_dim() != 2 {
                return Err(Error::Unsupported(format!(
                    "{} scheme needs a qubit target, got dimension {}",
                    self.scheme,
                    self.target_dim()
                )));
            }
            if matches!(self.perturbation, Perturbation::Channel(_)) {
                return Err(Error::Unsupported(format!(
                    "{} scheme is defined for projective target measurements only",
                    self.scheme
                )));
            }
        }
        if let Perturbation::Channel(ch) = &self.perturbation {
            if ch.dim() != self.scrambled_dim() {
                return Err(dim(format!(
                    "{}-dim perturbation on a {}-dim target⊗bath",
                    ch.dim(),
                    self.scrambled_dim()
                )));
            }
        }
        Ok(())
    }

    /// The perturbation as a channel on target⊗bath.
    pub fn perturbation_channel(&self) -> Result<KrausChannel> {
        match &self.perturbation {
            Perturbation::Absent => Ok(KrausChannel::identity(self.scrambled_dim())),
            Perturbation::Projective(r) => {
                projective_measurement_channel(r, &self.tb_layout()?, "target")
            }
            Perturbation::Channel(ch) => Ok(ch.clone()),
        }
    }

    fn register_amplitudes(&self) -> Vec<(usize, usize, f64)> {
        let amp = |s: Sign, bit: usize| if bit == 0 { 1.0 } else { s.value() };
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let cs: &[usize] = if self.scheme.has_control() { &[0, 1] } else { &[0] };
        let as_: &[usize] = if self.scheme.has_aux() { &[0, 1] } else { &[0] };
        let mut out = Vec::new();
        for &c in cs {
            for &a in as_ {
                let mut w = 1.0;
                if self.scheme.has_control() {
                    w *= h * amp(self.control_init, c);
                }
                if self.scheme.has_aux() {
                    w *= h * amp(self.aux_init, a);
                }
                out.push((c, a, w));
            }
        }
        out
    }
}

/// How the scrambling unitary is averaged when building the circuit output.
#[derive(Clone, Copy, Debug)]
pub enum Averaging<'a> {
    /// Haar average via the Weingarten sandwich formulas.
    Haar,
    /// Uniform average over an explicit ensemble (one member for a single circuit).
    Ensemble(&'a UnitaryEnsemble),
}

fn depolarize_subsystem(
    layout: &SystemLayout,
    rho: CMatrix,
    label: &str,
    rate: f64,
) -> Result<CMatrix> {
    if rate == 0.0 || !layout.contains(label) {
        return Ok(rho);
    }
    let d = layout.dim_of(label)?;
    let basis = orthogonal_unitary_basis(d)?;
    let mut mixed = CMatrix::zeros(rho.nrows(), rho.ncols());
    for u in &basis {
        let e = layout.embed(u, label)?;
        mixed += &e * &rho * e.adjoint();
    }
    Ok(rho.scale(1.0 - rate) + mixed.scale(rate / (d * d) as f64))
}

/// Averaged joint state of all registers, target and bath after the circuit and output noise.
pub fn circuit_output(setup: &SchemeSetup, averaging: Averaging<'_>) -> Result<(SystemLayout, CMatrix)> {
    setup.validate()?;
    let layout = setup.layout()?;
    let tb = setup.scrambled_dim();
    let flip = if setup.scheme.has_aux() {
        Some(kron(&pauli_x(), &identity(setup.bath_dim())))
    } else {
        None
    };
    let kraus = setup.perturbation_channel()?.kraus().to_vec();
    let regs = setup.register_amplitudes();
    let nreg = regs.len();
    // Branch operators A_{k,a} = F^a M_k F^a.
    let branch_op = |m: &CMatrix, a: usize| -> CMatrix {
        match (&flip, a) {
            (Some(f), 1) => f * m * f,
            _ => m.clone(),
        }
    };
    let rho = kron(setup.target.matrix(), setup.bath.matrix());
    let mut joint = CMatrix::zeros(nreg * tb, nreg * tb);
    match averaging {
        Averaging::Haar => {
            for (i, &(ci, ai, wi)) in regs.iter().enumerate() {
                for (j, &(cj, aj, wj)) in regs.iter().enumerate() {
                    let order = if ci == cj { BranchOrder::Same } else { BranchOrder::Opposite };
                    let mut block = CMatrix::zeros(tb, tb);
                    for m in &kraus {
                        let a = branch_op(m, ai);
                        let c = branch_op(m, aj).adjoint();
                        block += haar_sandwich(order, &a, &rho, &c)?;
                    }
                    joint.view_mut((i * tb, j * tb), (tb, tb)).copy_from(&block.scale(wi * wj));
                }
            }
        }
        Averaging::Ensemble(ens) => {
            if ens.dim() != tb {
                return Err(dim(format!("{}-dim ensemble for a {tb}-dim scrambled system", ens.dim())));
            }
            let mut psi = CVector::zeros(nreg);
            for (i, &(_, _, w)) in regs.iter().enumerate() {
                psi[i] = c64(w, 0.);
            }
            let input = kron(&outer(&psi), &rho);
            joint = ens.mean(|u| {
                let ud = u.adjoint();
                let mut out = CMatrix::zeros(nreg * tb, nreg * tb);
                for m in &kraus {
                    let mut k = CMatrix::zeros(nreg * tb, nreg * tb);
                    for (i, &(c, a, _)) in regs.iter().enumerate() {
                        let op = branch_op(m, a);
                        let g = if c == 0 { u * op * &ud } else { &ud * op * u };
                        k.view_mut((i * tb, i * tb), (tb, tb)).copy_from(&g);
                    }
                    out += &k * &input * k.adjoint();
                }
                out
            });
        }
    }
    let joint = depolarize_subsystem(&layout, joint, "control", setup.noise.control)?;
    let joint = depolarize_subsystem(&layout, joint, "aux", setup.noise.aux)?;
    let joint = depolarize_subsystem(&layout, joint, "target", setup.noise.target)?;
    Ok((layout, joint))
}

/// One post-selection outcome on the x-measured registers.
#[derive(Clone, Debug)]
pub struct PostSelectedBranch {
    /// Register outcomes, e.g. `"+"`, `"+-"`; `"rejected"` for an aggregated complement.
    pub label: String,
    pub probability: f64,
    /// Normalized target state, `None` when the branch has (near) zero probability or is not
    /// resolved by the evaluation mode.
    pub state: Option<DensityMatrix>,
}

#[derive(Clone, Debug)]
pub struct SchemeReport {
    pub scheme: SchemeKind,
    /// `asymptotic` or the backend label.
    pub evaluation: String,
    pub direction: Option<MeasurementDirection>,
    /// Recovery rate p of the perturbation on target⊗bath.
    pub recovery_rate: f64,
    pub sigma_c_x: Option<f64>,
    pub sigma_a_x: Option<f64>,
    /// Probability of the accepted outcome (`+` on every register); 1 for the original scheme.
    pub success_probability: f64,
    /// Target state for the accepted outcome.
    pub post_selected: DensityMatrix,
    /// Every register outcome, accepted first.
    pub branches: Vec<PostSelectedBranch>,
    /// Target state without post-selection.
    pub unconditional: DensityMatrix,
    /// Weight of the initial target in the accepted state.
    pub distilled_rate: f64,
    /// HS distance of the accepted state from the span of {ρ_t, I/D_t}.
    pub span_residual: f64,
    pub fidelity: f64,
    /// Fidelity of the same setup under the analytic (Haar) evaluation.
    pub analytic_fidelity: f64,
}

/// Solves min ‖X − aρ − bI/D‖ over (a, b) and returns (a, residual).
pub fn project_onto_depolarized(x: &CMatrix, rho: &CMatrix) -> Result<(f64, f64)> {
    let d = rho.nrows();
    let mixed = identity(d).unscale(d as f64);
    let g11 = hs_inner(rho, rho)?.re;
    let g12 = hs_inner(rho, &mixed)?.re;
    let g22 = hs_inner(&mixed, &mixed)?.re;
    let det = g11 * g22 - g12 * g12;
    if det.abs() < 1e-14 {
        return Err(param("reference state is proportional to the identity"));
    }
    let y1 = hs_inner(rho, x)?.re;
    let y2 = hs_inner(&mixed, x)?.re;
    let a = (y1 * g22 - y2 * g12) / det;
    let b = (g11 * y2 - g12 * y1) / det;
    let residual = hs_norm(&(x - rho.scale(a) - mixed.scale(b)));
    Ok((a, residual))
}

struct ExactPieces {
    sigma_c_x: Option<f64>,
    sigma_a_x: Option<f64>,
    branches: Vec<PostSelectedBranch>,
    unconditional: DensityMatrix,
}

fn read_out(layout: &SystemLayout, joint: &CMatrix) -> Result<ExactPieces> {
    let expect = |label: &str| -> Result<Option<f64>> {
        if !layout.contains(label) {
            return Ok(None);
        }
        Ok(Some((layout.embed(&pauli_x(), label)? * joint).trace().re))
    };
    let regs: Vec<&str> = ["control", "aux"].into_iter().filter(|l| layout.contains(l)).collect();
    let mut branches = Vec::new();
    for code in 0..(1usize << regs.len()) {
        let signs: Vec<Sign> = (0..regs.len())
            .map(|i| if (code >> (regs.len() - 1 - i)) & 1 == 0 { Sign::Plus } else { Sign::Minus })
            .collect();
        let projs: Vec<CMatrix> = signs.iter().map(|s| outer(&s.ket())).collect();
        let ops: Vec<(&str, &CMatrix)> = regs.iter().copied().zip(projs.iter()).collect();
        let p = layout.embed_many(&ops)?;
        let kept = &p * joint * &p;
        let prob = kept.trace().re;
        let state = if prob > NULL_BRANCH {
            Some(DensityMatrix::new(
                layout.partial_trace_matrix(&kept, &["target"])?.unscale(prob),
            )?)
        } else {
            None
        };
        let label = if regs.is_empty() {
            "none".to_string()
        } else {
            signs.iter().map(|s| s.symbol()).collect()
        };
        branches.push(PostSelectedBranch { label, probability: prob, state });
    }
    Ok(ExactPieces {
        sigma_c_x: expect("control")?,
        sigma_a_x: expect("aux")?,
        branches,
        unconditional: DensityMatrix::new(layout.partial_trace_matrix(joint, &["target"])?)?,
    })
}

/// Evaluation mode of a scheme run.
#[derive(Clone, Debug)]
pub enum Evaluation {
    Exact(TwirlBackend),
    Asymptotic,
}

impl Evaluation {
    pub fn label(&self) -> String {
        match self {
            Evaluation::Exact(b) => b.label(),
            Evaluation::Asymptotic => "asymptotic".into(),
        }
    }
}

fn exact_report(setup: &SchemeSetup, backend: &TwirlBackend) -> Result<SchemeReport> {
    let ens = backend.ensemble(setup.scrambled_dim())?;
    let averaging = ens.as_ref().map_or(Averaging::Haar, Averaging::Ensemble);
    let (layout, joint) = circuit_output(setup, averaging)?;
    let pieces = read_out(&layout, &joint)?;
    let accepted = pieces.branches[0].clone();
    let post_selected = accepted.state.ok_or_else(|| {
        Error::InvalidState(format!(
            "accepted outcome has probability {:e}; no post-selected state",
            accepted.probability
        ))
    })?;
    let fidelity = fidelity_with_pure(&post_selected, &setup.target)?;
    let analytic_fidelity = if matches!(backend, TwirlBackend::Analytic) {
        fidelity
    } else {
        exact_report(setup, &TwirlBackend::Analytic)?.fidelity
    };
    let (distilled_rate, span_residual) =
        project_onto_depolarized(post_selected.matrix(), setup.target.matrix())?;
    Ok(SchemeReport {
        scheme: setup.scheme,
        evaluation: backend.label(),
        direction: setup.direction(),
        recovery_rate: recovery_rate(&setup.perturbation_channel()?)?,
        sigma_c_x: pieces.sigma_c_x,
        sigma_a_x: pieces.sigma_a_x,
        success_probability: accepted.probability,
        post_selected,
        branches: pieces.branches,
        unconditional: pieces.unconditional,
        distilled_rate,
        span_residual,
        fidelity,
        analytic_fidelity,
    })
}

fn asymptotic_report(setup: &SchemeSetup) -> Result<SchemeReport> {
    setup.validate()?;
    let p = recovery_rate(&setup.perturbation_channel()?)?;
    let rx2 = || {
        setup.direction().map(|r| r.rx2()).ok_or_else(|| {
            Error::Unsupported(format!(
                "asymptotic {} needs a projective perturbation",
                setup.scheme
            ))
        })
    };
    let (rates, sigma_c_x, sigma_a_x) = match setup.scheme {
        SchemeKind::Original => (asymptotic::Rates { rate: p, success: 1.0 }, None, None),
        SchemeKind::Ico => (asymptotic::ico(p), Some(p), None),
        SchemeKind::Mdd => {
            let r2 = rx2()?;
            (asymptotic::mdd(p, r2), None, Some(r2))
        }
        SchemeKind::Combined => {
            let r2 = rx2()?;
            (asymptotic::combined(p, r2), Some(p), Some(r2))
        }
    };
    let dt = setup.target_dim();
    let mixed = DensityMatrix::maximally_mixed(dt)?;
    let toward = |rate: f64| -> Result<DensityMatrix> {
        DensityMatrix::new(setup.target.matrix().scale(rate) + mixed.matrix().scale(1.0 - rate))
    };
    let post_selected = toward(rates.rate)?;
    let unconditional = toward(p)?;
    let mut branches = vec![PostSelectedBranch {
        label: match setup.scheme {
            SchemeKind::Original => "none".into(),
            SchemeKind::Combined => "++".into(),
            _ => "+".into(),
        },
        probability: rates.success,
        state: Some(post_selected.clone()),
    }];
    match setup.scheme {
        SchemeKind::Original => {}
        SchemeKind::Ico | SchemeKind::Mdd => branches.push(PostSelectedBranch {
            label: "-".into(),
            probability: 1.0 - rates.success,
            state: Some(mixed),
        }),
        SchemeKind::Combined => branches.push(PostSelectedBranch {
            label: "rejected".into(),
            probability: 1.0 - rates.success,
            state: None,
        }),
    }
    let fidelity = fidelity_with_pure(&post_selected, &setup.target)?;
    Ok(SchemeReport {
        scheme: setup.scheme,
        evaluation: "asymptotic".into(),
        direction: setup.direction(),
        recovery_rate: p,
        sigma_c_x,
        sigma_a_x,
        success_probability: rates.success,
        post_selected,
        branches,
        unconditional,
        distilled_rate: rates.rate,
        span_residual: 0.0,
        fidelity,
        analytic_fidelity: fidelity,
    })
}

/// Runs a configured scheme.
pub fn run_scheme(setup: &SchemeSetup, evaluation: &Evaluation) -> Result<SchemeReport> {
    match evaluation {
        Evaluation::Exact(backend) => exact_report(setup, backend),
        Evaluation::Asymptotic => asymptotic_report(setup),
    }
}

fn setup_with(
    scheme: SchemeKind,
    perturbation: Perturbation,
    rho_t: &DensityMatrix,
    rho_b: &DensityMatrix,
) -> SchemeSetup {
    SchemeSetup::qubit(scheme, perturbation)
        .with_target(rho_t.clone())
        .with_bath(rho_b.clone())
}

/// Scrambling alone: twirl target⊗bath, discard the bath.
pub fn run_original(
    ch: &KrausChannel,
    rho_t: &DensityMatrix,
    rho_b: &DensityMatrix,
    backend: &TwirlBackend,
) -> Result<SchemeReport> {
    let setup = setup_with(SchemeKind::Original, Perturbation::Channel(ch.clone()), rho_t, rho_b);
    run_scheme(&setup, &Evaluation::Exact(backend.clone()))
}

/// Quantum-switch scrambling with control in |+⟩.
pub fn run_ico(
    ch: &KrausChannel,
    rho_t: &DensityMatrix,
    rho_b: &DensityMatrix,
    evaluation: &Evaluation,
) -> Result<SchemeReport> {
    let setup = setup_with(SchemeKind::Ico, Perturbation::Channel(ch.clone()), rho_t, rho_b);
    run_scheme(&setup, evaluation)
}

/// Direction-flip scheme against a projective measurement along r.
pub fn run_mdd(
    r: &MeasurementDirection,
    rho_t: &DensityMatrix,
    rho_b: &DensityMatrix,
    evaluation: &Evaluation,
) -> Result<SchemeReport> {
    let setup = setup_with(SchemeKind::Mdd, Perturbation::Projective(*r), rho_t, rho_b);
    run_scheme(&setup, evaluation)
}

/// Switch control plus direction flip, post-selected on (+, +).
pub fn run_combined(
    r: &MeasurementDirection,
    rho_t: &DensityMatrix,
    rho_b: &DensityMatrix,
    evaluation: &Evaluation,
) -> Result<SchemeReport> {
    let setup = setup_with(SchemeKind::Combined, Perturbation::Projective(*r), rho_t, rho_b);
    run_scheme(&setup, evaluation)
}

/// Joint readout distribution of one circuit realization.
///
/// Registers are measured in the x basis (bit 0 ↔ `+`), the target in its computational
/// basis; the bath is discarded. Outcome index = digits of (control, aux, target) with the
/// first measured subsystem most significant.
#[derive(Clone, Debug)]
pub struct OutcomeDistribution {
    pub measured: Vec<&'static str>,
    pub dims: Vec<usize>,
    pub probabilities: Vec<f64>,
}

/// Readout distribution for the circuit with scrambling unitary `u` (no averaging).
pub fn outcome_distribution(setup: &SchemeSetup, u: &CMatrix) -> Result<OutcomeDistribution> {
    let single = UnitaryEnsemble::explicit(vec![u.clone()])?;
    let (layout, joint) = circuit_output(setup, Averaging::Ensemble(&single))?;
    let measured: Vec<&'static str> = ["control", "aux", "target"]
        .into_iter()
        .filter(|l| layout.contains(l))
        .collect();
    let h = hadamard();
    let rotations: Vec<(&str, &CMatrix)> = measured
        .iter()
        .filter(|l| **l != "target")
        .map(|l| (*l, &h))
        .collect();
    let rot = layout.embed_many(&rotations)?;
    let rotated = &rot * joint * rot.adjoint();
    let reduced = layout.partial_trace_matrix(&rotated, &measured)?;
    let dims = measured.iter().map(|l| layout.dim_of(l)).collect::<Result<Vec<_>>>()?;
    let probabilities = (0..reduced.nrows()).map(|i| reduced[(i, i)].re).collect();
    Ok(OutcomeDistribution { measured, dims, probabilities })
}

/// Exact D = 2 curves for target |0⟩ and r = (sin θ, 0, cos θ).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AnalyticCurves {
    pub sigma_c_x: Option<f64>,
    pub sigma_a_x: Option<f64>,
    /// p₊ (ico, mdd), p₊₊ (combined), 1 (original).
    pub success: f64,
    pub fidelity: f64,
}

pub fn analytic_curves(scheme: SchemeKind, theta: f64) -> AnalyticCurves {
    let rx2 = theta.sin().powi(2);
    let rz2 = theta.cos().powi(2);
    match scheme {
        SchemeKind::Original => AnalyticCurves {
            sigma_c_x: None,
            sigma_a_x: None,
            success: 1.0,
            fidelity: 2.0 / 3.0,
        },
        SchemeKind::Ico => AnalyticCurves {
            sigma_c_x: Some(2.0 / 3.0),
            sigma_a_x: None,
            success: 5.0 / 6.0,
            fidelity: (7.0 + rz2) / 10.0,
        },
        SchemeKind::Mdd => AnalyticCurves {
            sigma_c_x: None,
            sigma_a_x: Some(rx2),
            success: (1.0 + rx2) / 2.0,
            fidelity: 2.0 / (3.0 * (1.0 + rx2)) + 1.0 / 3.0,
        },
        SchemeKind::Combined => AnalyticCurves {
            sigma_c_x: Some(2.0 / 3.0),
            sigma_a_x: Some(rx2),
            success: (2.0 * rx2 + 3.0) / 6.0,
            fidelity: 9.0 / (8.0 * rx2 + 12.0) + 0.25,
        },
    }
}

/// Large-D closed forms of the distilled rates and success probabilities.
pub mod asymptotic {
    use serde::Serialize;

    /// Mean r_x² for r_x = sin θ with θ uniform over a full period.
    pub const RANDOM_DIRECTION_MEAN_RX2: f64 = 0.5;

    #[derive(Clone, Copy, Debug, PartialEq, Serialize)]
    pub struct Rates {
        pub rate: f64,
        pub success: f64,
    }

    /// p_ICO = 2p/(1+p), p₊ = (1+p)/2.
    pub fn ico(p: f64) -> Rates {
        Rates { rate: 2.0 * p / (1.0 + p), success: (1.0 + p) / 2.0 }
    }

    /// p_MDD = 2p/(1+r_x²), p₊|ₛ = (1+r_x²)/2.
    pub fn mdd(p: f64, rx2: f64) -> Rates {
        Rates { rate: 2.0 * p / (1.0 + rx2), success: (1.0 + rx2) / 2.0 }
    }

    /// p_co = 4p/(1+r_x²+2p), p₊₊ = (1+r_x²)/4 + p/2.
    pub fn combined(p: f64, rx2: f64) -> Rates {
        Rates {
            rate: 4.0 * p / (1.0 + rx2 + 2.0 * p),
            success: (1.0 + rx2) / 4.0 + p / 2.0,
        }
    }
}
