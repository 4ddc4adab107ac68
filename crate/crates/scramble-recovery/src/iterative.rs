//! Iterative recovery: scalar recursions for the recovery rate, their fixed points, and a
//! density-matrix simulation of the same iterations.
//!
//! Index conventions: plain variants start at p⁽¹⁾ (the rate after the first scrambling layer),
//! ICO variants at p⁽⁰⁾. A trace always holds `steps + 1` values.
//!
//! Weights:
//! - s = (1 − 1/D_t²)/(1 − 1/D_tb²) is the contraction of 1 − p per plain layer;
//! - the noisy plain recursion is p ↦ (1 − s')x p + s'x with s' = 1 − s
//!   = (D_tb²/D_t² − 1)/(D_tb² − 1);
//! - the exact ICO recursion is p ↦ x(2p + a(1−p)) / (1 + x(p + b(1−p))),
//!   a = (D_tb² − 2)/(D_tb²(D_tb² − 1)), b = 2/D_tb², with x = 1 when noiseless.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channels::{depolarizing_channel, recovery_rate, KrausChannel};
use crate::ensembles::UnitaryEnsemble;
use crate::error::{dim, param, Error, Result};
use crate::linalg::{identity, kron, CMatrix, DensityMatrix, SystemLayout};
use crate::schemes::project_onto_depolarized;
use crate::twirl::{ico_offdiagonal_block, TwirlBackend};

/// Largest scrambled dimension accepted by [`simulate_iteration_matrix`].
pub const MAX_SIMULATED_DIM: usize = 8;
/// Largest distance from the depolarizing span tolerated for exact backends.
pub const SPAN_RESIDUAL_TOL: f64 = 1e-8;
/// |f'(p*)| within this of 1 is reported as marginal.
const MARGINAL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecursionVariant {
    Plain,
    PlainNoisy,
    Ico,
    Eico,
    EicoNoisy,
}

impl RecursionVariant {
    pub const ALL: [RecursionVariant; 5] = [
        RecursionVariant::Plain,
        RecursionVariant::PlainNoisy,
        RecursionVariant::Ico,
        RecursionVariant::Eico,
        RecursionVariant::EicoNoisy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RecursionVariant::Plain => "plain",
            RecursionVariant::PlainNoisy => "plain-noisy",
            RecursionVariant::Ico => "ico",
            RecursionVariant::Eico => "eico",
            RecursionVariant::EicoNoisy => "eico-noisy",
        }
    }

    /// Superscript of the first trace entry.
    pub fn first_index(self) -> usize {
        match self {
            RecursionVariant::Plain | RecursionVariant::PlainNoisy => 1,
            _ => 0,
        }
    }

    pub fn is_noisy(self) -> bool {
        matches!(self, RecursionVariant::PlainNoisy | RecursionVariant::EicoNoisy)
    }

    fn is_eico(self) -> bool {
        matches!(self, RecursionVariant::Eico | RecursionVariant::EicoNoisy)
    }
}

impl fmt::Display for RecursionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RecursionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RecursionVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                param(format!("unknown variant '{s}' (plain|plain-noisy|ico|eico|eico-noisy)"))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursionSpec {
    pub variant: RecursionVariant,
    /// First trace value: p⁽¹⁾ for plain variants, p⁽⁰⁾ otherwise.
    pub p0: f64,
    pub d_t: usize,
    pub d_tb: usize,
    /// Keep-rate of the depolarizing noise; ignored by noiseless variants.
    pub x: f64,
    pub steps: usize,
}

impl RecursionSpec {
    pub fn new(variant: RecursionVariant, p0: f64, d_t: usize, d_tb: usize, steps: usize) -> Self {
        Self { variant, p0, d_t, d_tb, x: 1.0, steps }
    }

    pub fn with_noise(mut self, x: f64) -> Self {
        self.x = x;
        self
    }

    /// Effective keep-rate: `x` for noisy variants, 1 otherwise.
    pub fn keep_rate(&self) -> f64 {
        if self.variant.is_noisy() {
            self.x
        } else {
            1.0
        }
    }

    /// Checks 2 ≤ D_t ≤ D_tb, 0 ≤ x ≤ 1 and −1/(D_tb²−1) ≤ p0 ≤ 1.
    pub fn validate(&self) -> Result<()> {
        if self.d_t < 2 || self.d_t > self.d_tb {
            return Err(param(format!(
                "need 2 ≤ D_t ≤ D_tb, got D_t = {}, D_tb = {}",
                self.d_t, self.d_tb
            )));
        }
        if !(0.0..=1.0).contains(&self.x) {
            return Err(param(format!("noise keep-rate x = {} outside [0, 1]", self.x)));
        }
        let floor = -1.0 / (sq(self.d_tb) - 1.0);
        if !(self.p0.is_finite() && self.p0 >= floor - 1e-15 && self.p0 <= 1.0) {
            return Err(param(format!("p0 = {} outside [{floor}, 1]", self.p0)));
        }
        Ok(())
    }

    /// s = (1 − 1/D_t²)/(1 − 1/D_tb²).
    pub fn contraction(&self) -> f64 {
        plain_contraction(self.d_t, self.d_tb)
    }

    /// One application of the recursion.
    pub fn step(&self, p: f64) -> f64 {
        let x = self.keep_rate();
        match self.variant {
            RecursionVariant::Plain | RecursionVariant::PlainNoisy => {
                let w = 1.0 - self.contraction();
                x * ((1.0 - w) * p + w)
            }
            RecursionVariant::Ico => 2.0 * p / (1.0 + p),
            RecursionVariant::Eico | RecursionVariant::EicoNoisy => {
                let (a, b) = eico_weights(self.d_tb);
                x * (2.0 * p + a * (1.0 - p)) / (1.0 + x * (p + b * (1.0 - p)))
            }
        }
    }

    /// dp_next/dp at p.
    pub fn derivative(&self, p: f64) -> f64 {
        let x = self.keep_rate();
        match self.variant {
            RecursionVariant::Plain | RecursionVariant::PlainNoisy => x * self.contraction(),
            RecursionVariant::Ico => 2.0 / sq_f(1.0 + p),
            RecursionVariant::Eico | RecursionVariant::EicoNoisy => {
                let (a, b) = eico_weights(self.d_tb);
                let num = 2.0 * p + a * (1.0 - p);
                let den = 1.0 + x * (p + b * (1.0 - p));
                x * ((2.0 - a) * den - num * x * (1.0 - b)) / sq_f(den)
            }
        }
    }

    /// Value after `k` steps from p0 when a closed form exists.
    pub fn closed_form(&self, k: usize) -> Option<f64> {
        let p = self.p0;
        match self.variant {
            RecursionVariant::Plain => Some(1.0 - (1.0 - p) * self.contraction().powi(k as i32)),
            RecursionVariant::PlainNoisy => {
                let x = self.x;
                let w = 1.0 - self.contraction();
                let c = (1.0 - w) * x;
                if (1.0 - c).abs() < 1e-15 {
                    return Some(p);
                }
                let fixed = w * x / (1.0 - c);
                Some(fixed - c.powi(k as i32) * (fixed - p))
            }
            RecursionVariant::Ico => {
                let m = 2f64.powi(k as i32);
                Some(m * p / ((m - 1.0) * p + 1.0))
            }
            RecursionVariant::Eico | RecursionVariant::EicoNoisy => None,
        }
    }

    /// Fixed points of the recursion with their linearized stability.
    pub fn fixed_points(&self) -> Vec<FixedPoint> {
        let roots: Vec<f64> = match self.variant {
            RecursionVariant::Plain | RecursionVariant::PlainNoisy => {
                let x = self.keep_rate();
                let w = 1.0 - self.contraction();
                let c = (1.0 - w) * x;
                if (1.0 - c).abs() < 1e-15 {
                    // Every p is fixed; report the starting point.
                    vec![self.p0]
                } else {
                    vec![w * x / (1.0 - c)]
                }
            }
            RecursionVariant::Ico => vec![1.0, 0.0],
            RecursionVariant::Eico | RecursionVariant::EicoNoisy => {
                let q = eico_fixed_point_quadratic(self.d_tb, self.keep_rate());
                q.roots()
            }
        };
        roots.into_iter().map(|p| FixedPoint::classify(p, self.derivative(p))).collect()
    }
}

fn sq(d: usize) -> f64 {
    (d * d) as f64
}

fn sq_f(v: f64) -> f64 {
    v * v
}

/// s = (1 − 1/D_t²)/(1 − 1/D_tb²).
pub fn plain_contraction(d_t: usize, d_tb: usize) -> f64 {
    (1.0 - 1.0 / sq(d_t)) / (1.0 - 1.0 / sq(d_tb))
}

/// Weight s' = (D_tb²/D_t² − 1)/(D_tb² − 1) = 1 − s in the noisy plain recursion.
pub fn noisy_plain_weight(d_t: usize, d_tb: usize) -> f64 {
    (sq(d_tb) / sq(d_t) - 1.0) / (sq(d_tb) - 1.0)
}

/// s'x/(1 − (1 − s')x) for a given weight s' and keep-rate x.
pub fn noisy_plain_fixed_point(weight: f64, x: f64) -> f64 {
    weight * x / (1.0 - (1.0 - weight) * x)
}

/// (a, b) of the exact ICO recursion.
pub fn eico_weights(d_tb: usize) -> (f64, f64) {
    let d2 = sq(d_tb);
    ((d2 - 2.0) / (d2 * (d2 - 1.0)), 2.0 / d2)
}

/// p₊ = (1 + p)/2 + (1 − p)/D_tb².
pub fn eico_success_probability(p_prev: f64, d_tb: usize) -> f64 {
    noisy_eico_success_probability(p_prev, d_tb, 1.0)
}

/// p₊ = (1 + x(p + b(1 − p)))/2 under keep-rate x on the switch output.
pub fn noisy_eico_success_probability(p_prev: f64, d_tb: usize, x: f64) -> f64 {
    let (_, b) = eico_weights(d_tb);
    (1.0 + x * (p_prev + b * (1.0 - p_prev))) / 2.0
}

/// Coefficients of c₂p² + c₁p + c₀ = 0 whose roots are the exact ICO fixed points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Quadratic {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl Quadratic {
    pub fn discriminant(&self) -> f64 {
        self.c1 * self.c1 - 4.0 * self.c2 * self.c0
    }

    /// Real roots, larger first.
    pub fn roots(&self) -> Vec<f64> {
        if self.c2.abs() < 1e-300 {
            return if self.c1.abs() < 1e-300 { vec![] } else { vec![-self.c0 / self.c1] };
        }
        let disc = self.discriminant();
        if disc < 0.0 {
            return vec![];
        }
        let sq = disc.sqrt();
        // Cancellation-free pairing.
        let q = -0.5 * (self.c1 + self.c1.signum() * sq);
        let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / self.c2, self.c0 / q) };
        let (hi, lo) = if r1 >= r2 { (r1, r2) } else { (r2, r1) };
        if disc == 0.0 {
            vec![hi]
        } else {
            vec![hi, lo]
        }
    }
}

/// x(1 − b)p² + (1 + xb − x(2 − a))p − xa = 0.
pub fn eico_fixed_point_quadratic(d_tb: usize, x: f64) -> Quadratic {
    let (a, b) = eico_weights(d_tb);
    Quadratic { c2: x * (1.0 - b), c1: 1.0 + x * b - x * (2.0 - a), c0: -x * a }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Attractive,
    Unstable,
    Marginal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FixedPoint {
    pub value: f64,
    /// f'(p*) of the recursion map.
    pub derivative: f64,
    pub stability: Stability,
}

impl FixedPoint {
    fn classify(value: f64, derivative: f64) -> Self {
        let stability = if (derivative.abs() - 1.0).abs() <= MARGINAL_TOL {
            Stability::Marginal
        } else if derivative.abs() < 1.0 {
            Stability::Attractive
        } else {
            Stability::Unstable
        };
        Self { value, derivative, stability }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RecursionTrace {
    pub spec: RecursionSpec,
    /// Superscript of `values[0]`.
    pub first_index: usize,
    pub values: Vec<f64>,
    /// Post-selection probability of the step producing `values[k + 1]` (ICO variants).
    pub success: Vec<f64>,
    pub fixed_points: Vec<FixedPoint>,
    /// Largest |closed form − recursion| over the trace; `None` without a closed form.
    pub closed_form_gap: Option<f64>,
    /// Distance of each simulated state from the depolarizing span (simulation only).
    pub span_residuals: Vec<f64>,
}

impl RecursionTrace {
    /// p⁽ⁿ⁾ by superscript.
    pub fn value_at(&self, superscript: usize) -> Option<f64> {
        superscript
            .checked_sub(self.first_index)
            .and_then(|k| self.values.get(k).copied())
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("trace holds p0")
    }

    /// Superscripts aligned with `values`.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.values.len()).map(|k| k + self.first_index)
    }

    pub fn attractive_fixed_point(&self) -> Option<f64> {
        self.fixed_points
            .iter()
            .find(|f| f.stability == Stability::Attractive)
            .map(|f| f.value)
    }
}

/// Runs the recursion for `spec.steps` steps; closed forms are cross-checked against stepping.
pub fn iterate(spec: &RecursionSpec) -> Result<RecursionTrace> {
    spec.validate()?;
    let mut values = Vec::with_capacity(spec.steps + 1);
    let mut success = Vec::new();
    let mut p = spec.p0;
    values.push(p);
    for _ in 0..spec.steps {
        if spec.variant.is_eico() {
            success.push(noisy_eico_success_probability(p, spec.d_tb, spec.keep_rate()));
        }
        p = spec.step(p);
        values.push(p);
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("recursion diverged to {bad}")));
    }
    let closed_form_gap = spec.closed_form(0).map(|_| {
        values
            .iter()
            .enumerate()
            .map(|(k, v)| (spec.closed_form(k).expect("closed form exists") - v).abs())
            .fold(0.0, f64::max)
    });
    let values = match spec.closed_form(0) {
        Some(_) => (0..=spec.steps)
            .map(|k| spec.closed_form(k).expect("closed form exists"))
            .collect(),
        None => values,
    };
    Ok(RecursionTrace {
        spec: *spec,
        first_index: spec.variant.first_index(),
        values,
        success,
        fixed_points: spec.fixed_points(),
        closed_form_gap,
        span_residuals: Vec::new(),
    })
}

/// Linearization coefficients at p = 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvergenceCoefficients {
    /// (1/2)(1 + 1/(D_tb² − 1)).
    pub eico: f64,
    /// (1 − 1/D_t²)/(1 − 1/D_tb²).
    pub plain: f64,
}

pub fn convergence_coefficients(d_t: usize, d_tb: usize) -> Result<ConvergenceCoefficients> {
    if d_t < 2 || d_t > d_tb {
        return Err(param(format!("need 2 ≤ D_t ≤ D_tb, got {d_t}, {d_tb}")));
    }
    Ok(ConvergenceCoefficients {
        eico: 0.5 * (1.0 + 1.0 / (sq(d_tb) - 1.0)),
        plain: plain_contraction(d_t, d_tb),
    })
}

fn global_depolarize(x: &CMatrix, keep: f64) -> CMatrix {
    let d = x.nrows();
    x.scale(keep) + identity(d) * (x.trace() * ((1.0 - keep) / d as f64))
}

fn next_channel(
    dim_: usize,
    map: impl Fn(&CMatrix) -> CMatrix,
    p: f64,
    exact: bool,
) -> Result<KrausChannel> {
    if exact {
        KrausChannel::from_linear_map(dim_, map)
    } else {
        // Sampled averages are only approximately trace preserving; continue from the
        // depolarizing channel with the extracted rate.
        depolarizing_channel(dim_, p.clamp(0.0, 1.0))
    }
}

/// Density-matrix simulation of the iteration.
///
/// plain / plain-noisy: `ch` acts on the target (dim D_t). Each layer tensors a fresh bath
/// |0⟩⟨0| of dimension D_tb/D_t, applies the backend twirl of (channel ⊗ I_b) on target⊗bath,
/// then keep-rate x depolarizing on target⊗bath, and traces out the bath. Layer n yields p⁽ⁿ⁾.
///
/// eico / eico-noisy: `ch` acts on target⊗bath (dim D_tb, or D_t and is lifted). p⁽⁰⁾ is its
/// backend twirl. Each step feeds the previous channel through the quantum switch with the
/// control in |+⟩, depolarizes control⊗target⊗bath with keep-rate x, and post-selects `+`.
///
/// p is extracted per layer by projecting the output for |0⟩ onto {|0⟩⟨0|, I/D}. `spec.p0` is
/// ignored; the trace starts from the rate measured on `ch`.
pub fn simulate_iteration_matrix(
    spec: &RecursionSpec,
    ch: &KrausChannel,
    backend: &TwirlBackend,
) -> Result<RecursionTrace> {
    spec.validate()?;
    if spec.d_tb > MAX_SIMULATED_DIM {
        return Err(dim(format!(
            "simulation limited to D_tb ≤ {MAX_SIMULATED_DIM}, got {}",
            spec.d_tb
        )));
    }
    if !spec.d_tb.is_multiple_of(spec.d_t) {
        return Err(dim(format!("D_t = {} does not divide D_tb = {}", spec.d_t, spec.d_tb)));
    }
    let trace = match spec.variant {
        RecursionVariant::Plain | RecursionVariant::PlainNoisy => simulate_plain(spec, ch, backend)?,
        RecursionVariant::Eico | RecursionVariant::EicoNoisy => simulate_eico(spec, ch, backend)?,
        RecursionVariant::Ico => {
            return Err(Error::Unsupported(
                "the ico recursion is a large-D limit; simulate eico instead".into(),
            ))
        }
    };
    if backend.is_exact() {
        if let Some(r) = trace.span_residuals.iter().find(|r| **r > SPAN_RESIDUAL_TOL) {
            return Err(Error::InvalidState(format!(
                "simulated output leaves the depolarizing span by {r:e}"
            )));
        }
    }
    Ok(trace)
}

fn simulate_plain(
    spec: &RecursionSpec,
    ch: &KrausChannel,
    backend: &TwirlBackend,
) -> Result<RecursionTrace> {
    if ch.dim() != spec.d_t {
        return Err(dim(format!("{}-dim channel for D_t = {}", ch.dim(), spec.d_t)));
    }
    let d_b = spec.d_tb / spec.d_t;
    let layout = SystemLayout::new([("target", spec.d_t), ("bath", d_b)])?;
    let bath = DensityMatrix::basis(d_b, 0)?;
    let reference = DensityMatrix::basis(spec.d_t, 0)?;
    let keep = spec.keep_rate();
    let ens = backend.ensemble(spec.d_tb)?;

    let mut current = ch.clone();
    let mut values = Vec::with_capacity(spec.steps + 1);
    let mut residuals = Vec::with_capacity(spec.steps + 1);
    for _ in 0..=spec.steps {
        let lifted = current.lift(&layout, "target")?;
        let p_lift = recovery_rate(&lifted)?;
        let layer = |x: &CMatrix| -> CMatrix {
            let joint = kron(x, bath.matrix());
            let twirled = twirl_matrix(&lifted, &joint, p_lift, ens.as_ref());
            let noisy = global_depolarize(&twirled, keep);
            layout
                .partial_trace_matrix(&noisy, &["target"])
                .expect("layout matches the joint operator")
        };
        let (p, residual) = project_onto_depolarized(&layer(reference.matrix()), reference.matrix())?;
        values.push(p);
        residuals.push(residual);
        current = next_channel(spec.d_t, layer, p, backend.is_exact())?;
    }
    finish_simulation(spec, values, Vec::new(), residuals)
}

fn twirl_matrix(ch: &KrausChannel, x: &CMatrix, p: f64, ens: Option<&UnitaryEnsemble>) -> CMatrix {
    match ens {
        None => global_depolarize(x, p),
        Some(e) => e.mean(|u| {
            let y = ch.apply_matrix(&(u.adjoint() * x * u)).expect("dimension checked");
            u * y * u.adjoint()
        }),
    }
}

/// Blocks (diagonal, upper, lower) of the switch output for input operator `x`.
fn switch_blocks(
    ch: &KrausChannel,
    x: &CMatrix,
    p: f64,
    ens: Option<&UnitaryEnsemble>,
) -> Result<(CMatrix, CMatrix, CMatrix)> {
    match ens {
        None => {
            let diag = global_depolarize(x, p);
            let off = ico_offdiagonal_block(ch, x)?;
            Ok((diag.clone(), off.clone(), off))
        }
        Some(e) => {
            let d = ch.dim();
            let sum = e.mean(|u| {
                let ud = u.adjoint();
                let mut out = CMatrix::zeros(3 * d, d);
                for m in ch.kraus() {
                    let g0 = u * m * &ud;
                    let g1 = &ud * m * u;
                    let mut v = out.rows_mut(0, d);
                    v += &g0 * x * g0.adjoint();
                    let mut v = out.rows_mut(d, d);
                    v += &g0 * x * g1.adjoint();
                    let mut v = out.rows_mut(2 * d, d);
                    v += &g1 * x * g0.adjoint();
                }
                out
            });
            Ok((
                sum.rows(0, d).into_owned(),
                sum.rows(d, d).into_owned(),
                sum.rows(2 * d, d).into_owned(),
            ))
        }
    }
}

fn simulate_eico(
    spec: &RecursionSpec,
    ch: &KrausChannel,
    backend: &TwirlBackend,
) -> Result<RecursionTrace> {
    let d = spec.d_tb;
    let ch = if ch.dim() == d {
        ch.clone()
    } else if ch.dim() == spec.d_t {
        let layout = SystemLayout::new([("target", spec.d_t), ("bath", d / spec.d_t)])?;
        ch.lift(&layout, "target")?
    } else {
        return Err(dim(format!("{}-dim channel for D_t = {}, D_tb = {d}", ch.dim(), spec.d_t)));
    };
    let ens = backend.ensemble(d)?;
    let reference = DensityMatrix::basis(d, 0)?;
    let keep = spec.keep_rate();

    let p_raw = recovery_rate(&ch)?;
    let twirl0 = |x: &CMatrix| twirl_matrix(&ch, x, p_raw, ens.as_ref());
    let (p0, r0) = project_onto_depolarized(&twirl0(reference.matrix()), reference.matrix())?;
    let mut current = next_channel(d, twirl0, p0, backend.is_exact())?;
    let mut values = vec![p0];
    let mut residuals = vec![r0];
    let mut success = Vec::with_capacity(spec.steps);

    let plus = crate::schemes::Sign::Plus.ket();
    let plus_proj = kron(&(&plus * plus.adjoint()), &identity(d));
    for _ in 0..spec.steps {
        let p_cur = recovery_rate(&current)?;
        // Unnormalized post-selected target⊗bath operator.
        let post = |x: &CMatrix| -> Result<CMatrix> {
            let (diag, up, low) = switch_blocks(&current, x, p_cur, ens.as_ref())?;
            let mut joint = CMatrix::zeros(2 * d, 2 * d);
            joint.view_mut((0, 0), (d, d)).copy_from(&diag);
            joint.view_mut((d, d), (d, d)).copy_from(&diag);
            joint.view_mut((0, d), (d, d)).copy_from(&up);
            joint.view_mut((d, 0), (d, d)).copy_from(&low);
            let joint = global_depolarize(&joint.unscale(2.0), keep);
            let kept = &plus_proj * joint * &plus_proj;
            let layout = SystemLayout::new([("control", 2), ("tb", d)])?;
            layout.partial_trace_matrix(&kept, &["tb"])
        };
        let out = post(reference.matrix())?;
        let p_plus = out.trace().re;
        if p_plus <= 1e-14 {
            return Err(Error::InvalidState("post-selection probability vanished".into()));
        }
        let (p, residual) = project_onto_depolarized(&out.unscale(p_plus), reference.matrix())?;
        success.push(p_plus);
        values.push(p);
        residuals.push(residual);
        let map = |x: &CMatrix| post(x).expect("dimension fixed").unscale(p_plus);
        current = next_channel(d, map, p, backend.is_exact())?;
    }
    finish_simulation(spec, values, success, residuals)
}

fn finish_simulation(
    spec: &RecursionSpec,
    values: Vec<f64>,
    success: Vec<f64>,
    span_residuals: Vec<f64>,
) -> Result<RecursionTrace> {
    let measured = RecursionSpec { p0: values[0], ..*spec };
    Ok(RecursionTrace {
        spec: measured,
        first_index: spec.variant.first_index(),
        values,
        success,
        fixed_points: measured.fixed_points(),
        closed_form_gap: None,
        span_residuals,
    })
}
