//! Finite-shot emulation of the single-qubit experiments.
//!
//! For every (θ, ensemble member) pair the exact readout distribution of one circuit is
//! corrupted by independent per-qubit readout flips and sampled multinomially. Counts are
//! pooled over members, which reproduces the ensemble average in expectation.

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::ensembles::UnitaryEnsemble;
use crate::error::{dim, param, Error, Result};
use crate::rng::RngStream;
use crate::schemes::{
    analytic_curves, outcome_distribution, AnalyticCurves, OutputNoise, SchemeKind, SchemeSetup,
};

/// Negative probabilities above this are rounding noise and get clamped.
pub const NEGATIVE_PROBABILITY_FLOOR: f64 = -1e-12;
/// Allowed |Σp − 1| for a distribution.
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// `n` equally spaced angles on [0, π], endpoints included.
pub fn theta_grid(n: usize) -> Result<Vec<f64>> {
    match n {
        0 => Err(param("theta grid needs at least one point")),
        1 => Ok(vec![0.0]),
        _ => Ok((0..n).map(|i| std::f64::consts::PI * i as f64 / (n - 1) as f64).collect()),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SampledCounts {
    pub counts: Vec<u64>,
    /// Whether tiny negative probabilities were clamped to zero.
    pub clamped: bool,
}

/// Multinomial draw of `shots` outcomes, realized as a chain of conditional binomials.
pub fn sample_outcomes(probabilities: &[f64], shots: u64, rng: &RngStream) -> Result<SampledCounts> {
    if probabilities.is_empty() {
        return Err(param("empty outcome distribution"));
    }
    let mut clamped = false;
    let mut probs = Vec::with_capacity(probabilities.len());
    for &p in probabilities {
        if !p.is_finite() || p < NEGATIVE_PROBABILITY_FLOOR {
            return Err(param(format!("invalid outcome probability {p}")));
        }
        if p < 0.0 {
            clamped = true;
        }
        probs.push(p.max(0.0));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(param(format!("outcome probabilities sum to {total}")));
    }
    let mut g = rng.generator();
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = shots;
    let mut mass = total;
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            counts[i] = remaining;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = Binomial::new(remaining, q)
            .map_err(|e| param(format!("binomial({remaining}, {q}): {e}")))?
            .sample(&mut g);
        counts[i] = k;
        remaining -= k;
        mass -= p;
    }
    Ok(SampledCounts { counts, clamped })
}

/// Readout flip probabilities of one qubit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReadoutError {
    /// P(read 1 | state 0).
    pub p1_given_0: f64,
    /// P(read 0 | state 1).
    pub p0_given_1: f64,
}

impl ReadoutError {
    pub const IDEAL: ReadoutError = ReadoutError { p1_given_0: 0.0, p0_given_1: 0.0 };

    pub fn new(p1_given_0: f64, p0_given_1: f64) -> Result<Self> {
        for v in [p1_given_0, p0_given_1] {
            if !(0.0..=1.0).contains(&v) {
                return Err(param(format!("readout flip probability {v} outside [0, 1]")));
            }
        }
        Ok(Self { p1_given_0, p0_given_1 })
    }
}

/// Applies independent confusion matrices to a distribution over binary digits, most
/// significant qubit first.
pub fn apply_readout(probabilities: &[f64], errors: &[ReadoutError]) -> Result<Vec<f64>> {
    let n = errors.len();
    if probabilities.len() != 1 << n {
        return Err(dim(format!(
            "{} outcomes for {n} qubits with readout errors",
            probabilities.len()
        )));
    }
    let mut p = probabilities.to_vec();
    for (q, e) in errors.iter().enumerate() {
        let bit = 1 << (n - 1 - q);
        for i in 0..p.len() {
            if i & bit == 0 {
                let (p0, p1) = (p[i], p[i | bit]);
                p[i] = (1.0 - e.p1_given_0) * p0 + e.p0_given_1 * p1;
                p[i | bit] = e.p1_given_0 * p0 + (1.0 - e.p0_given_1) * p1;
            }
        }
    }
    Ok(p)
}

#[derive(Clone, Debug)]
pub struct ShotPlan {
    pub shots: u64,
    pub thetas: Vec<f64>,
    pub ensemble: UnitaryEnsemble,
    pub rng: RngStream,
    /// Empty: ideal readout; one entry: shared by all measured qubits; otherwise one per
    /// measured qubit in (control, aux, target) order.
    pub readout: Vec<ReadoutError>,
    pub noise: OutputNoise,
}

impl ShotPlan {
    /// 24 Cliffords, `shots` per element, `points` angles, ideal readout, no noise.
    pub fn clifford(shots: u64, points: usize, rng: RngStream) -> Result<Self> {
        Ok(Self {
            shots,
            thetas: theta_grid(points)?,
            ensemble: UnitaryEnsemble::clifford_1q(),
            rng,
            readout: Vec::new(),
            noise: OutputNoise::default(),
        })
    }

    pub fn with_readout(mut self, readout: Vec<ReadoutError>) -> Self {
        self.readout = readout;
        self
    }

    pub fn with_noise(mut self, noise: OutputNoise) -> Self {
        self.noise = noise;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.shots == 0 {
            return Err(param("shots must be at least 1"));
        }
        if self.thetas.is_empty() {
            return Err(param("empty theta grid"));
        }
        if let Some(t) = self.thetas.iter().find(|t| !(0.0..=std::f64::consts::PI).contains(*t)) {
            return Err(param(format!("theta {t} outside [0, π]")));
        }
        if self.ensemble.dim() != 2 {
            return Err(dim(format!(
                "emulation scrambles a single qubit; ensemble has dimension {}",
                self.ensemble.dim()
            )));
        }
        Ok(())
    }

    fn readout_for(&self, qubits: usize) -> Result<Vec<ReadoutError>> {
        match self.readout.len() {
            0 => Ok(vec![ReadoutError::IDEAL; qubits]),
            1 => Ok(vec![self.readout[0]; qubits]),
            n if n == qubits => Ok(self.readout.clone()),
            n => Err(dim(format!("{n} readout models for {qubits} measured qubits"))),
        }
    }
}

/// Point estimate with standard error and 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    /// Frequency k/n with binomial standard error and Wilson interval.
    pub fn proportion(k: u64, n: u64) -> Self {
        if n == 0 {
            return Self { value: f64::NAN, std_error: f64::NAN, ci_low: 0.0, ci_high: 1.0 };
        }
        let nf = n as f64;
        let p = k as f64 / nf;
        let (lo, hi) = wilson_interval(k, n, Z_95);
        Self { value: p, std_error: (p * (1.0 - p) / nf).sqrt(), ci_low: lo, ci_high: hi }
    }

    /// ⟨σ⟩ = 2f − 1 from the count of `+` outcomes.
    pub fn polarization(plus: u64, n: u64) -> Self {
        let f = Self::proportion(plus, n);
        Self {
            value: 2.0 * f.value - 1.0,
            std_error: 2.0 * f.std_error,
            ci_low: 2.0 * f.ci_low - 1.0,
            ci_high: 2.0 * f.ci_high - 1.0,
        }
    }
}

/// Wilson score interval for k successes in n trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Clone, Debug, Serialize)]
pub struct EmulatedPoint {
    pub scheme: SchemeKind,
    pub theta: f64,
    pub rx2: f64,
    pub sigma_c_x: Option<Estimate>,
    pub sigma_a_x: Option<Estimate>,
    /// Fraction of shots with every register reading `+`.
    pub success: Estimate,
    /// Frequency of target outcome 0 among accepted shots.
    pub fidelity: Estimate,
    /// Noise-free single-qubit values at this angle.
    pub analytic: AnalyticCurves,
    pub total_shots: u64,
    pub accepted_shots: u64,
    /// Per-member outcome counts, outcome order as in the exact distribution.
    pub element_counts: Vec<Vec<u64>>,
    /// Whether any member distribution needed clamping.
    pub clamped: bool,
}

/// Runs the emulated experiment over the plan's θ grid; parallel over (θ, member).
pub fn run_emulated_experiment(scheme: SchemeKind, plan: &ShotPlan) -> Result<Vec<EmulatedPoint>> {
    plan.validate()?;
    let members = plan.ensemble.members();
    plan.thetas
        .iter()
        .enumerate()
        .map(|(ti, &theta)| {
            let setup = SchemeSetup::sweep_point(scheme, theta).with_noise(plan.noise);
            let stream = plan.rng.child(ti as u64);
            let samples: Vec<(SampledCounts, usize)> = members
                .par_iter()
                .enumerate()
                .map(|(ei, u)| -> Result<(SampledCounts, usize)> {
                    let dist = outcome_distribution(&setup, u)?;
                    let errors = plan.readout_for(dist.dims.len())?;
                    let noisy = apply_readout(&dist.probabilities, &errors)?;
                    Ok((sample_outcomes(&noisy, plan.shots, &stream.child(ei as u64))?, dist.dims.len()))
                })
                .collect::<Result<_>>()?;
            let qubits = samples.first().map(|s| s.1).ok_or_else(|| {
                Error::InvalidParameter("empty ensemble".into())
            })?;
            Ok(tally(scheme, theta, qubits, samples.into_iter().map(|s| s.0).collect()))
        })
        .collect()
}

fn tally(scheme: SchemeKind, theta: f64, qubits: usize, samples: Vec<SampledCounts>) -> EmulatedPoint {
    let registers = qubits - 1;
    let outcomes = 1usize << qubits;
    let mut pooled = vec![0u64; outcomes];
    for s in &samples {
        for (acc, c) in pooled.iter_mut().zip(&s.counts) {
            *acc += c;
        }
    }
    let total: u64 = pooled.iter().sum();
    // Bit for register r (0 = first register), most significant first; target is bit 0.
    let reg_bit = |r: usize| 1usize << (qubits - 1 - r);
    let reg_plus = |r: usize| -> u64 {
        (0..outcomes).filter(|i| i & reg_bit(r) == 0).map(|i| pooled[i]).sum()
    };
    let accepted: u64 = (0..outcomes)
        .filter(|i| i >> 1 == 0)
        .map(|i| pooled[i])
        .sum();
    let accepted_zero = pooled[0];
    let mut sigma = (0..registers).map(|r| Some(Estimate::polarization(reg_plus(r), total)));
    let (sigma_c_x, sigma_a_x) = match scheme {
        SchemeKind::Original => (None, None),
        SchemeKind::Ico => (sigma.next().flatten(), None),
        SchemeKind::Mdd => (None, sigma.next().flatten()),
        SchemeKind::Combined => (sigma.next().flatten(), sigma.next().flatten()),
    };
    EmulatedPoint {
        scheme,
        theta,
        rx2: theta.sin().powi(2),
        sigma_c_x,
        sigma_a_x,
        success: Estimate::proportion(accepted, total),
        fidelity: Estimate::proportion(accepted_zero, accepted),
        analytic: analytic_curves(scheme, theta),
        total_shots: total,
        accepted_shots: accepted,
        clamped: samples.iter().any(|s| s.clamped),
        element_counts: samples.into_iter().map(|s| s.counts).collect(),
    }
}
