//! Error-processing model: predicts noisy observables of a scheme from calibration runs in
//! which the perturbation is removed.
//!
//! A calibration reports, for each register prepared in |±⟩, the measured ⟨σˣ⟩_± and the
//! post-selected target fidelity F^±. Predictions assume the Clifford-averaged polarization
//! Tr[σˣ E^±(|0⟩⟨0|)] vanishes and that each error channel is Hermitian.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::linalg::{fidelity_with_pure, pauli_x, DensityMatrix};
use crate::schemes::{
    analytic_curves, circuit_output, Averaging, OutputNoise, Perturbation, SchemeKind,
    SchemeSetup, Sign,
};

/// ⟨σˣ⟩ measured with the register prepared in |+⟩ and |−⟩.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SigmaPair {
    pub plus: f64,
    pub minus: f64,
}

impl SigmaPair {
    pub const PERFECT: SigmaPair = SigmaPair { plus: 1.0, minus: -1.0 };

    fn mean(&self) -> f64 {
        (self.plus + self.minus) / 2.0
    }

    fn half_gap(&self) -> f64 {
        (self.plus - self.minus) / 2.0
    }
}

/// Post-selected fidelities with the register prepared in |+⟩ and |−⟩.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FidelityPair {
    pub plus: f64,
    pub minus: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum CalibrationRecord {
    Ico { sigma: SigmaPair, fidelity: FidelityPair },
    Mdd { sigma: SigmaPair, fidelity: FidelityPair },
    /// `f_xy` is F with control prepared in x and auxiliary in y.
    Combined {
        sigma_c: SigmaPair,
        sigma_a: SigmaPair,
        f_pp: f64,
        f_pm: f64,
        f_mp: f64,
        f_mm: f64,
    },
}

impl CalibrationRecord {
    /// Noise-free calibration for a scheme with registers.
    pub fn perfect(scheme: SchemeKind) -> Result<Self> {
        let f = FidelityPair { plus: 1.0, minus: 1.0 };
        match scheme {
            SchemeKind::Ico => Ok(Self::Ico { sigma: SigmaPair::PERFECT, fidelity: f }),
            SchemeKind::Mdd => Ok(Self::Mdd { sigma: SigmaPair::PERFECT, fidelity: f }),
            SchemeKind::Combined => Ok(Self::Combined {
                sigma_c: SigmaPair::PERFECT,
                sigma_a: SigmaPair::PERFECT,
                f_pp: 1.0,
                f_pm: 1.0,
                f_mp: 1.0,
                f_mm: 1.0,
            }),
            SchemeKind::Original => Err(no_registers()),
        }
    }

    pub fn scheme(&self) -> SchemeKind {
        match self {
            Self::Ico { .. } => SchemeKind::Ico,
            Self::Mdd { .. } => SchemeKind::Mdd,
            Self::Combined { .. } => SchemeKind::Combined,
        }
    }

    /// Every σ in [−1, 1] and every F in [0, 1].
    pub fn validate(&self) -> Result<()> {
        for (key, v) in self.entries() {
            let ok = if key.starts_with("sigma") {
                (-1.0..=1.0).contains(&v)
            } else {
                (0.0..=1.0).contains(&v)
            };
            if !ok {
                return Err(param(format!("calibration {key} = {v} out of range")));
            }
        }
        Ok(())
    }

    /// (key, value) pairs in file order.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Self::Ico { sigma, fidelity } | Self::Mdd { sigma, fidelity } => vec![
                ("sigma_plus", sigma.plus),
                ("sigma_minus", sigma.minus),
                ("f_plus", fidelity.plus),
                ("f_minus", fidelity.minus),
            ],
            Self::Combined { sigma_c, sigma_a, f_pp, f_pm, f_mp, f_mm } => vec![
                ("sigma_c_plus", sigma_c.plus),
                ("sigma_c_minus", sigma_c.minus),
                ("sigma_a_plus", sigma_a.plus),
                ("sigma_a_minus", sigma_a.minus),
                ("f_pp", f_pp),
                ("f_pm", f_pm),
                ("f_mp", f_mp),
                ("f_mm", f_mm),
            ],
        }
    }

    /// Flat `key = value` text; floats use the shortest exact representation.
    pub fn to_text(&self) -> String {
        let mut s = format!("scheme = {}\n", self.scheme());
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v:?}");
        }
        s
    }

    /// Parses `key = value` lines; `#` starts a comment. Unknown, duplicate or missing keys
    /// are errors.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", n + 1)))?;
            let k = k.trim().to_string();
            if map.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key '{k}'", n + 1)));
            }
        }
        let scheme: SchemeKind = map
            .remove("scheme")
            .ok_or_else(|| Error::Parse("missing key 'scheme'".into()))?
            .parse()
            .map_err(|e: Error| Error::Parse(e.to_string()))?;
        let mut take = |key: &str| -> Result<f64> {
            let v = map
                .remove(key)
                .ok_or_else(|| Error::Parse(format!("missing key '{key}'")))?;
            v.parse::<f64>()
                .map_err(|_| Error::Parse(format!("key '{key}': '{v}' is not a number")))
        };
        let record = match scheme {
            SchemeKind::Ico | SchemeKind::Mdd => {
                let sigma = SigmaPair { plus: take("sigma_plus")?, minus: take("sigma_minus")? };
                let fidelity = FidelityPair { plus: take("f_plus")?, minus: take("f_minus")? };
                if scheme == SchemeKind::Ico {
                    Self::Ico { sigma, fidelity }
                } else {
                    Self::Mdd { sigma, fidelity }
                }
            }
            SchemeKind::Combined => Self::Combined {
                sigma_c: SigmaPair { plus: take("sigma_c_plus")?, minus: take("sigma_c_minus")? },
                sigma_a: SigmaPair { plus: take("sigma_a_plus")?, minus: take("sigma_a_minus")? },
                f_pp: take("f_pp")?,
                f_pm: take("f_pm")?,
                f_mp: take("f_mp")?,
                f_mm: take("f_mm")?,
            },
            SchemeKind::Original => return Err(Error::Parse(no_registers().to_string())),
        };
        if let Some(k) = map.keys().next() {
            return Err(Error::Parse(format!("unknown key '{k}' for scheme {scheme}")));
        }
        record.validate()?;
        Ok(record)
    }
}

fn no_registers() -> Error {
    Error::Unsupported("the original scheme has no registers to calibrate".into())
}

pub fn load_calibration(path: &Path) -> Result<CalibrationRecord> {
    CalibrationRecord::from_text(&std::fs::read_to_string(path)?)
}

pub fn save_calibration(record: &CalibrationRecord, path: &Path) -> Result<()> {
    crate::output::write_atomic(path, record.to_text().as_bytes())
}

/// Depolarizing rates applied after the circuit to each register and the target.
pub type ErrorModel = OutputNoise;

/// Simulates the calibration circuits (perturbation absent) under `model`.
///
/// A post-selection with vanishing probability (noise-free register prepared in |−⟩) falls
/// back to the unconditioned target fidelity.
pub fn synthesize_calibration(scheme: SchemeKind, model: &ErrorModel) -> Result<CalibrationRecord> {
    let run = |c: Sign, a: Sign| -> Result<CalibrationRun> {
        let setup = SchemeSetup::qubit(scheme, Perturbation::Absent)
            .with_noise(*model)
            .with_inits(c, a);
        calibration_run(&setup)
    };
    use Sign::{Minus, Plus};
    match scheme {
        SchemeKind::Ico | SchemeKind::Mdd => {
            let (p, m) = if scheme == SchemeKind::Ico {
                (run(Plus, Plus)?, run(Minus, Plus)?)
            } else {
                (run(Plus, Plus)?, run(Plus, Minus)?)
            };
            let sigma = |r: &CalibrationRun| {
                if scheme == SchemeKind::Ico {
                    r.sigma_c
                } else {
                    r.sigma_a
                }
            };
            let sigma = SigmaPair { plus: sigma(&p), minus: sigma(&m) };
            let fidelity = FidelityPair { plus: p.fidelity, minus: m.fidelity };
            Ok(if scheme == SchemeKind::Ico {
                CalibrationRecord::Ico { sigma, fidelity }
            } else {
                CalibrationRecord::Mdd { sigma, fidelity }
            })
        }
        SchemeKind::Combined => {
            let pp = run(Plus, Plus)?;
            let pm = run(Plus, Minus)?;
            let mp = run(Minus, Plus)?;
            let mm = run(Minus, Minus)?;
            Ok(CalibrationRecord::Combined {
                sigma_c: SigmaPair { plus: pp.sigma_c, minus: mp.sigma_c },
                sigma_a: SigmaPair { plus: pp.sigma_a, minus: pm.sigma_a },
                f_pp: pp.fidelity,
                f_pm: pm.fidelity,
                f_mp: mp.fidelity,
                f_mm: mm.fidelity,
            })
        }
        SchemeKind::Original => Err(no_registers()),
    }
}

struct CalibrationRun {
    sigma_c: f64,
    sigma_a: f64,
    fidelity: f64,
}

fn calibration_run(setup: &SchemeSetup) -> Result<CalibrationRun> {
    let (layout, joint) = circuit_output(setup, Averaging::Haar)?;
    let expect = |label: &str| -> Result<f64> {
        if !layout.contains(label) {
            return Ok(0.0);
        }
        Ok((layout.embed(&pauli_x(), label)? * &joint).trace().re)
    };
    let plus = Sign::Plus.ket();
    let proj = &plus * plus.adjoint();
    let ops: Vec<(&str, &_)> = ["control", "aux"]
        .into_iter()
        .filter(|l| layout.contains(l))
        .map(|l| (l, &proj))
        .collect();
    let p = layout.embed_many(&ops)?;
    let kept = &p * &joint * &p;
    let prob = kept.trace().re;
    let target = if prob > 1e-14 {
        layout.partial_trace_matrix(&kept, &["target"])?.unscale(prob)
    } else {
        layout.partial_trace_matrix(&joint, &["target"])?
    };
    // Round-off may push exact ±1 or 1 just outside the valid range.
    Ok(CalibrationRun {
        sigma_c: expect("control")?.clamp(-1.0, 1.0),
        sigma_a: expect("aux")?.clamp(-1.0, 1.0),
        fidelity: fidelity_with_pure(&DensityMatrix::new(target)?, &setup.target)?.clamp(0.0, 1.0),
    })
}

/// ⟨σˣ⟩_e = (σ₊ + σ₋)/2 + ((σ₊ − σ₋)/2)·theory.
pub fn predict_expectation(theory: f64, sigma: SigmaPair) -> f64 {
    sigma.mean() + sigma.half_gap() * theory
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoisyPrediction {
    pub scheme: SchemeKind,
    pub theta: f64,
    pub rx2: f64,
    pub sigma_c_x: Option<f64>,
    pub sigma_a_x: Option<f64>,
    pub success_probability: f64,
    pub fidelity: f64,
    /// False when a probability or fidelity left [0, 1].
    pub in_range: bool,
}

impl NoisyPrediction {
    fn new(
        scheme: SchemeKind,
        theta: f64,
        sigma_c_x: Option<f64>,
        sigma_a_x: Option<f64>,
        success_probability: f64,
        fidelity: f64,
    ) -> Self {
        let unit = |v: f64| (-1e-12..=1.0 + 1e-12).contains(&v);
        Self {
            scheme,
            theta,
            rx2: theta.sin().powi(2),
            sigma_c_x,
            sigma_a_x,
            success_probability,
            fidelity,
            in_range: unit(success_probability) && unit(fidelity),
        }
    }
}

fn wrong_record(want: SchemeKind, got: &CalibrationRecord) -> Error {
    param(format!("{want} prediction needs a {want} calibration, got {}", got.scheme()))
}

/// ICO prediction with r_x = sin θ.
pub fn predict_fidelity_ico(theta: f64, cal: &CalibrationRecord) -> Result<NoisyPrediction> {
    let CalibrationRecord::Ico { sigma: s, fidelity: f } = *cal else {
        return Err(wrong_record(SchemeKind::Ico, cal));
    };
    cal.validate()?;
    let r2 = theta.sin().powi(2);
    let (wp, wm) = (1.0 + s.plus, 1.0 + s.minus);
    let den = 6.0 + 3.0 * (s.plus + s.minus) + 2.0 * (s.plus - s.minus);
    let fid = (wp * (1.0 + f.plus) + wm * (1.0 + f.minus)
        + (2.0 - r2) * (wp * f.plus - wm * f.minus)
        + 0.5 * r2 * (s.plus - s.minus))
        / den;
    let q = analytic_curves(SchemeKind::Ico, theta).sigma_c_x.expect("ico has a control");
    let sc = predict_expectation(q, s);
    Ok(NoisyPrediction::new(SchemeKind::Ico, theta, Some(sc), None, (1.0 + sc) / 2.0, fid))
}

/// MDD prediction with r_x = sin θ.
pub fn predict_fidelity_mdd(theta: f64, cal: &CalibrationRecord) -> Result<NoisyPrediction> {
    let CalibrationRecord::Mdd { sigma: s, fidelity: f } = *cal else {
        return Err(wrong_record(SchemeKind::Mdd, cal));
    };
    cal.validate()?;
    let r2 = theta.sin().powi(2);
    let (wp, wm) = (1.0 + s.plus, 1.0 + s.minus);
    let den = 2.0 + s.plus + s.minus + r2 * (s.plus - s.minus);
    let fid = ((wp * (1.0 + f.plus) + wm * (1.0 + f.minus))
        + (2.0 - r2) * (wp * f.plus - wm * f.minus)
        + (2.0 * r2 - 1.0) * (s.plus - s.minus))
        / (3.0 * den);
    let sa = predict_expectation(r2, s);
    Ok(NoisyPrediction::new(SchemeKind::Mdd, theta, None, Some(sa), (1.0 + sa) / 2.0, fid))
}

/// Combined-scheme prediction of p₊₊ and the post-selected fidelity.
pub fn predict_combined(theta: f64, cal: &CalibrationRecord) -> Result<NoisyPrediction> {
    let CalibrationRecord::Combined { sigma_c: c, sigma_a: a, f_pp, f_pm, f_mp, f_mm } = *cal
    else {
        return Err(wrong_record(SchemeKind::Combined, cal));
    };
    cal.validate()?;
    let r2 = theta.sin().powi(2);
    let (cp, cm) = (1.0 + c.plus, 1.0 + c.minus);
    let c_sum = 2.0 + c.plus + c.minus;
    let c_gap = c.plus - c.minus;
    // F₀^±, F₁^± for auxiliary outcome ±; the first F index is the control preparation.
    let f0 = |fp: f64, fm: f64| {
        (cp * (1.0 + fp) + cm * (1.0 + fm)) / 12.0
            + (2.0 - r2) / 12.0 * (cp * fp - cm * fm)
            + r2 / 24.0 * c_gap
    };
    let f1 = |fp: f64, fm: f64| {
        (2.0 - r2) / 12.0 * (cp * fp + cm * fm)
            + (2.0 * r2 - 1.0) / 12.0 * c_sum
            + (cp * fp - cm * fm) / 12.0
            + r2 / 24.0 * c_gap
    };
    let p_pp = (2.0 + a.plus + a.minus) / 16.0 * (c_sum + 2.0 / 3.0 * c_gap)
        + (a.plus - a.minus) / 16.0 * (c_sum * r2 + (r2 + 1.0) / 3.0 * c_gap);
    let (ap, am) = (1.0 + a.plus, 1.0 + a.minus);
    let fid = (ap * f0(f_pp, f_mp) + am * f0(f_pm, f_mm) + ap * f1(f_pp, f_mp)
        - am * f1(f_pm, f_mm))
        / (4.0 * p_pp);
    let sc = predict_expectation(2.0 / 3.0, c);
    let sa = predict_expectation(r2, a);
    Ok(NoisyPrediction::new(SchemeKind::Combined, theta, Some(sc), Some(sa), p_pp, fid))
}

/// Dispatches on the record's scheme.
pub fn predict(theta: f64, cal: &CalibrationRecord) -> Result<NoisyPrediction> {
    match cal.scheme() {
        SchemeKind::Ico => predict_fidelity_ico(theta, cal),
        SchemeKind::Mdd => predict_fidelity_mdd(theta, cal),
        SchemeKind::Combined => predict_combined(theta, cal),
        SchemeKind::Original => Err(no_registers()),
    }
}
