//! Builds a calibration from a noise model, saves it, and predicts noisy observables from it.

use std::f64::consts::PI;

use scramble_recovery::calibration::{load_calibration, predict, save_calibration, synthesize_calibration};
use scramble_recovery::schemes::{run_scheme, Evaluation, OutputNoise, SchemeKind, SchemeSetup};
use scramble_recovery::twirl::TwirlBackend;

fn main() -> scramble_recovery::error::Result<()> {
    let noise = OutputNoise { control: 0.03, aux: 0.04, target: 0.06 };
    let path = std::env::temp_dir().join(format!("combined-calibration-{}.json", std::process::id()));
    save_calibration(&synthesize_calibration(SchemeKind::Combined, &noise)?, &path)?;
    let record = load_calibration(&path)?;
    std::fs::remove_file(&path)?;

    for i in 0..=4 {
        let theta = PI * i as f64 / 8.0;
        let predicted = predict(theta, &record)?;
        let setup = SchemeSetup::sweep_point(SchemeKind::Combined, theta).with_noise(noise);
        let simulated = run_scheme(&setup, &Evaluation::Exact(TwirlBackend::Analytic))?;
        println!(
            "θ = {theta:.4}: predicted F = {:.10}, simulated F = {:.10}",
            predicted.fidelity, simulated.fidelity
        );
    }
    Ok(())
}
