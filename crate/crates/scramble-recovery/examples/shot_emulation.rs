//! Finite-shot emulation of the measurement-direction scheme with readout errors.

use scramble_recovery::rng::RngStream;
use scramble_recovery::schemes::SchemeKind;
use scramble_recovery::shots::{run_emulated_experiment, ReadoutError, ShotPlan};

fn main() -> scramble_recovery::error::Result<()> {
    let flips = ReadoutError::new(0.05, 0.14)?;
    let plan = ShotPlan::clifford(2_000, 9, RngStream::new(2024))?.with_readout(vec![flips; 2]);
    for pt in run_emulated_experiment(SchemeKind::Mdd, &plan)? {
        println!(
            "θ = {:.4}: F = {:.4} [{:.4}, {:.4}] (ideal {:.4}), accepted {}/{}",
            pt.theta,
            pt.fidelity.value,
            pt.fidelity.ci_low,
            pt.fidelity.ci_high,
            pt.analytic.fidelity,
            pt.accepted_shots,
            pt.total_shots
        );
    }
    Ok(())
}
