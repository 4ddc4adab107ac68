//! Twirls a projective qubit measurement with every backend and prints the recovered state.

use scramble_recovery::channels::{projective_measurement_channel, MeasurementDirection};
use scramble_recovery::linalg::{DensityMatrix, SystemLayout};
use scramble_recovery::rng::RngStream;
use scramble_recovery::twirl::{twirl_output, TwirlBackend};

fn main() -> scramble_recovery::error::Result<()> {
    let layout = SystemLayout::new([("target", 2)])?;
    let measure_z = projective_measurement_channel(&MeasurementDirection::from_theta(0.0), &layout, "target")?;
    let input = DensityMatrix::basis(2, 0)?;
    for backend in [
        TwirlBackend::Analytic,
        TwirlBackend::CliffordExact,
        TwirlBackend::HaarMc { samples: 20_000, rng: RngStream::new(7) },
    ] {
        let r = twirl_output(&measure_z, &input, &backend)?;
        let m = r.output.matrix();
        println!(
            "{:>10}: p = {:.6}, <0|out|0> = {:.6}, |<0|out|1>| = {:.2e}",
            backend.label(),
            r.recovery_rate,
            m[(0, 0)].re,
            m[(0, 1)].norm()
        );
    }
    Ok(())
}
