//! Fidelity of the three recovery schemes over the measurement angle, exact and noisy.

use std::f64::consts::PI;

use scramble_recovery::schemes::{run_scheme, Evaluation, OutputNoise, SchemeKind, SchemeSetup};
use scramble_recovery::twirl::TwirlBackend;

fn main() -> scramble_recovery::error::Result<()> {
    let noise = OutputNoise { control: 0.02, aux: 0.02, target: 0.05 };
    println!("{:>9} {:>6} {:>10} {:>10} {:>10}", "scheme", "θ/π", "F", "F noisy", "P(+)");
    for scheme in SchemeKind::ALL {
        for i in 0..=4 {
            let theta = PI * i as f64 / 4.0;
            let setup = SchemeSetup::sweep_point(scheme, theta);
            let exact = run_scheme(&setup, &Evaluation::Exact(TwirlBackend::CliffordExact))?;
            let noisy = run_scheme(&setup.with_noise(noise), &Evaluation::Exact(TwirlBackend::CliffordExact))?;
            println!(
                "{:>9} {:>6.2} {:>10.6} {:>10.6} {:>10.6}",
                scheme.to_string(),
                theta / PI,
                exact.fidelity,
                noisy.fidelity,
                exact.success_probability
            );
        }
    }
    Ok(())
}
