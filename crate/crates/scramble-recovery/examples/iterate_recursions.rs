//! Recovery-rate recursions with their fixed points, checked against density-matrix layers.

use scramble_recovery::channels::computational_measurement_channel;
use scramble_recovery::iterative::{iterate, simulate_iteration_matrix, RecursionSpec, RecursionVariant};
use scramble_recovery::linalg::SystemLayout;
use scramble_recovery::twirl::TwirlBackend;

fn main() -> scramble_recovery::error::Result<()> {
    for variant in RecursionVariant::ALL {
        let spec = RecursionSpec::new(variant, 1.0 / 3.0, 2, 4, 8).with_noise(0.9);
        let trace = iterate(&spec)?;
        let last = trace.values.last().copied().unwrap_or(f64::NAN);
        let fixed: Vec<String> = trace.fixed_points.iter().map(|f| format!("{:.6} ({:?})", f.value, f.stability)).collect();
        println!("{:>11}: p after 8 steps = {last:.6}; fixed points {}", variant.to_string(), fixed.join(", "));
    }

    let target = computational_measurement_channel(&SystemLayout::new([("target", 2)])?, "target")?;
    let spec = RecursionSpec::new(RecursionVariant::Plain, 7.0 / 15.0, 2, 4, 4);
    let recursion = iterate(&spec)?;
    let simulated = simulate_iteration_matrix(&spec, &target, &TwirlBackend::Analytic)?;
    for (k, (r, s)) in recursion.values.iter().zip(&simulated.values).enumerate() {
        println!("plain layer {}: recursion {r:.12}, simulation {s:.12}", k + 1);
    }
    Ok(())
}
