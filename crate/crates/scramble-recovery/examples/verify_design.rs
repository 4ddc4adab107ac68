//! Compares second moments of the Clifford, Pauli and sampled Haar ensembles.

use scramble_recovery::ensembles::{verify_2design, UnitaryEnsemble};
use scramble_recovery::rng::RngStream;

fn main() -> scramble_recovery::error::Result<()> {
    let ensembles = [
        ("clifford", UnitaryEnsemble::clifford_1q(), 1e-12),
        ("pauli", UnitaryEnsemble::pauli_1q(), 1e-12),
        ("haar:20000", UnitaryEnsemble::haar(2, 20_000, RngStream::new(11))?, 0.035),
    ];
    for (name, ens, tol) in ensembles {
        let r = verify_2design(&ens, 0, tol)?;
        println!(
            "{name:>10}: max deviation {:.3e} over {} monomials -> {}",
            r.max_deviation,
            r.monomials_checked,
            if r.passed { "2-design" } else { "not a 2-design" }
        );
    }
    Ok(())
}
