//! Gram-matrix certificates for a few textbook polynomials.

use sosguard::poly::Polynomial;
use sosguard::sdp::SolverConfig;
use sosguard::sos::{verify_sos, SosVerdict};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cases = [
        ("(x - 1)^2", Polynomial::from_exps(1, &[(&[2], 1.0), (&[1], -2.0), (&[0], 1.0)])),
        (
            "x^4 + 2 x^2 y^2 + y^4 + 1",
            Polynomial::from_exps(2, &[(&[4, 0], 1.0), (&[2, 2], 2.0), (&[0, 4], 1.0), (&[0, 0], 1.0)]),
        ),
        ("-1", Polynomial::constant(1, -1.0)),
        (
            "Motzkin x^4 y^2 + x^2 y^4 - 3 x^2 y^2 + 1",
            Polynomial::from_exps(2, &[(&[4, 2], 1.0), (&[2, 4], 1.0), (&[2, 2], -3.0), (&[0, 0], 1.0)]),
        ),
    ];
    for (name, p) in cases {
        match verify_sos(&p, &SolverConfig::default())? {
            SosVerdict::Certificate { basis, mismatch, min_eig, .. } => {
                println!(
                    "{name}: SOS, {} basis monomials, mismatch {mismatch:.1e}, min Gram eigenvalue {min_eig:.2e}",
                    basis.len()
                )
            }
            SosVerdict::Infeasible => println!("{name}: no SOS certificate"),
        }
    }
    Ok(())
}
