//! Degree-9 Chebyshev interpolant of sin on [-3, 3] and its truncations.

use sosguard::poly::chebyshev_fit;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fit = chebyshev_fit(f64::sin, (-3.0, 3.0), 9)?;
    println!("power-basis coefficients:");
    for (e, c) in fit.coefficients().iter().enumerate() {
        println!("  x^{e}: {c:+.10e}");
    }
    let n = 10_000;
    let observed = (0..n)
        .map(|i| -3.0 + 6.0 * (i as f64 + 0.5) / n as f64)
        .map(|x| (fit.eval(x) - x.sin()).abs())
        .fold(0.0, f64::max);
    println!("remainder bound {:.3e}, observed on a fresh grid {:.3e}", fit.remainder_bound, observed);

    for deg in [3, 5, 7] {
        let t = fit.poly.truncate(deg);
        let err = |x: f64| (t.eval_unchecked(&[x]) - x.sin()).abs();
        let near = (0..=100).map(|i| err(-1.2 + 0.024 * i as f64)).fold(0.0, f64::max);
        println!("truncated to degree {deg}: max error on |x| <= 1.2 is {near:.3e}");
    }
    Ok(())
}
