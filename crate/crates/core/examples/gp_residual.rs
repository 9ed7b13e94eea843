//! Learns the mismatch between the pendulum and a model with wrong mass and
//! length: residual targets, GP posterior, and its polynomial surrogate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sosguard::gp::{fit, polynomial_mean, residual_dataset, KernelConfig, Transition};
use sosguard::pendulum::{nominal_polynomial_model, reset, step, InitRange, PendulumParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = PendulumParams::default();
    let model = nominal_polynomial_model(&PendulumParams::with_mass_length(1.4, 1.4), 9)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut data = Vec::new();
    for _ in 0..4 {
        let mut s = reset(&mut rng, &InitRange::default());
        for _ in 0..60 {
            // no torque, so the residual is a function of the state alone
            let (next, _) = step(s, 0.0, &truth)?;
            data.push(Transition { state: s.to_vec(), action: vec![0.0], next_state: next.to_vec() });
            s = next;
            if s.theta.abs() > 1.2 {
                break;
            }
        }
    }
    let sets = residual_dataset(&data, &model.dynamics)?;
    let max_abs = |k: usize| sets[k].targets.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("{} transitions, max |residual| theta {:.2e}, theta_dot {:.2e}", data.len(), max_abs(0), max_abs(1));

    let kernel = KernelConfig::new(vec![0.5, 2.0], 0.04, 1e-6)?;
    let post = fit(&sets[1], &kernel)?;
    let domain = [(-1.2, 1.2), (-8.0, 8.0)];
    let surrogate = polynomial_mean(&post, &domain, 3)?;
    println!("cubic surrogate of the theta_dot residual: {}", surrogate.mean_poly);
    println!("surrogate error bound on the domain: {:.2e}", surrogate.fit_error_sup);

    for _ in 0..5 {
        let s = [rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0)];
        let (mean, var) = post.predict(&s)?;
        let (next, _) = step(sosguard::pendulum::PendulumState::new(s[0], s[1]), 0.0, &truth)?;
        let actual = next.theta_dot - model.dynamics.nominal_step(&s, &[0.0])?[1];
        println!("s = ({:+.2}, {:+.2}): GP {mean:+.5} ± {:.1e}, actual {actual:+.5}", s[0], s[1], var.sqrt());
    }
    Ok(())
}
