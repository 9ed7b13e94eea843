//! Compares the true pendulum step with its polynomial model, with matching
//! and with mismatched parameters.

use sosguard::pendulum::{nominal_polynomial_model, step, PendulumParams, PendulumState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = PendulumParams::default();
    for (label, nominal) in [("same parameters", truth), ("m = l = 1.4", PendulumParams::with_mass_length(1.4, 1.4))] {
        let model = nominal_polynomial_model(&nominal, 9)?;
        let mut worst = [0.0f64; 2];
        for i in 0..=60 {
            for a in [-10.0, 0.0, 10.0] {
                let s = PendulumState::new(-1.2 + 0.04 * i as f64, 1.5);
                let (next, _) = step(s, a, &truth)?;
                let pred = model.dynamics.nominal_step(&s.to_vec(), &[a])?;
                worst[0] = worst[0].max((pred[0] - next.theta).abs());
                worst[1] = worst[1].max((pred[1] - next.theta_dot).abs());
            }
        }
        println!("{label}: max one-step error theta {:.2e}, theta_dot {:.2e}", worst[0], worst[1]);
    }

    let mut s = PendulumState::new(0.3, 0.0);
    for t in 0..10 {
        let (next, r) = step(s, 0.0, &truth)?;
        println!("t={t:2} theta {:+.4} theta_dot {:+.4} reward {r:.4}", next.theta, next.theta_dot);
        s = next;
    }
    Ok(())
}
