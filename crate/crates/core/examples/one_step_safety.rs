//! Samples states in the safe set and random RL actions, filters them with
//! the SOS filter on the pendulum model, and checks the predicted next state.
//! The number of samples is the first argument.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sosguard::cbf::{filter_action, FilterConfig, FilterStatus};
use sosguard::pendulum::{nominal_polynomial_model, pendulum_barrier, PendulumParams, BARRIER_DOMAIN};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).and_then(|v| v.parse().ok()).unwrap_or(200);
    let model = nominal_polynomial_model(&PendulumParams::default(), 9)?;
    let dynamics = model.truncated(5)?;
    let spec = pendulum_barrier(&BARRIER_DOMAIN)?;
    let cfg = FilterConfig { local_radius: Some(vec![0.05, 0.2]), ..FilterConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut ok, mut sat, mut inf, mut bad) = (0, 0, 0, 0);
    let mut worst = f64::INFINITY;
    let start = std::time::Instant::now();
    for _ in 0..n {
        let s = [rng.random_range(-1.0..=1.0), rng.random_range(-3.0..=3.0)];
        let a_rl = rng.random_range(-15.0..=15.0);
        let r = filter_action(&spec, &dynamics, &s, &[a_rl], &cfg)?;
        match r.status {
            FilterStatus::SosOk => {
                ok += 1;
                let h = spec.h.evaluate(&dynamics.step(&s, &r.total_action)?)?;
                worst = worst.min(h);
                if h < -1e-6 {
                    bad += 1;
                }
            }
            FilterStatus::FallbackSaturate => sat += 1,
            FilterStatus::Infeasible => inf += 1,
        }
    }
    let per = start.elapsed().as_secs_f64() / n as f64;
    println!("sos_ok {ok}, fallback_saturate {sat}, infeasible {inf}");
    println!("certified steps leaving the safe set: {bad} (lowest next h {worst:.4})");
    println!("{:.1} ms per filter call", per * 1e3);
    Ok(())
}
